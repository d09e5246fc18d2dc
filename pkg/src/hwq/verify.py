"""Numerical verification of drift formulas, Lyapunov bounds, and r-sweeps.

Everything here reduces to finite sums evaluated exactly, so the inequality
checks run with a slack tolerance of ``1e-12 * scale`` per state: both sides
are short sums and near-zero slack is meaningful.

The closed-form drift of the scaled workload ``phi_hat = sum_i z_hat_i/mu_i``
is

    (A_bar phi_hat)(x) = -min(z_hat_total, a_eff) - sum_i (nu_i/mu_i) q_hat_i,

an exact per-state identity (each departure of class i moves phi_hat by
exactly 1/(mu_i sqrt(r))).  With no abandonment this is -min(z_hat, a_eff),
and the exponential Lyapunov function satisfies, for theta <= 1,

    A_bar exp(theta phi_hat) <= exp(theta phi_hat) *
        [-theta * min(z_hat, a_eff) + theta^2/2 * c1],

with c1 = (sum_i lam_i + (1+a) mu_max) / mu_min^2 * exp(1/mu_min).  With all
abandonment rates positive the drift is bracketed by

    -z_hat_a - c25 * sum z_hat_i^+   <=  A_bar phi_hat
    A_bar phi_hat  <=  -z_hat_a - c1' phi_hat^+ + c2 sum z_hat_i^- + c3,

where c1' = nu_min*mu_min/mu_max, c2 = nu_min/mu_max, c3 = c2 * a_eff,
c25 = nu_max/mu_min.  The checks below scan every enumerated state and
count violations (expected: zero).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisViolated, ThetaOutOfRange
from .exact import (
    SparseGenerator,
    abar_vector,
    build_generator,
    enumerate_states,
    expectation,
    stationary,
)
from .model import MacroState, SystemConfig, build_config, scale_arrays, scale_state
from .policy import FIFO
from .simulate import RngStream, batch_means_multi, default_warmup

SLACK_TOL = 1e-12


def default_truncation(cfg: SystemConfig) -> int:
    """Gaussian-scale tail margin: ceil(r + 12 sqrt(r)) plus the server count."""
    return math.ceil(cfg.r + 12.0 * math.sqrt(cfg.r)) + cfg.n_servers


def drift_phi(x: MacroState, cfg: SystemConfig) -> float:
    """Closed-form (A_bar phi_hat)(x); equals the transition sum exactly."""
    s = scale_state(x, cfg)
    aband = sum(
        cfg.nus[i] / cfg.mus[i] * (x.z[i] - x.psi[i]) for i in range(cfg.n_classes)
    ) / cfg.sqrt_r
    return -s.z_hat_a - aband


def drift_phi_arrays(Z: np.ndarray, PSI: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Vectorized :func:`drift_phi` over state arrays."""
    sa = scale_arrays(Z, PSI, cfg)
    ratio = np.asarray(cfg.nus) / np.asarray(cfg.mus)
    aband = ((Z - PSI) * ratio).sum(axis=1) / cfg.sqrt_r
    return -sa.z_hat_a - aband


def lyapunov_constant(cfg: SystemConfig) -> float:
    """c1 of the exponential-Lyapunov drift bound (valid for theta <= 1)."""
    if cfg.n_servers > cfg.r * (1.0 + cfg.a):
        # the (1+a) factor caps N/r; only violated at extreme rounding
        raise HypothesisViolated(
            f"n_servers = {cfg.n_servers} exceeds r*(1+a) = {cfg.r * (1 + cfg.a)}"
        )
    return (
        (cfg.lam_total + (1.0 + cfg.a) * cfg.mu_max)
        / cfg.mu_min ** 2
        * math.exp(1.0 / cfg.mu_min)
    )


@dataclass(frozen=True)
class DriftReport:
    """Per-state comparison of an operator value against a closed-form bound."""

    label: str
    n_states: int
    violations: int
    worst_slack: float  # min over states of (bound - value); >= -tol when clean
    value: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)
    slack: np.ndarray = field(repr=False)


def _one_sided(label: str, value: np.ndarray, bound: np.ndarray) -> DriftReport:
    slack = bound - value
    scale = np.maximum(1.0, np.maximum(np.abs(value), np.abs(bound)))
    violations = int((slack < -SLACK_TOL * scale).sum())
    return DriftReport(
        label=label,
        n_states=value.size,
        violations=violations,
        worst_slack=float(slack.min()),
        value=value,
        bound=bound,
        slack=slack,
    )


def _prepare(cfg, kind, K, gen):
    if gen is not None:
        return gen
    K = default_truncation(cfg) if K is None else K
    return build_generator(enumerate_states(cfg, kind, K))


@dataclass(frozen=True)
class DriftIdentityReport:
    n_states: int
    max_abs_err: float
    max_rel_err: float
    violations: int  # states beyond 1e-12 relative (floored) error


def drift_identity_check(cfg: SystemConfig, kind: str, K: int | None = None,
                         gen: SparseGenerator | None = None) -> DriftIdentityReport:
    """Compare the transition-sum drift of phi_hat with the closed form.

    Both are finite sums of the same terms, so they must agree to rounding
    at every state (the operator is evaluated without truncation).
    """
    gen = _prepare(cfg, kind, K, gen)
    abar = abar_vector(gen, lambda Z, PSI, c: scale_arrays(Z, PSI, c).phi_hat)
    closed = drift_phi_arrays(gen.idx.z, gen.idx.psi, cfg)
    err = np.abs(abar - closed)
    scale = np.maximum(1.0, np.maximum(np.abs(abar), np.abs(closed)))
    rel = err / scale
    return DriftIdentityReport(
        n_states=gen.idx.n_states,
        max_abs_err=float(err.max()),
        max_rel_err=float(rel.max()),
        violations=int((rel > 1e-12).sum()),
    )


def lyapunov_pointwise_check(cfg: SystemConfig, kind: str, theta: float,
                             K: int | None = None,
                             gen: SparseGenerator | None = None) -> DriftReport:
    """Exhaustive scan of the exponential-Lyapunov drift bound (nu == 0)."""
    if cfg.nu_max > 0.0:
        raise HypothesisViolated("the exponential drift bound is stated for nu == 0")
    if not 0.0 <= theta <= 1.0:
        raise ThetaOutOfRange(f"bound proved for theta in [0, 1], got {theta}")
    gen = _prepare(cfg, kind, K, gen)
    c1 = lyapunov_constant(cfg)
    sa = scale_arrays(gen.idx.z, gen.idx.psi, cfg)
    lhs = abar_vector(
        gen, lambda Z, PSI, c: np.exp(theta * scale_arrays(Z, PSI, c).phi_hat)
    )
    rhs = np.exp(theta * sa.phi_hat) * (-theta * sa.z_hat_a + 0.5 * theta * theta * c1)
    return _one_sided(f"lyapunov(theta={theta})", lhs, rhs)


@dataclass(frozen=True)
class DriftBoundsReport:
    upper: DriftReport
    lower: DriftReport

    @property
    def violations(self) -> int:
        return self.upper.violations + self.lower.violations


def drift_bounds_abandon_check(cfg: SystemConfig, kind: str, K: int | None = None,
                               gen: SparseGenerator | None = None) -> DriftBoundsReport:
    """Exhaustive two-sided drift bounds for systems with abandonment."""
    if cfg.nu_min <= 0.0:
        raise HypothesisViolated("abandonment drift bounds need nu_i > 0 for all i")
    gen = _prepare(cfg, kind, K, gen)
    sa = scale_arrays(gen.idx.z, gen.idx.psi, cfg)
    abar_phi = abar_vector(gen, lambda Z, PSI, c: scale_arrays(Z, PSI, c).phi_hat)
    c1 = cfg.nu_min * cfg.mu_min / cfg.mu_max
    c2 = cfg.nu_min / cfg.mu_max
    c3 = c2 * cfg.a_eff
    c25 = cfg.nu_max / cfg.mu_min
    phi_plus = np.maximum(sa.phi_hat, 0.0)
    upper_bound = -sa.z_hat_a - c1 * phi_plus + c2 * sa.sum_z_hat_minus + c3
    lower_bound = -sa.z_hat_a - c25 * sa.sum_z_hat_plus
    return DriftBoundsReport(
        upper=_one_sided("abandon_upper", abar_phi, upper_bound),
        # flip signs to reuse the one-sided report: lower <= value
        lower=_one_sided("abandon_lower", -abar_phi, -lower_bound),
    )


@dataclass(frozen=True)
class IdentityRow:
    functional: str
    residual: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.residual <= self.bound


@dataclass(frozen=True)
class GeneratorIdentityReport:
    rows: tuple[IdentityRow, ...]
    deficit: float
    solver_residual: float

    @property
    def all_ok(self) -> bool:
        return all(row.ok for row in self.rows)


def generator_identity_check(cfg: SystemConfig, kind: str, theta: float = 0.2,
                             k: float = 5.0, K: int | None = None,
                             gen: SparseGenerator | None = None) -> GeneratorIdentityReport:
    """|E_pi[A_bar F]| for exponential test functions of the scaled workload.

    F runs over exp(theta*phi_hat_(k)), exp(-theta*phi_hat), and
    exp(theta*phi_hat_(k)^2) with phi_hat_(k) = min(phi_hat, k).  Stationarity
    makes each expectation zero; the reported residual must stay within
    1e-8 plus the truncation deficit.
    """
    gen = _prepare(cfg, kind, K, gen)
    sv = stationary(gen)
    bound = 1e-8 + sv.deficit_estimate

    def phi(Z, PSI, c):
        return scale_arrays(Z, PSI, c).phi_hat

    fs = (
        (f"exp({theta}*min(phi,{k}))",
         lambda Z, PSI, c: np.exp(theta * np.minimum(phi(Z, PSI, c), k))),
        (f"exp(-{theta}*phi)",
         lambda Z, PSI, c: np.exp(-theta * phi(Z, PSI, c))),
        (f"exp({theta}*min(phi,{k})^2)",
         lambda Z, PSI, c: np.exp(theta * np.minimum(phi(Z, PSI, c), k) ** 2)),
    )
    rows = tuple(
        IdentityRow(
            functional=label,
            residual=abs(float(sv.pi @ abar_vector(gen, f))),
            bound=bound,
        )
        for label, f in fs
    )
    return GeneratorIdentityReport(
        rows=rows, deficit=sv.deficit_estimate, solver_residual=sv.residual
    )


# ---------------------------------------------------------------------------
# Steady-state functionals shared by the exact and simulation paths


_SPEC_PARAMS = {
    "exp_sum_zhat_plus": ("theta",),
    "exp_sum_zhat_minus": ("theta",),
    "exp_zhat_plus_sq_trunc": ("theta", "k"),
    "qhat_tail": ("x",),
    "z_total": (),
    "psi_share": (),
}


@dataclass(frozen=True)
class FunctionalSpec:
    """A steady-state functional identified by id plus parameters.

    Ids: ``exp_sum_zhat_plus`` / ``exp_sum_zhat_minus`` (need theta),
    ``exp_zhat_plus_sq_trunc`` (theta and k), ``qhat_tail`` (x),
    ``z_total``, ``psi_share``.
    """

    fid: str
    theta: float | None = None
    k: float | None = None
    x: float | None = None

    def __post_init__(self):
        if self.fid not in _SPEC_PARAMS:
            raise ValueError(
                f"unknown functional id {self.fid!r}; valid: {sorted(_SPEC_PARAMS)}"
            )
        missing = [p for p in _SPEC_PARAMS[self.fid] if getattr(self, p) is None]
        if missing:
            raise ValueError(f"functional {self.fid!r} needs {missing}")

    def label(self) -> str:
        parts = [self.fid]
        for name in ("theta", "k", "x"):
            v = getattr(self, name)
            if v is not None:
                parts.append(f"{name}={v:g}")
        return "[" + ",".join(parts) + "]" if len(parts) > 1 else self.fid

    def scalar(self, cfg: SystemConfig):
        """Fast per-event callable f(z, psi, cfg) bound to this config."""
        rho_r = cfg.rho_r
        inv = 1.0 / cfg.sqrt_r
        nc = cfg.n_classes
        rng_nc = range(nc)
        theta, k, x = self.theta, self.k, self.x
        if self.fid == "exp_sum_zhat_plus":
            def f(z, psi, c):
                s = 0.0
                for i in rng_nc:
                    d = z[i] - rho_r[i]
                    if d > 0.0:
                        s += d
                return math.exp(theta * s * inv)
            return f
        if self.fid == "exp_sum_zhat_minus":
            def f(z, psi, c):
                s = 0.0
                for i in rng_nc:
                    d = rho_r[i] - z[i]
                    if d > 0.0:
                        s += d
                return math.exp(theta * s * inv)
            return f
        if self.fid == "exp_zhat_plus_sq_trunc":
            mus = cfg.mus
            rho_r_total = cfg.rho_r_total
            def f(z, psi, c):
                phi = 0.0
                for i in rng_nc:
                    phi += (z[i] - rho_r[i]) / mus[i]
                phi *= inv
                if phi > k:
                    return 0.0
                zh = (sum(z) - rho_r_total) * inv
                return math.exp(theta * zh * zh) if zh > 0.0 else 1.0
            return f
        if self.fid == "qhat_tail":
            def f(z, psi, c):
                return 1.0 if (sum(z) - sum(psi)) * inv >= x else 0.0
            return f
        if self.fid == "z_total":
            return lambda z, psi, c: float(sum(z))
        n_srv = cfg.n_servers  # psi_share
        return lambda z, psi, c: sum(psi) / n_srv

    def vector(self, cfg: SystemConfig):
        """Vectorized twin of :meth:`scalar` over state arrays."""
        theta, k, x = self.theta, self.k, self.x
        if self.fid == "exp_sum_zhat_plus":
            return lambda Z, PSI, c: np.exp(
                theta * scale_arrays(Z, PSI, c).sum_z_hat_plus
            )
        if self.fid == "exp_sum_zhat_minus":
            return lambda Z, PSI, c: np.exp(
                theta * scale_arrays(Z, PSI, c).sum_z_hat_minus
            )
        if self.fid == "exp_zhat_plus_sq_trunc":
            def f(Z, PSI, c):
                sa = scale_arrays(Z, PSI, c)
                zp = np.maximum(sa.z_hat_total, 0.0)
                return np.exp(theta * zp * zp) * (sa.phi_hat <= k)
            return f
        if self.fid == "qhat_tail":
            return lambda Z, PSI, c: (scale_arrays(Z, PSI, c).q_hat >= x).astype(float)
        if self.fid == "z_total":
            return lambda Z, PSI, c: Z.sum(axis=1).astype(float)
        return lambda Z, PSI, c: PSI.sum(axis=1) / c.n_servers  # psi_share


@dataclass(frozen=True)
class SweepRow:
    r: float
    theta: float | None
    functional: str
    estimate: float
    half_width: float
    method: str


def sweep(classes, a: float, r_list, kind: str, specs, seed: int,
          estimator: str = "auto", K: int | None = None,
          exact_max_states: int = 25_000, n_batches: int = 20,
          events_per_batch: int = 50_000,
          warmup_events: int | None = None) -> list[SweepRow]:
    """One row per (r, functional): exact values where the chain is solvable,
    batch-means estimates otherwise.

    ``estimator`` is "auto", "exact", or "batch_means".  Replication k of the
    sweep uses stream (seed, k) where k is the position of r in ``r_list``,
    so rows are reproducible independent of execution order.
    """
    specs = list(specs)
    rows: list[SweepRow] = []
    for pos, r in enumerate(r_list):
        cfg = build_config(classes, r, a)
        idx = None
        use_exact = estimator == "exact"
        if estimator == "auto" and kind != FIFO:
            idx = enumerate_states(cfg, kind, K or default_truncation(cfg))
            use_exact = idx.n_states <= exact_max_states
        if use_exact:
            if kind == FIFO:
                raise ValueError("no exact solve for FIFO; use batch_means")
            if idx is None:
                idx = enumerate_states(cfg, kind, K or default_truncation(cfg))
            gen = build_generator(idx)
            sv = stationary(gen)
            for spec in specs:
                vals = spec.vector(cfg)(gen.idx.z, gen.idx.psi, cfg)
                rows.append(SweepRow(
                    r=r, theta=spec.theta, functional=spec.label(),
                    estimate=expectation(sv.pi, vals), half_width=0.0,
                    method="exact",
                ))
        else:
            warm = default_warmup(cfg) if warmup_events is None else warmup_events
            fns = {spec.label(): spec.scalar(cfg) for spec in specs}
            ests = batch_means_multi(
                cfg, kind, fns, n_batches, events_per_batch, warm,
                RngStream(seed, pos),
            )
            for spec in specs:
                e = ests[spec.label()]
                rows.append(SweepRow(
                    r=r, theta=spec.theta, functional=spec.label(),
                    estimate=e.value, half_width=e.half_width,
                    method="batch_means",
                ))
    return rows


def fit_log_slope(points) -> tuple[float, float]:
    """Weighted LS slope of log(estimate) against log(r).

    ``points`` is an iterable of (r, estimate, half_width).  Returns
    (slope, standard_error); the no-growth rendering of a tightness claim is
    |slope| <= 1.96 * se.
    """
    pts = list(points)
    if len(pts) < 2:
        raise ValueError("need at least two sweep points for a slope")
    xs = np.array([math.log(p[0]) for p in pts])
    ys = np.array([math.log(p[1]) for p in pts])
    sigma = np.array([max(p[2] / (1.96 * p[1]), 1e-12) for p in pts])
    w = 1.0 / sigma ** 2
    xbar = (w * xs).sum() / w.sum()
    sxx = (w * (xs - xbar) ** 2).sum()
    slope = (w * (xs - xbar) * ys).sum() / sxx
    return float(slope), float(1.0 / math.sqrt(sxx))


def no_growth(points, z: float = 1.96) -> bool:
    """True when the fitted log-log slope is statistically indistinguishable
    from zero."""
    slope, se = fit_log_slope(points)
    return abs(slope) <= z * se
