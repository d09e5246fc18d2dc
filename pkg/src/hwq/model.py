"""System parameters, macro states, and diffusion scaling.

A system is a pool of ``n_servers = ceil(r + a*sqrt(r))`` identical servers
fed by independent Poisson flows: class ``i`` arrives at rate ``lam_i * r``,
is served at rate ``mu_i``, and abandons from the queue at rate ``nu_i``.
The offered loads ``rho_i = lam_i / mu_i`` must sum to one, which places the
system in the Halfin-Whitt regime: utilization ``1 - a/(sqrt(r)+a)``.

Scaled observables center counts at ``rho_i * r`` and divide by ``sqrt(r)``.
Because ``n_servers`` is rounded up, the spare capacity actually realized is
``a_eff = (n_servers - sum_i rho_i*r)/sqrt(r) >= a``; all closed-form drift
identities in :mod:`hwq.verify` are exact with ``a_eff`` (and ``a_eff == a``
whenever ``r + a*sqrt(r)`` is an integer, e.g. perfect-square ``r`` with
integer ``a``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidRate, NonUnitLoad

LOAD_TOL = 1e-9


@dataclass(frozen=True)
class ClassParams:
    """Rates of one customer class. ``lam`` is per unit of the scale r."""

    lam: float
    mu: float
    nu: float = 0.0

    def validate(self) -> None:
        if not self.lam > 0.0:
            raise InvalidRate(f"arrival rate must be positive, got {self.lam}")
        if not self.mu > 0.0:
            raise InvalidRate(f"service rate must be positive, got {self.mu}")
        if self.nu < 0.0:
            raise InvalidRate(f"abandonment rate must be >= 0, got {self.nu}")

    @property
    def rho(self) -> float:
        return self.lam / self.mu


@dataclass(frozen=True)
class SystemConfig:
    """Validated system: classes, scale r, spare capacity a, server count.

    Immutable after construction; safe to share read-only across threads.
    Derived arrays are precomputed once because the simulators read them in
    tight loops.
    """

    classes: tuple[ClassParams, ...]
    r: float
    a: float
    n_servers: int
    # derived, filled in __post_init__
    arrival_rates: tuple[float, ...] = field(init=False, repr=False)
    mus: tuple[float, ...] = field(init=False, repr=False)
    nus: tuple[float, ...] = field(init=False, repr=False)
    rho: tuple[float, ...] = field(init=False, repr=False)
    rho_r: tuple[float, ...] = field(init=False, repr=False)
    rho_r_total: float = field(init=False, repr=False)
    sqrt_r: float = field(init=False, repr=False)
    a_eff: float = field(init=False, repr=False)
    lam_total: float = field(init=False, repr=False)
    mu_min: float = field(init=False, repr=False)
    mu_max: float = field(init=False, repr=False)
    nu_min: float = field(init=False, repr=False)
    nu_max: float = field(init=False, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "arrival_rates", tuple(c.lam * self.r for c in self.classes))
        set_(self, "mus", tuple(c.mu for c in self.classes))
        set_(self, "nus", tuple(c.nu for c in self.classes))
        set_(self, "rho", tuple(c.rho for c in self.classes))
        set_(self, "rho_r", tuple(c.rho * self.r for c in self.classes))
        set_(self, "rho_r_total", sum(c.rho * self.r for c in self.classes))
        set_(self, "sqrt_r", math.sqrt(self.r))
        set_(self, "a_eff", (self.n_servers - self.rho_r_total) / math.sqrt(self.r))
        set_(self, "lam_total", sum(c.lam for c in self.classes))
        set_(self, "mu_min", min(c.mu for c in self.classes))
        set_(self, "mu_max", max(c.mu for c in self.classes))
        set_(self, "nu_min", min(c.nu for c in self.classes))
        set_(self, "nu_max", max(c.nu for c in self.classes))

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def build_config(classes, r: float, a: float) -> SystemConfig:
    """Validate parameters and fix the server count ``ceil(r + a*sqrt(r))``.

    Raises :class:`InvalidRate` for out-of-range class rates and
    :class:`NonUnitLoad` when ``sum(lam_i/mu_i)`` strays from 1 by more than
    ``LOAD_TOL``.  The load condition is enforced rather than assumed: silent
    drift in the utilization would invalidate every downstream bound.
    """
    classes = tuple(classes)
    if not classes:
        raise InvalidRate("at least one customer class is required")
    for c in classes:
        c.validate()
    if r < 1.0:
        raise InvalidRate(f"scale r must be >= 1, got {r}")
    if not a > 0.0:
        raise InvalidRate(f"spare capacity a must be > 0, got {a}")
    load = sum(c.rho for c in classes)
    if abs(load - 1.0) > LOAD_TOL:
        raise NonUnitLoad(
            f"sum of offered loads must be 1 within {LOAD_TOL}, got {load!r} "
            f"(rho = {[c.rho for c in classes]!r})"
        )
    n_servers = math.ceil(r + a * math.sqrt(r))
    return SystemConfig(classes=classes, r=float(r), a=float(a), n_servers=n_servers)


def nominal_utilization(cfg: SystemConfig) -> float:
    """Offered work per server: ``sum_i lam_i*r/mu_i / n_servers``.

    Equals ``1 - a/(sqrt(r)+a)`` when ``r + a*sqrt(r)`` is an integer.
    """
    return cfg.rho_r_total / cfg.n_servers


@dataclass(frozen=True)
class MacroState:
    """Per-class counts in system (z) and in service (psi); q = z - psi."""

    z: tuple[int, ...]
    psi: tuple[int, ...]

    @property
    def q(self) -> tuple[int, ...]:
        return tuple(zi - pi for zi, pi in zip(self.z, self.psi))

    @property
    def z_total(self) -> int:
        return sum(self.z)


@dataclass(frozen=True)
class ScaledObservables:
    """Diffusion-scaled view of a macro state."""

    z_hat: tuple[float, ...]
    z_hat_total: float
    phi_hat: float
    q_hat: float
    z_hat_a: float


def scale_state(s: MacroState, cfg: SystemConfig) -> ScaledObservables:
    """Center counts at rho_i*r and divide by sqrt(r).

    ``phi_hat`` is the scaled workload ``sum_i z_hat_i / mu_i`` and
    ``z_hat_a = min(z_hat_total, a_eff)``.
    """
    inv = 1.0 / cfg.sqrt_r
    z_hat = tuple((zi - ri) * inv for zi, ri in zip(s.z, cfg.rho_r))
    z_hat_total = sum(z_hat)
    phi_hat = sum(zh / mu for zh, mu in zip(z_hat, cfg.mus))
    q_hat = sum(zi - pi for zi, pi in zip(s.z, s.psi)) * inv
    return ScaledObservables(
        z_hat=z_hat,
        z_hat_total=z_hat_total,
        phi_hat=phi_hat,
        q_hat=q_hat,
        z_hat_a=min(z_hat_total, cfg.a_eff),
    )


def validate_macro_state(s: MacroState, cfg: SystemConfig) -> list[str]:
    """Return every violated state invariant (empty list means valid)."""
    problems = []
    if len(s.z) != cfg.n_classes or len(s.psi) != cfg.n_classes:
        problems.append(
            f"state has {len(s.z)}/{len(s.psi)} components, expected {cfg.n_classes}"
        )
        return problems
    for i, (zi, pi) in enumerate(zip(s.z, s.psi)):
        if zi < 0:
            problems.append(f"z[{i}] = {zi} < 0")
        if pi < 0:
            problems.append(f"psi[{i}] = {pi} < 0")
        if pi > zi:
            problems.append(f"psi[{i}] = {pi} > z[{i}] = {zi}")
    total_z = sum(s.z)
    total_psi = sum(s.psi)
    expected = min(cfg.n_servers, total_z)
    if total_psi != expected:
        problems.append(
            f"non-idling broken: sum(psi) = {total_psi}, "
            f"min(N, sum(z)) = {expected}"
        )
    return problems


@dataclass(frozen=True)
class ScaledArrays:
    """Vectorized :class:`ScaledObservables` over an array of states.

    All entries are 1-d float arrays of length n_states except ``z_hat``
    which is (n_states, n_classes).
    """

    z_hat: np.ndarray
    z_hat_total: np.ndarray
    phi_hat: np.ndarray
    q_hat: np.ndarray
    z_hat_a: np.ndarray
    sum_z_hat_plus: np.ndarray
    sum_z_hat_minus: np.ndarray


def scale_arrays(Z: np.ndarray, PSI: np.ndarray, cfg: SystemConfig) -> ScaledArrays:
    """Scaled observables for ``Z``/``PSI`` of shape (n_states, n_classes)."""
    rho_r = np.asarray(cfg.rho_r)
    mus = np.asarray(cfg.mus)
    z_hat = (Z - rho_r) / cfg.sqrt_r
    z_hat_total = z_hat.sum(axis=1)
    phi_hat = (z_hat / mus).sum(axis=1)
    q_hat = (Z - PSI).sum(axis=1) / cfg.sqrt_r
    return ScaledArrays(
        z_hat=z_hat,
        z_hat_total=z_hat_total,
        phi_hat=phi_hat,
        q_hat=q_hat,
        z_hat_a=np.minimum(z_hat_total, cfg.a_eff),
        sum_z_hat_plus=np.maximum(z_hat, 0.0).sum(axis=1),
        sum_z_hat_minus=np.maximum(-z_hat, 0.0).sum(axis=1),
    )
