"""Truncated generators, stationary solves, and Poisson closed forms.

The detailed chains of the two priority policies have finitely many states
per population level, so the state space truncated at ``sum(z) <= K`` can be
enumerated outright: preemptive priority needs only the count vector z (the
allocation is a function of z), non-preemptive priority needs (z, psi)
pairs.  FIFO's sequence-valued chain is not finitely parameterized per level
in a tractable way and is excluded.

Truncation drops arrival transitions out of the top level, which keeps row
sums at zero and yields a proper chain; the neglected stationary mass is
bounded by a geometric argument and reported.  The operator application
``abar_apply`` does NOT truncate: it evaluates the test function at target
states beyond K as well, so pointwise drift identities are exact at every
indexed state, boundary included.

Stationary solves: GTH elimination (subtraction-free, componentwise stable)
for small systems, uniformized power iteration above the cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.special import gammaln

from .errors import (
    NotConverged,
    Reducible,
    ThetaOutOfRange,
    TruncationTooSmall,
    Unsupported,
)
from .model import MacroState, SystemConfig
from .policy import NONPREEMPTIVE, PREEMPTIVE, QUEUE, SERVICE, init_state

GTH_MAX_STATES = 20_000


@dataclass(frozen=True)
class StateIndex:
    """Bijection between detailed states with sum(z) <= K and dense indices."""

    cfg: SystemConfig
    kind: str
    K: int
    z: np.ndarray  # (n_states, n_classes) int64
    psi: np.ndarray  # (n_states, n_classes) int64
    lookup: dict

    @property
    def n_states(self) -> int:
        return self.z.shape[0]

    def key(self, z, psi=None):
        if self.kind == PREEMPTIVE:
            return tuple(z)
        return tuple(z), tuple(psi)

    def index_of(self, z, psi=None) -> int:
        return self.lookup[self.key(z, psi)]

    def state(self, i: int) -> MacroState:
        return MacroState(z=tuple(int(v) for v in self.z[i]),
                          psi=tuple(int(v) for v in self.psi[i]))


def _level_vectors(n_classes: int, total: int):
    """All nonnegative integer vectors of the given length summing to total."""
    if n_classes == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _level_vectors(n_classes - 1, total - first):
            yield (first,) + rest


def _allocations(z, need: int):
    """All psi with 0 <= psi_i <= z_i and sum(psi) == need."""
    if len(z) == 1:
        if 0 <= need <= z[0]:
            yield (need,)
        return
    tail_cap = sum(z[1:])
    lo = max(0, need - tail_cap)
    hi = min(z[0], need)
    for first in range(lo, hi + 1):
        for rest in _allocations(z[1:], need - first):
            yield (first,) + rest


def _priority_alloc(z, n_servers: int):
    """Unique allocation serving higher class indices first."""
    rem = n_servers
    psi = [0] * len(z)
    for i in range(len(z) - 1, -1, -1):
        s = min(z[i], rem)
        psi[i] = s
        rem -= s
    return tuple(psi)


def enumerate_states(cfg: SystemConfig, kind: str, K: int) -> StateIndex:
    """Enumerate every valid detailed state with ``sum(z) <= K``."""
    if kind not in (PREEMPTIVE, NONPREEMPTIVE):
        raise Unsupported(
            f"exact solve supports priority policies only, not {kind!r}"
        )
    if K < cfg.n_servers:
        raise TruncationTooSmall(
            f"K = {K} must be at least n_servers = {cfg.n_servers}"
        )
    nc = cfg.n_classes
    zs = []
    psis = []
    for level in range(K + 1):
        for z in _level_vectors(nc, level):
            if kind == PREEMPTIVE:
                zs.append(z)
                psis.append(_priority_alloc(z, cfg.n_servers))
            else:
                need = min(cfg.n_servers, level)
                for psi in _allocations(z, need):
                    zs.append(z)
                    psis.append(psi)
    Z = np.array(zs, dtype=np.int64)
    PSI = np.array(psis, dtype=np.int64)
    if kind == PREEMPTIVE:
        lookup = {z: i for i, z in enumerate(zs)}
    else:
        lookup = {(z, p): i for i, (z, p) in enumerate(zip(zs, psis))}
    return StateIndex(cfg=cfg, kind=kind, K=K, z=Z, psi=PSI, lookup=lookup)


@dataclass(frozen=True)
class SparseGenerator:
    """Truncated generator plus the untruncated transition table.

    ``Q`` holds the kept transitions with diagonal = -(row sum), so every
    row sums to zero.  The flat arrays (src, rate, dst, dst_z, dst_psi) list
    ALL transitions of the original chain out of indexed states, including
    arrivals that leave the truncated set (dst == -1); ``row_ptr`` slices
    them per source state.  Boundary rows (those with a dropped arrival) are
    flagged, with the dropped rate recorded.
    """

    idx: StateIndex
    Q: sparse.csr_matrix
    src: np.ndarray
    rate: np.ndarray
    dst: np.ndarray
    dst_z: np.ndarray
    dst_psi: np.ndarray
    row_ptr: np.ndarray
    boundary_mask: np.ndarray
    dropped_rate: np.ndarray
    max_exit_rate: float


def build_generator(idx: StateIndex) -> SparseGenerator:
    """Assemble transition rates by replaying the policy operations.

    Targets are produced by the same :mod:`hwq.policy` code that drives the
    simulators, so the exact chain and the simulated chain cannot drift
    apart.
    """
    cfg = idx.cfg
    nc = cfg.n_classes
    n = idx.n_states
    scratch = init_state(cfg, idx.kind)
    src_l: list[int] = []
    rate_l: list[float] = []
    dst_l: list[int] = []
    dst_z_l: list[tuple] = []
    dst_psi_l: list[tuple] = []
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    lookup = idx.lookup
    preemptive = idx.kind == PREEMPTIVE

    def load(i):
        if preemptive:
            scratch.set_counts(idx.z[i])
        else:
            scratch.set_counts(idx.z[i], idx.psi[i])

    def emit(i, rate, state):
        zt = tuple(state.z)
        pt = tuple(state.psi)
        key = zt if preemptive else (zt, pt)
        src_l.append(i)
        rate_l.append(rate)
        dst_l.append(lookup.get(key, -1))
        dst_z_l.append(zt)
        dst_psi_l.append(pt)

    for i in range(n):
        z_row = idx.z[i]
        psi_row = idx.psi[i]
        level = int(z_row.sum())
        for cls in range(nc):
            load(i)
            scratch.apply_arrival(cls)
            emit(i, cfg.arrival_rates[cls], scratch)
        for cls in range(nc):
            p = int(psi_row[cls])
            if p > 0:
                load(i)
                scratch.apply_departure(cls, SERVICE)
                emit(i, cfg.mus[cls] * p, scratch)
            q = int(z_row[cls]) - p
            if q > 0 and cfg.nus[cls] > 0.0:
                load(i)
                scratch.apply_departure(cls, QUEUE)
                emit(i, cfg.nus[cls] * q, scratch)
        row_ptr[i + 1] = len(src_l)
        if level < idx.K and any(d < 0 for d in dst_l[row_ptr[i]:]):
            raise AssertionError(f"interior state {i} produced an unindexed target")

    src = np.array(src_l, dtype=np.int64)
    rate = np.array(rate_l, dtype=np.float64)
    dst = np.array(dst_l, dtype=np.int64)
    dst_z = np.array(dst_z_l, dtype=np.int64)
    dst_psi = np.array(dst_psi_l, dtype=np.int64)

    kept = dst >= 0
    off = sparse.coo_matrix(
        (rate[kept], (src[kept], dst[kept])), shape=(n, n)
    ).tocsr()
    exit_rates = np.asarray(off.sum(axis=1)).ravel()
    Q = (off + sparse.diags(-exit_rates)).tocsr()

    dropped = np.zeros(n)
    np.add.at(dropped, src[~kept], rate[~kept])
    return SparseGenerator(
        idx=idx,
        Q=Q,
        src=src,
        rate=rate,
        dst=dst,
        dst_z=dst_z,
        dst_psi=dst_psi,
        row_ptr=row_ptr,
        boundary_mask=dropped > 0.0,
        dropped_rate=dropped,
        max_exit_rate=float(exit_rates.max() + dropped.max()),
    )


@dataclass(frozen=True)
class StationaryVector:
    """Stationary distribution of the truncated chain."""

    pi: np.ndarray
    residual: float  # max |pi @ Q|
    method: str  # "gth" | "power"
    iterations: int
    deficit_estimate: float


def _gth_dense(A: np.ndarray) -> np.ndarray:
    """GTH elimination on a dense off-diagonal rate matrix.

    ``A`` is consumed.  Elimination runs top state down; each step is a BLAS
    rank-1 update restricted to the leading columns (an F-contiguous block),
    with the update column zero-padded so rows >= k stay untouched.
    """
    from scipy.linalg.blas import dger

    n = A.shape[0]
    if n == 1:
        return np.ones(1)
    A = np.asfortranarray(A)
    S = np.empty(n)
    col = np.empty(n)
    for k in range(n - 1, 0, -1):
        row = np.ascontiguousarray(A[k, :k])
        s = row.sum()
        if s <= 0.0:
            raise Reducible(f"state {k} cannot reach lower-numbered states")
        S[k] = s
        col[:k] = A[:k, k]
        col[:k] /= s
        col[k:] = 0.0
        dger(1.0, col, row, a=A[:, :k], overwrite_a=1)
    pi = np.empty(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = (pi[:k] @ A[:k, k]) / S[k]
    return pi / pi.sum()


def _power_iteration(Q: sparse.csr_matrix, max_exit_rate: float,
                     tol: float, max_iters: int):
    """Uniformized power iteration: pi <- pi (I + Q/Lam)."""
    n = Q.shape[0]
    lam = 1.02 * max_exit_rate
    QT = Q.T.tocsr()
    pi = np.full(n, 1.0 / n)
    check_every = 50
    for it in range(1, max_iters + 1):
        pi = pi + (QT @ pi) / lam
        if it % check_every == 0:
            np.maximum(pi, 0.0, out=pi)
            pi /= pi.sum()
            resid = float(np.abs(QT @ pi).max())
            if resid <= tol:
                return pi, it, resid
    raise NotConverged(
        f"power iteration did not reach residual {tol:g} in {max_iters} steps"
    )


def _check_irreducible(Q: sparse.csr_matrix) -> None:
    n_comp, _ = csgraph.connected_components(
        Q, directed=True, connection="strong"
    )
    if n_comp != 1:
        raise Reducible(f"truncated chain has {n_comp} strongly connected components")


def _deficit_estimate(gen: SparseGenerator, pi: np.ndarray) -> float:
    """Geometric bound on the stationary mass lost to truncation.

    Mass beyond level K is at most (boundary mass) * ratio/(1-ratio) where
    ratio compares the dropped arrival rate against the slowest departure
    rate on the boundary.
    """
    b = gen.boundary_mask
    if not b.any():
        return 0.0
    boundary_mass = float(pi[b].sum())
    if boundary_mass == 0.0:
        return 0.0
    exit_down = np.asarray(gen.Q[b].multiply(gen.Q[b] > 0).sum(axis=1)).ravel()
    d_min = float(exit_down.min())
    lam_drop = float(gen.dropped_rate[b].max())
    if d_min <= lam_drop:
        return float("inf")
    ratio = lam_drop / d_min
    return boundary_mass * ratio / (1.0 - ratio)


def stationary(gen: SparseGenerator, method: str = "auto", tol_rel: float = 1e-13,
               max_iters: int = 2_000_000,
               gth_max_states: int = GTH_MAX_STATES) -> StationaryVector:
    """Solve pi Q = 0, sum(pi) = 1 on the truncated set.

    ``auto`` picks GTH up to ``gth_max_states`` states and uniformized power
    iteration above.  The result is checked against the residual contract
    ``max|pi Q| <= 1e-10 * max exit rate``.
    """
    n = gen.idx.n_states
    _check_irreducible(gen.Q)
    tol = tol_rel * gen.max_exit_rate
    if method == "auto":
        method = "gth" if n <= gth_max_states else "power"
    if method == "gth":
        A = gen.Q.toarray()
        np.fill_diagonal(A, 0.0)
        pi = _gth_dense(A)
        iterations = 0
    elif method == "power":
        pi, iterations, _ = _power_iteration(gen.Q, gen.max_exit_rate, tol, max_iters)
    else:
        raise ValueError(f"unknown method {method!r}")
    residual = float(np.abs(gen.Q.T @ pi).max())
    if residual > 1e-10 * gen.max_exit_rate:
        raise NotConverged(
            f"residual {residual:g} exceeds 1e-10 * max rate "
            f"({1e-10 * gen.max_exit_rate:g})"
        )
    return StationaryVector(
        pi=pi,
        residual=residual,
        method=method,
        iterations=iterations,
        deficit_estimate=_deficit_estimate(gen, pi),
    )


def abar_vector(gen: SparseGenerator, f_vec) -> np.ndarray:
    """Apply the rate operator to a test function, untruncated.

    ``f_vec(Z, PSI, cfg)`` must map state arrays to a value array.  Returns
    ``(A_bar F)(x)`` for every indexed state x, evaluating F at target
    states beyond the truncation as well, so the result agrees with the
    operator of the original (untruncated) chain everywhere.
    """
    vals_src = np.asarray(f_vec(gen.idx.z, gen.idx.psi, gen.idx.cfg), dtype=float)
    vals_dst = np.asarray(f_vec(gen.dst_z, gen.dst_psi, gen.idx.cfg), dtype=float)
    contrib = gen.rate * (vals_dst - vals_src[gen.src])
    return np.bincount(gen.src, weights=contrib, minlength=gen.idx.n_states)


def abar_apply(F, x: MacroState, gen: SparseGenerator) -> float:
    """(A_bar F)(x) = sum over out-transitions of rate * (F(y) - F(x)).

    ``F`` takes (MacroState, cfg).  ``x`` must be an indexed state; targets
    may lie beyond the truncation.
    """
    if gen.idx.kind == PREEMPTIVE:
        i = gen.idx.index_of(x.z)
    else:
        i = gen.idx.index_of(x.z, x.psi)
    cfg = gen.idx.cfg
    fx = F(x, cfg)
    lo, hi = gen.row_ptr[i], gen.row_ptr[i + 1]
    total = 0.0
    for t in range(lo, hi):
        y = MacroState(z=tuple(int(v) for v in gen.dst_z[t]),
                       psi=tuple(int(v) for v in gen.dst_psi[t]))
        total += gen.rate[t] * (F(y, cfg) - fx)
    return total


def expectation(pi: np.ndarray, values: np.ndarray) -> float:
    """E_pi[F] for per-state values."""
    return float(pi @ np.asarray(values, dtype=float))


def generator_identity(gen: SparseGenerator, pi: np.ndarray, f_vec) -> float:
    """Residual |E_pi[A_bar F]|; zero in exact arithmetic for admissible F."""
    return abs(float(pi @ abar_vector(gen, f_vec)))


# ---------------------------------------------------------------------------
# Poisson closed forms


def poisson_logpmf(p: float, n) -> np.ndarray:
    """log P(H = n) for H ~ Poisson(p), stable for p up to 1e4 and beyond.

    Accurate to ~1e-11 relative at p ~ 1e4 (three ~1e5-magnitude terms
    cancel); use :func:`poisson_pmf` where tighter accuracy matters.
    """
    n_arr = np.asarray(n, dtype=float)
    return n_arr * math.log(p) - p - gammaln(n_arr + 1.0)


def _log_pmf_anchor(p: float, m: int) -> float:
    # the cancellation of m*log(p) - p - lgamma(m+1) loses ~5 digits at
    # p ~ 1e4 in float64; evaluate the anchor in extended precision
    import mpmath

    with mpmath.workdps(30):
        return float(m * mpmath.log(p) - p - mpmath.loggamma(m + 1))


def _pmf_range(p: float, n_max: int) -> np.ndarray:
    """pmf on 0..n_max: high-precision anchor at the mode, then the exact
    recurrence h_{n+1} = h_n * p/(n+1) outward (underflows to 0 harmlessly)."""
    m = min(int(math.floor(p)), n_max)
    h = np.empty(n_max + 1)
    hm = math.exp(_log_pmf_anchor(p, m))
    h[m] = hm
    if m > 0:
        h[m - 1 :: -1] = hm * np.cumprod(np.arange(m, 0, -1, dtype=float) / p)
    if m < n_max:
        h[m + 1 :] = hm * np.cumprod(p / np.arange(m + 1, n_max + 1, dtype=float))
    return h


def poisson_pmf(p: float, n) -> np.ndarray:
    """P(H = n) for H ~ Poisson(p); sums to 1 within 1e-12 out to p + 12*sqrt(p)."""
    if p <= 0.0:
        raise ValueError(f"Poisson mean must be positive, got {p}")
    n_arr = np.asarray(n, dtype=np.int64)
    h = _pmf_range(p, int(n_arr.max()))
    out = h[n_arr]
    return float(out) if np.ndim(n) == 0 else out


def poisson_bound_scan(p: float) -> float:
    """Minimal C with pmf(n) <= C * p^{-1/2} * exp(-(n-p)^2 / (2p)) on n <= p."""
    if p <= 0.0:
        raise ValueError(f"Poisson mean must be positive, got {p}")
    ns = np.arange(0, math.floor(p) + 1, dtype=float)
    log_ratio = poisson_logpmf(p, ns) + 0.5 * math.log(p) + (ns - p) ** 2 / (2.0 * p)
    return float(np.exp(log_ratio.max()))


def scaled_poisson_mgf(theta: float, rho: float, r: float) -> float:
    """E exp(theta * (G - rho*r)/sqrt(r)) for G ~ Poisson(rho*r), closed form."""
    if theta < 0.0:
        raise ThetaOutOfRange(f"theta must be >= 0, got {theta}")
    sr = math.sqrt(r)
    return math.exp(-theta * rho * sr - rho * r * (1.0 - math.exp(theta / sr)))


def negpart_square_mgf(theta: float, p: float) -> float:
    """E exp(theta * ((H - p)^-)^2 / p) for H ~ Poisson(p), by summation.

    Terms with n >= p contribute the factor 1, so only n < p is summed.
    Requires theta < 1/2: that is the regime where the value stays bounded
    as p grows (for fixed p any theta would give a finite sum).
    """
    if not 0.0 <= theta < 0.5:
        raise ThetaOutOfRange(f"need 0 <= theta < 1/2, got {theta}")
    ns = np.arange(0, math.ceil(p), dtype=float)  # all n < p
    log_terms = poisson_logpmf(p, ns) + theta * (p - ns) ** 2 / p
    lower = float(np.exp(log_terms).sum())
    upper_mass = 1.0 - float(np.exp(poisson_logpmf(p, ns)).sum())
    return lower + upper_mass


def negpart_square_bound(theta: float, p: float, C: float | None = None) -> float:
    """Integral-comparison bound on :func:`negpart_square_mgf`.

    ``1 + C/sqrt(p) + C * integral_{-inf}^0 exp(-(1/2-theta) xi^2) dxi`` with
    C from :func:`poisson_bound_scan` unless supplied.
    """
    if not 0.0 <= theta < 0.5:
        raise ThetaOutOfRange(f"need 0 <= theta < 1/2, got {theta}")
    if C is None:
        C = poisson_bound_scan(p)
    integral = 0.5 * math.sqrt(math.pi / (0.5 - theta))
    return 1.0 + C / math.sqrt(p) + C * integral
