"""Joint-chain simulators realizing two sample-path comparisons.

Infinite-server comparison (needs nu_i <= mu_i): alongside the primary chain
run per-class counters G_i representing an M/M/infinity system fed by the
same arrivals, with each G-customer matched to a distinct live primary
customer.  Rates split per class as

* shared death  mu_i*m_s + nu_i*m_q   (kills a matched pair: primary service
  completion for an in-service partner, abandonment for a queued partner),
* G-only death  (mu_i - nu_i)*m_q     (queued partner survives, unmatched),
* Z-only death  mu_i*(psi_i - m_s) + nu_i*(q_i - m_q),
* shared arrival lam_i*r,

where m_s = min(G_i, psi_i) and m_q = G_i - m_s (matching is re-maximized
toward in-service partners after every event; rates depend only on counts,
so any matching rule preserves the ordering).  The G marginal dies at
mu_i*G_i total and the primary marginal keeps its own law exactly, while
G_i(t) <= Z_i(t) holds pathwise.

Monotone comparison: given primary abandonment rates nu and modified rates
nu' <= nu, a shadow count vector Z' >= Z evolves by copying primary arrivals,
by thinning primary departures (on a class-j departure the shadow keeps its
customer with probability p = Q_j (nu_j - nu'_j) / (nu_j Q_j + mu_j Psi_j),
written in the cancelled form so nu_j = 0 is fine), and by shadow-only
departures at rate nu'_j (Q'_j - Q_j) + mu_j (Psi'_j - Psi_j).  The shadow
allocation mirrors the primary's servers first and fills the remainder by
ascending class index, which keeps Psi_i <= Psi'_i and the shadow non-idling.

Both runners raise :class:`OrderingViolation` the moment an ordering fails;
that never happens by construction, so a raise means an implementation bug.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _stats

from .errors import DegenerateState, HypothesisViolated, OrderingViolation
from .exact import poisson_pmf
from .model import SystemConfig
from .policy import QUEUE, SERVICE, init_state
from .simulate import RngStream


@dataclass(frozen=True)
class InfServerJointState:
    """Primary policy state plus matched infinite-server counters.

    Each G-customer of class i is matched to a distinct live primary
    customer, either in service (``matched_in_service``) or queued
    (``matched_in_queue``); G_i is their sum.  Any matching with
    m_s <= psi and m_q <= q is admissible; the coupled runner re-maximizes
    m_s after every event (see :func:`InfServerJointState.from_counts`).
    """

    primary: object
    matched_in_service: tuple[int, ...]
    matched_in_queue: tuple[int, ...]

    def __post_init__(self):
        psi = self.primary.psi
        z = self.primary.z
        for i, (ms, mq) in enumerate(zip(self.matched_in_service,
                                         self.matched_in_queue)):
            if not 0 <= ms <= psi[i]:
                raise ValueError(f"matched_in_service[{i}] = {ms} not in [0, psi]")
            if not 0 <= mq <= z[i] - psi[i]:
                raise ValueError(f"matched_in_queue[{i}] = {mq} not in [0, q]")

    @property
    def g(self) -> tuple[int, ...]:
        return tuple(ms + mq for ms, mq in zip(self.matched_in_service,
                                               self.matched_in_queue))

    @classmethod
    def from_counts(cls, primary, g) -> "InfServerJointState":
        """Maximal matching: pair G customers with in-service partners first."""
        psi = primary.psi
        ms = tuple(min(gi, pi) for gi, pi in zip(g, psi))
        mq = tuple(gi - m for gi, m in zip(g, ms))
        return cls(primary=primary, matched_in_service=ms, matched_in_queue=mq)


def infserver_joint_rates(js: InfServerJointState, cfg: SystemConfig) -> list[dict]:
    """Per-class rate table of the joint chain.

    Bookkeeping identity: shared + g_only sums to mu_i*G_i (the M/M/inf
    marginal) and shared + z_only sums to mu_i*psi_i + nu_i*q_i (the primary
    marginal).
    """
    for i in range(cfg.n_classes):
        if cfg.nus[i] > cfg.mus[i]:
            raise HypothesisViolated(
                f"infinite-server comparison needs nu <= mu; class {i} has "
                f"nu = {cfg.nus[i]}, mu = {cfg.mus[i]}"
            )
    psi = js.primary.psi
    z = js.primary.z
    ms = js.matched_in_service
    mq = js.matched_in_queue
    table = []
    for i in range(cfg.n_classes):
        qi = z[i] - psi[i]
        table.append({
            "arrival": cfg.arrival_rates[i],
            "shared": cfg.mus[i] * ms[i] + cfg.nus[i] * mq[i],
            "g_only": (cfg.mus[i] - cfg.nus[i]) * mq[i],
            "z_only": cfg.mus[i] * (psi[i] - ms[i]) + cfg.nus[i] * (qi - mq[i]),
        })
    return table


def infserver_marginal_rates(table) -> list[dict]:
    """Marginal death rates implied by a joint rate table.

    ``g`` must equal mu_i * G_i and ``z`` must equal mu_i*psi_i + nu_i*q_i.
    """
    return [
        {"g": row["shared"] + row["g_only"], "z": row["shared"] + row["z_only"]}
        for row in table
    ]


@dataclass(frozen=True)
class InfServerReport:
    events: int
    sim_time: float
    ordering_checks: int
    violations: int  # always 0; a violation raises instead
    g_time_avg: tuple[float, ...]
    z_time_avg: tuple[float, ...]
    functional_time_avg: dict
    g_samples: list[tuple[int, ...]] = field(repr=False, default_factory=list)


def run_infserver_coupled(cfg: SystemConfig, kind: str, n_events: int, rng,
                          warmup_events: int = 0, g_sample_dt: float = 0.0,
                          functionals: dict | None = None) -> InfServerReport:
    """Run the joint (primary, M/M/inf) chain, asserting G_i <= Z_i throughout.

    Optional ``functionals`` map names to ``f(z, psi, g, cfg)`` and are time
    averaged over the post-warmup span; ``g_sample_dt > 0`` additionally
    records G snapshots every that many units of simulated time after the
    warmup.  Snapshots are taken on the time grid (not at event indices):
    the state holding at each grid instant is an unbiased stationary draw,
    whereas event-indexed states follow the jump-chain law.
    """
    nc = cfg.n_classes
    for i in range(nc):
        if cfg.nus[i] > cfg.mus[i]:
            raise HypothesisViolated(
                f"class {i} has nu = {cfg.nus[i]} > mu = {cfg.mus[i]}"
            )
    if warmup_events < 0 or n_events <= warmup_events:
        raise ValueError(
            f"need n_events > warmup_events >= 0, got {n_events}, {warmup_events}"
        )
    if isinstance(rng, RngStream):
        rng = rng.make()
    st = init_state(cfg, kind)
    g = [0] * nc
    lam_r = cfg.arrival_rates
    mus = cfg.mus
    nus = cfg.nus
    u01 = rng.random
    expov = rng.expovariate

    span = 0.0
    g_acc = [0.0] * nc
    z_acc = [0.0] * nc
    functionals = functionals or {}
    fn_names = list(functionals)
    fns = [functionals[k] for k in fn_names]
    fn_acc = [0.0] * len(fns)
    samples: list[tuple[int, ...]] = []
    next_sample = float("inf")
    checks = 0

    # live count lists: the policy ops mutate these in place
    psi = st.psi
    qc = st.qcount if kind == "fifo" else None
    zs = None if qc is not None else st.z
    rates = [0.0] * (4 * nc)
    rates[:nc] = lam_r
    cls_range = range(nc)
    z = [0] * nc

    for n in range(n_events):
        for i in cls_range:
            z[i] = psi[i] + qc[i] if qc is not None else zs[i]
            gi = g[i]
            pi = psi[i]
            ms = gi if gi < pi else pi
            mq = gi - ms
            rates[nc + i] = mus[i] * ms + nus[i] * mq  # shared death
            rates[2 * nc + i] = (mus[i] - nus[i]) * mq  # G-only death
            rates[3 * nc + i] = mus[i] * (pi - ms) + nus[i] * (z[i] - pi - mq)
        total = sum(rates)
        holding = expov(total)

        if n >= warmup_events:
            if n == warmup_events and g_sample_dt > 0.0:
                next_sample = span + g_sample_dt
            for i in cls_range:
                g_acc[i] += g[i] * holding
                z_acc[i] += z[i] * holding
            for j, f in enumerate(fns):
                fn_acc[j] += f(z, psi, g, cfg) * holding
            span += holding
            while next_sample <= span:  # pre-jump state occupies the instant
                samples.append(tuple(g))
                next_sample += g_sample_dt

        u = u01() * total
        k = 0
        acc = rates[0]
        last = 4 * nc - 1
        while acc < u and k < last:
            k += 1
            acc += rates[k]
        cat, i = divmod(k, nc)
        if cat == 0:  # shared arrival
            st.apply_arrival(i, rng)
            g[i] += 1
        elif cat == 1:  # shared death
            ms = g[i] if g[i] < psi[i] else psi[i]
            if u01() * rates[k] < mus[i] * ms:
                st.apply_departure(i, SERVICE, rng)
            else:
                st.apply_departure(i, QUEUE, rng)
            g[i] -= 1
        elif cat == 2:  # G-only death
            g[i] -= 1
        else:  # Z-only death
            ms = g[i] if g[i] < psi[i] else psi[i]
            svc_rate = mus[i] * (psi[i] - ms)
            if u01() * rates[k] < svc_rate:
                st.apply_departure(i, SERVICE, rng)
            else:
                st.apply_departure(i, QUEUE, rng)
        checks += 1
        for j in cls_range:
            zj = psi[j] + qc[j] if qc is not None else zs[j]
            if g[j] > zj:
                raise OrderingViolation(
                    f"G[{j}] = {g[j]} > Z[{j}] = {zj} after event {n}"
                )
    return InfServerReport(
        events=n_events,
        sim_time=span,
        ordering_checks=checks,
        violations=0,
        g_time_avg=tuple(a / span for a in g_acc),
        z_time_avg=tuple(a / span for a in z_acc),
        functional_time_avg={k: a / span for k, a in zip(fn_names, fn_acc)},
        g_samples=samples,
    )


def monotone_thinning_probability(q: int, psi: int, nu: float, nu_prime: float,
                                  mu: float) -> float:
    """Probability that the shadow retains its customer on a primary departure.

    Cancelled form ``q*(nu - nu') / (nu*q + mu*psi)``, well defined at nu = 0.
    """
    if nu_prime > nu:
        raise HypothesisViolated(f"need nu' <= nu, got {nu_prime} > {nu}")
    denom = nu * q + mu * psi
    if denom <= 0.0:
        raise DegenerateState(
            "no departure can occur at this state; thinning probability undefined"
        )
    return q * (nu - nu_prime) / denom


def shadow_allocation(psi, z_prime, n_servers: int) -> list[int]:
    """Shadow service allocation: mirror the primary, fill upward by class.

    Guarantees psi_i <= psi'_i <= z'_i and sum(psi') = min(N, sum(z')).
    """
    rem = min(n_servers, sum(z_prime)) - sum(psi)
    out = list(psi)
    for i in range(len(psi)):
        if rem <= 0:
            break
        extra = z_prime[i] - psi[i]
        if extra > rem:
            extra = rem
        out[i] += extra
        rem -= extra
    return out


@dataclass(frozen=True)
class MonotoneReport:
    events: int
    sim_time: float
    ordering_checks: int
    violations: int  # always 0; a violation raises instead
    z_time_avg: tuple[float, ...]
    z_prime_time_avg: tuple[float, ...]


def run_monotone_coupled(cfg: SystemConfig, nu_prime, kind: str, n_events: int,
                         rng, warmup_events: int = 0) -> MonotoneReport:
    """Drive the primary chain and its larger shadow with rates nu' <= nu.

    Asserts Z_i <= Z'_i, psi_i <= psi'_i, Q_i <= Q'_i, shadow non-idling, and
    the primary's own non-idling implication (idle servers force empty
    queues) after every event.
    """
    nc = cfg.n_classes
    nu_prime = list(nu_prime)
    if len(nu_prime) != nc:
        raise HypothesisViolated(f"nu' must have {nc} entries")
    for i in range(nc):
        if nu_prime[i] < 0.0 or nu_prime[i] > cfg.nus[i]:
            raise HypothesisViolated(
                f"need 0 <= nu' <= nu per class; class {i}: "
                f"nu' = {nu_prime[i]}, nu = {cfg.nus[i]}"
            )
    if warmup_events < 0 or n_events <= warmup_events:
        raise ValueError(
            f"need n_events > warmup_events >= 0, got {n_events}, {warmup_events}"
        )
    if isinstance(rng, RngStream):
        rng = rng.make()
    st = init_state(cfg, kind)
    zp = [0] * nc
    n_srv = cfg.n_servers
    lam_r = cfg.arrival_rates
    mus = cfg.mus
    nus = cfg.nus
    u01 = rng.random
    expov = rng.expovariate

    span = 0.0
    z_acc = [0.0] * nc
    zp_acc = [0.0] * nc
    checks = 0

    # live count lists: the policy ops mutate these in place
    psi = st.psi
    qc = st.qcount if kind == "fifo" else None
    zs = None if qc is not None else st.z
    cls_range = range(nc)
    rates = [0.0] * (4 * nc)
    rates[:nc] = lam_r
    z = [0] * nc
    psip = [0] * nc

    def refresh_shadow():
        # mirror the primary allocation, fill upward by class index
        rem = min(n_srv, sum(zp)) - sum(psi)
        for i in cls_range:
            pi = psi[i]
            extra = zp[i] - pi
            if extra > rem:
                extra = rem
            psip[i] = pi + extra
            rem -= extra

    for n in range(n_events):
        for i in cls_range:
            z[i] = psi[i] + qc[i] if qc is not None else zs[i]
        refresh_shadow()
        for i in cls_range:
            rates[nc + i] = mus[i] * psi[i]  # primary service completion
            rates[2 * nc + i] = nus[i] * (z[i] - psi[i])  # primary abandonment
            rates[3 * nc + i] = (nu_prime[i] * ((zp[i] - psip[i]) - (z[i] - psi[i]))
                                 + mus[i] * (psip[i] - psi[i]))  # shadow-only
        total = sum(rates)
        holding = expov(total)
        if n >= warmup_events:
            span += holding
            for i in cls_range:
                z_acc[i] += z[i] * holding
                zp_acc[i] += zp[i] * holding
        u = u01() * total
        k = 0
        acc = rates[0]
        last = 4 * nc - 1
        while acc < u and k < last:
            k += 1
            acc += rates[k]
        cat, j = divmod(k, nc)
        if cat == 0:  # coupled arrival
            st.apply_arrival(j, rng)
            zp[j] += 1
        elif cat <= 2:  # primary departure, shadow thinned
            p = (z[j] - psi[j]) * (nus[j] - nu_prime[j]) / (
                nus[j] * (z[j] - psi[j]) + mus[j] * psi[j]
            )
            st.apply_departure(j, SERVICE if cat == 1 else QUEUE, rng)
            if u01() >= p:
                zp[j] -= 1
        else:  # shadow-only departure
            zp[j] -= 1

        for i in cls_range:
            z[i] = psi[i] + qc[i] if qc is not None else zs[i]
        refresh_shadow()
        checks += 1
        total_psi = sum(psi)
        for i in cls_range:
            if z[i] > zp[i]:
                raise OrderingViolation(
                    f"Z[{i}] = {z[i]} > Z'[{i}] = {zp[i]} after event {n}"
                )
            if psi[i] > psip[i]:
                raise OrderingViolation(
                    f"psi[{i}] = {psi[i]} > psi'[{i}] = {psip[i]} after event {n}"
                )
            if (z[i] - psi[i]) > (zp[i] - psip[i]):
                raise OrderingViolation(
                    f"Q[{i}] > Q'[{i}] after event {n}"
                )
            if total_psi < n_srv and z[i] - psi[i] != 0:
                raise OrderingViolation(
                    f"primary idles with a queue: psi sums to {total_psi} < "
                    f"{n_srv} but Q[{i}] > 0 (event {n})"
                )
        if sum(psip) != min(n_srv, sum(zp)):
            raise OrderingViolation(f"shadow allocation not non-idling at event {n}")

    return MonotoneReport(
        events=n_events,
        sim_time=span,
        ordering_checks=checks,
        violations=0,
        z_time_avg=tuple(a / span for a in z_acc),
        z_prime_time_avg=tuple(a / span for a in zp_acc),
    )


def poisson_fit_pvalue(samples, mean: float, min_expected: float = 5.0) -> float:
    """Chi-square goodness-of-fit p-value of integer samples against Poisson.

    Bins with expected count below ``min_expected`` are pooled into the
    tails; dof = bins - 1 (the mean is given, not estimated).
    """
    samples = np.asarray(samples, dtype=int)
    n = samples.size
    hi = max(int(samples.max()), int(mean + 10 * mean ** 0.5))
    support = np.arange(0, hi + 1)
    probs = poisson_pmf(mean, support)
    observed = np.bincount(samples, minlength=hi + 1).astype(float)
    expected = n * probs
    # rightmost bin absorbs the infinite tail
    expected[-1] += n * max(0.0, 1.0 - probs.sum())

    obs_bins: list[float] = []
    exp_bins: list[float] = []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_bins.append(o_acc)
            exp_bins.append(e_acc)
            o_acc = e_acc = 0.0
    if o_acc > 0 or e_acc > 0:  # fold leftovers into the last bin
        if obs_bins:
            obs_bins[-1] += o_acc
            exp_bins[-1] += e_acc
        else:
            obs_bins.append(o_acc)
            exp_bins.append(e_acc)
    obs = np.array(obs_bins)
    exp = np.array(exp_bins)
    if len(obs) < 2:
        return 1.0
    stat = float(((obs - exp) ** 2 / exp).sum())
    dof = len(obs) - 1
    return float(_stats.chi2.sf(stat, dof))
