"""Exact continuous-time jump simulation and steady-state estimators.

The chain jumps at the total rate ``sum_i lam_i*r + sum_i (mu_i*psi_i +
nu_i*q_i)``; the event category is then drawn proportionally to the
individual rates.  Rates depend only on the per-class counts, so each event
costs O(n_classes).

Steady-state functionals are estimated two ways: the regenerative method
(i.i.d. cycles between visits to the empty state, usable only when the empty
state recurs quickly, i.e. small r) and batch means (the default in heavy
traffic).  All averages are time weighted: stationary expectations of a CTMC
are time averages, not event averages.

Functionals passed to the estimators take ``(z, psi, cfg)`` where ``z`` and
``psi`` are per-class count lists.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from scipy import stats as _stats

from .errors import CycleTimeout
from .model import MacroState, SystemConfig
from .policy import QUEUE, SERVICE, TransitionEffect, init_state


@dataclass(frozen=True)
class RngStream:
    """Named random stream: (seed, stream) -> reproducible generator.

    The generator is seeded with the first 128 bits of
    ``sha256(f"{seed}/{stream}")``, so replication k of a run with master
    seed s always sees the same stream, independent of execution order or
    thread count.
    """

    seed: int
    stream: int = 0

    def make(self) -> random.Random:
        digest = hashlib.sha256(f"{self.seed}/{self.stream}".encode()).digest()
        return random.Random(int.from_bytes(digest[:16], "big"))


@dataclass(frozen=True)
class StationaryEstimate:
    """Point estimate of a steady-state functional with a 95% half-width."""

    value: float
    half_width: float
    method: str  # "regenerative" | "batch_means"
    cycles_or_batches: int
    warmup_events: int


def total_rate(s: MacroState, cfg: SystemConfig) -> float:
    """Total transition rate out of a macro state."""
    rate = sum(cfg.arrival_rates)
    for i in range(cfg.n_classes):
        rate += cfg.mus[i] * s.psi[i] + cfg.nus[i] * (s.z[i] - s.psi[i])
    return rate


def event_rates(z, psi, cfg: SystemConfig) -> list[float]:
    """Per-category rates: arrivals, then service completions, then
    abandonments, each by class index."""
    rates = list(cfg.arrival_rates)
    mus = cfg.mus
    nus = cfg.nus
    for i in range(cfg.n_classes):
        rates.append(mus[i] * psi[i])
    for i in range(cfg.n_classes):
        rates.append(nus[i] * (z[i] - psi[i]))
    return rates


def sample_event(z, psi, cfg: SystemConfig, rng: random.Random):
    """Draw (kind, cls, total_rate) for the next event at the given counts."""
    rates = event_rates(z, psi, cfg)
    total = sum(rates)
    u = rng.random() * total
    acc = 0.0
    k = 0
    last = len(rates) - 1
    for k, rk in enumerate(rates):
        acc += rk
        if u < acc or k == last:
            break
    nc = cfg.n_classes
    if k < nc:
        return "arrival", k, total
    if k < 2 * nc:
        return "service_completion", k - nc, total
    return "abandonment", k - 2 * nc, total


def step(state, cfg: SystemConfig, rng: random.Random):
    """Advance one jump: returns (holding_time, TransitionEffect, state).

    The state is updated in place (and also carried in the effect).
    """
    kind, cls, total = sample_event(state.z, state.psi, cfg, rng)
    holding = rng.expovariate(total)
    if kind == "arrival":
        state.apply_arrival(cls, rng)
    elif kind == "service_completion":
        state.apply_departure(cls, SERVICE, rng)
    else:
        state.apply_departure(cls, QUEUE, rng)
    return holding, TransitionEffect(kind, cls, state), state


@dataclass(frozen=True)
class RunSummary:
    time_averages: dict
    events: int
    warmup_events: int
    sim_time: float


def run(cfg: SystemConfig, kind: str, n_events: int, warmup_events: int,
        rng, functionals: dict) -> RunSummary:
    """Time-averaged functionals over the post-warmup span of one trajectory.

    ``rng`` may be an :class:`RngStream` or a ``random.Random``.  The result
    is a deterministic function of the stream.
    """
    if warmup_events < 0 or n_events <= warmup_events:
        raise ValueError(
            f"need n_events > warmup_events >= 0, got {n_events}, {warmup_events}"
        )
    if isinstance(rng, RngStream):
        rng = rng.make()
    state = init_state(cfg, kind)
    names = list(functionals)
    funcs = [functionals[n] for n in names]
    acc = [0.0] * len(funcs)
    span = 0.0
    for n in range(n_events):
        z = state.z
        psi = state.psi
        if n >= warmup_events:
            vals = [f(z, psi, cfg) for f in funcs]
        else:
            vals = None
        holding, _, _ = step(state, cfg, rng)
        if vals is not None:
            span += holding
            for j, v in enumerate(vals):
                acc[j] += v * holding
    if span <= 0.0:
        raise ValueError("post-warmup span has zero length")
    return RunSummary(
        time_averages={n: a / span for n, a in zip(names, acc)},
        events=n_events,
        warmup_events=warmup_events,
        sim_time=span,
    )


def regenerative_estimate(cfg: SystemConfig, kind: str, functional, n_cycles: int,
                          rng, max_events_per_cycle: int = 1_000_000) -> StationaryEstimate:
    """Ratio estimator over i.i.d. excursions between visits to the empty state.

    Feasible only when the empty state recurs within the event budget, which
    in practice means small r.  Raises :class:`CycleTimeout` otherwise.
    """
    if n_cycles < 2:
        raise ValueError("need at least 2 regenerative cycles")
    if isinstance(rng, RngStream):
        rng = rng.make()
    state = init_state(cfg, kind)  # empty state is the regeneration point
    ys = []
    taus = []
    for c in range(n_cycles):
        y = 0.0
        tau = 0.0
        for n in range(max_events_per_cycle):
            v = functional(state.z, state.psi, cfg)
            holding, _, _ = step(state, cfg, rng)
            y += v * holding
            tau += holding
            if sum(state.z) == 0:
                break
        else:
            raise CycleTimeout(
                f"cycle {c} did not return to the empty state within "
                f"{max_events_per_cycle} events"
            )
        ys.append(y)
        taus.append(tau)
    total_tau = sum(taus)
    est = sum(ys) / total_tau
    mean_tau = total_tau / n_cycles
    resid = [y - est * t for y, t in zip(ys, taus)]
    s2 = sum(v * v for v in resid) / (n_cycles - 1)
    tcrit = float(_stats.t.ppf(0.975, n_cycles - 1))
    half = tcrit * (s2 ** 0.5) / (mean_tau * n_cycles ** 0.5)
    return StationaryEstimate(
        value=est, half_width=half, method="regenerative",
        cycles_or_batches=n_cycles, warmup_events=0,
    )


def batch_means_multi(cfg: SystemConfig, kind: str, functionals: dict,
                      n_batches: int, events_per_batch: int, warmup_events: int,
                      rng) -> dict:
    """Batch-means estimates for several functionals from a single trajectory."""
    if n_batches < 10:
        raise ValueError("need at least 10 batches for a usable CI")
    if isinstance(rng, RngStream):
        rng = rng.make()
    state = init_state(cfg, kind)
    for _ in range(warmup_events):
        step(state, cfg, rng)
    names = list(functionals)
    funcs = [functionals[n] for n in names]
    nf = len(funcs)
    batch_means = [[] for _ in range(nf)]
    for _ in range(n_batches):
        acc = [0.0] * nf
        span = 0.0
        for _ in range(events_per_batch):
            z = state.z
            psi = state.psi
            vals = [f(z, psi, cfg) for f in funcs]
            holding, _, _ = step(state, cfg, rng)
            span += holding
            for j in range(nf):
                acc[j] += vals[j] * holding
        for j in range(nf):
            batch_means[j].append(acc[j] / span)
    tcrit = float(_stats.t.ppf(0.975, n_batches - 1))
    out = {}
    for j, name in enumerate(names):
        bm = batch_means[j]
        mean = sum(bm) / n_batches
        var = sum((b - mean) ** 2 for b in bm) / (n_batches - 1)
        half = tcrit * (var ** 0.5) / n_batches ** 0.5
        out[name] = StationaryEstimate(
            value=mean, half_width=half, method="batch_means",
            cycles_or_batches=n_batches, warmup_events=warmup_events,
        )
    return out


def batch_means_estimate(cfg: SystemConfig, kind: str, functional, n_batches: int,
                         events_per_batch: int, warmup_events: int, rng) -> StationaryEstimate:
    return batch_means_multi(
        cfg, kind, {"f": functional}, n_batches, events_per_batch, warmup_events, rng
    )["f"]


def default_warmup(cfg: SystemConfig) -> int:
    """Crude relaxation-time proxy: 10 events per server."""
    return 10 * cfg.n_servers


def choose_estimator(cfg: SystemConfig, r_threshold: float = 50.0,
                     nu_threshold: float = 2.0) -> str:
    """Regenerative for small r with modest abandonment, batch means otherwise.

    Empty-state returns become astronomically rare as r grows, which starves
    the regenerative method.
    """
    if cfg.r <= r_threshold and cfg.nu_max <= nu_threshold:
        return "regenerative"
    return "batch_means"
