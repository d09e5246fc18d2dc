"""Detailed Markov states for three non-idling scheduling policies.

Priority order is descending class index: class ``n_classes - 1`` has the
highest priority.  The three kinds:

* ``preemptive_priority`` -- detailed state is the count vector ``z`` alone;
  the service allocation is the unique one that serves higher classes first
  (an arrival of a high class may push a served low-class customer back to
  the queue).
* ``nonpreemptive_priority`` -- detailed state is ``(z, psi)``; a freed
  server takes the highest-priority waiting customer, running services are
  never interrupted.
* ``fifo`` -- detailed state is the arrival-order sequence of class labels;
  the first ``min(n_servers, len(seq))`` entries are in service.

States are mutable values: ``apply_arrival`` / ``apply_departure`` update in
place and return the state.  One simulation owns one state; use ``copy()``
to branch.  Where a departure must pick one of several exchangeable
customers (FIFO), the choice is uniform when an ``rng`` is supplied and
deterministically the earliest otherwise; either rule yields the same law
for the projected counts.
"""

from __future__ import annotations

from collections import namedtuple

from .errors import EmptySource, Unsupported
from .model import MacroState, SystemConfig

PREEMPTIVE = "preemptive_priority"
NONPREEMPTIVE = "nonpreemptive_priority"
FIFO = "fifo"
KINDS = (PREEMPTIVE, NONPREEMPTIVE, FIFO)

SERVICE = "service"
QUEUE = "queue"

TransitionEffect = namedtuple("TransitionEffect", ["kind", "cls", "state"])


class PreemptivePriorityState:
    """Count vector z; psi is recomputed from z after every change."""

    kind = PREEMPTIVE
    __slots__ = ("cfg", "z", "psi")

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.z = [0] * cfg.n_classes
        self.psi = [0] * cfg.n_classes

    def copy(self) -> "PreemptivePriorityState":
        new = object.__new__(PreemptivePriorityState)
        new.cfg = self.cfg
        new.z = list(self.z)
        new.psi = list(self.psi)
        return new

    def _realloc(self) -> None:
        # highest class index first; remaining servers go down the order
        rem = self.cfg.n_servers
        z = self.z
        psi = self.psi
        for i in range(len(z) - 1, -1, -1):
            s = z[i]
            if s > rem:
                s = rem
            psi[i] = s
            rem -= s

    def set_counts(self, z) -> None:
        self.z = list(z)
        self._realloc()

    def project(self) -> MacroState:
        return MacroState(z=tuple(self.z), psi=tuple(self.psi))

    def apply_arrival(self, cls: int, rng=None) -> "PreemptivePriorityState":
        self.z[cls] += 1
        self._realloc()
        return self

    def apply_departure(self, cls: int, source: str, rng=None) -> "PreemptivePriorityState":
        if source == SERVICE:
            if self.psi[cls] < 1:
                raise EmptySource(f"no class-{cls} customer in service")
        elif source == QUEUE:
            if self.z[cls] - self.psi[cls] < 1:
                raise EmptySource(f"no class-{cls} customer in queue")
        else:
            raise ValueError(f"unknown source {source!r}")
        self.z[cls] -= 1
        self._realloc()
        return self


class NonPreemptivePriorityState:
    """Counts (z, psi); freed servers take the highest waiting class."""

    kind = NONPREEMPTIVE
    __slots__ = ("cfg", "z", "psi")

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.z = [0] * cfg.n_classes
        self.psi = [0] * cfg.n_classes

    def copy(self) -> "NonPreemptivePriorityState":
        new = object.__new__(NonPreemptivePriorityState)
        new.cfg = self.cfg
        new.z = list(self.z)
        new.psi = list(self.psi)
        return new

    def set_counts(self, z, psi) -> None:
        self.z = list(z)
        self.psi = list(psi)

    def project(self) -> MacroState:
        return MacroState(z=tuple(self.z), psi=tuple(self.psi))

    def apply_arrival(self, cls: int, rng=None) -> "NonPreemptivePriorityState":
        self.z[cls] += 1
        if sum(self.psi) < self.cfg.n_servers:
            self.psi[cls] += 1
        return self

    def apply_departure(self, cls: int, source: str, rng=None) -> "NonPreemptivePriorityState":
        z = self.z
        psi = self.psi
        if source == SERVICE:
            if psi[cls] < 1:
                raise EmptySource(f"no class-{cls} customer in service")
            z[cls] -= 1
            psi[cls] -= 1
            # refill with the highest-priority waiting customer, if any
            for j in range(len(z) - 1, -1, -1):
                if z[j] - psi[j] > 0:
                    psi[j] += 1
                    break
        elif source == QUEUE:
            if z[cls] - psi[cls] < 1:
                raise EmptySource(f"no class-{cls} customer in queue")
            z[cls] -= 1
        else:
            raise ValueError(f"unknown source {source!r}")
        return self


class FifoState:
    """Arrival-order label sequence; the first min(N, len) entries are served.

    ``psi`` and ``qcount`` are caches maintained incrementally so that rate
    computations do not rescan the sequence.
    """

    kind = FIFO
    __slots__ = ("cfg", "seq", "psi", "qcount")

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.seq: list[int] = []
        self.psi = [0] * cfg.n_classes
        self.qcount = [0] * cfg.n_classes

    def copy(self) -> "FifoState":
        new = object.__new__(FifoState)
        new.cfg = self.cfg
        new.seq = list(self.seq)
        new.psi = list(self.psi)
        new.qcount = list(self.qcount)
        return new

    @property
    def z(self) -> list[int]:
        return [p + q for p, q in zip(self.psi, self.qcount)]

    def set_sequence(self, seq) -> None:
        self.seq = list(seq)
        n = self.cfg.n_classes
        served = min(self.cfg.n_servers, len(self.seq))
        self.psi = [0] * n
        self.qcount = [0] * n
        for pos, cls in enumerate(self.seq):
            if pos < served:
                self.psi[cls] += 1
            else:
                self.qcount[cls] += 1

    def project(self) -> MacroState:
        return MacroState(
            z=tuple(p + q for p, q in zip(self.psi, self.qcount)),
            psi=tuple(self.psi),
        )

    def apply_arrival(self, cls: int, rng=None) -> "FifoState":
        self.seq.append(cls)
        if len(self.seq) <= self.cfg.n_servers:
            self.psi[cls] += 1
        else:
            self.qcount[cls] += 1
        return self

    def _nth_position(self, cls: int, n: int) -> int:
        # position of the (n+1)-th occurrence of cls in seq
        pos = -1
        index = self.seq.index
        for _ in range(n + 1):
            pos = index(cls, pos + 1)
        return pos

    def apply_departure(self, cls: int, source: str, rng=None) -> "FifoState":
        n_srv = self.cfg.n_servers
        length = len(self.seq)
        if source == SERVICE:
            count = self.psi[cls]
            if count < 1:
                raise EmptySource(f"no class-{cls} customer in service")
            # served customers of a class are the first psi[cls] occurrences
            j = rng.randrange(count) if (rng is not None and count > 1) else 0
            self.seq.pop(self._nth_position(cls, j))
            self.psi[cls] -= 1
            if length > n_srv:
                promoted = self.seq[n_srv - 1]  # former queue head slides in
                self.psi[promoted] += 1
                self.qcount[promoted] -= 1
        elif source == QUEUE:
            count = self.qcount[cls]
            if count < 1:
                raise EmptySource(f"no class-{cls} customer in queue")
            j = rng.randrange(count) if (rng is not None and count > 1) else 0
            self.seq.pop(self._nth_position(cls, self.psi[cls] + j))
            self.qcount[cls] -= 1
        else:
            raise ValueError(f"unknown source {source!r}")
        return self


PolicyState = PreemptivePriorityState | NonPreemptivePriorityState | FifoState

_CLASSES = {
    PREEMPTIVE: PreemptivePriorityState,
    NONPREEMPTIVE: NonPreemptivePriorityState,
    FIFO: FifoState,
}


def init_state(cfg: SystemConfig, kind: str) -> PolicyState:
    """Empty system for the given policy kind."""
    try:
        return _CLASSES[kind](cfg)
    except KeyError:
        raise Unsupported(f"unknown policy kind {kind!r}; valid: {KINDS}") from None


def project(state: PolicyState) -> MacroState:
    return state.project()


def apply_arrival(state: PolicyState, cls: int, rng=None) -> PolicyState:
    return state.apply_arrival(cls, rng)


def apply_departure(state: PolicyState, cls: int, source: str, rng=None) -> PolicyState:
    return state.apply_departure(cls, source, rng)
