"""Admission policies.

Each decision rule is written once as a kernel over plain arrays; the
simulation engine calls the kernels directly and the classes below wrap
them behind an ``on_arrival`` / ``on_enqueue`` / ``on_dequeue`` /
``on_complete`` interface for use outside the engine.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from ._jit import kernel
from .core_types import (ACCEPT, DEFAULT_TYPE, NS_PER_MS, NS_PER_S, Decision, Query,
                         Reason, SloTable)
from .histogram import DEFAULT_MIN_SAMPLES, HistogramSet
from .sliding_window import (MovingAverage, SlidingWindowCounts, acceptance_ratio_of,
                             ma_pt, ring_add)

# kernel-side reason codes (mirror core_types.Reason)
R_NONE = 0
R_ALLOWANCE = 1
R_UNDERSERVED = 2
R_LENIENCY = 3
R_SLO = 4
R_QUEUE_FULL = 5
R_WAIT_LIMIT = 6
R_FRACTION = 7
R_TIMEOUT = 8

# policy kinds
K_BOUNCER = 0
K_ALLOWANCE = 1
K_UNDERSERVED = 2
K_MAXQL = 3
K_MAXQWT = 4
K_ACCEPT_FRACTION = 5
K_ACCEPT_ALL = 6

ACCEPT_LENIENTLY = 0
USE_GENERAL_HISTOGRAM = 1


class EmptyHistogramAction(enum.Enum):
    ACCEPT_LENIENTLY = ACCEPT_LENIENTLY
    USE_GENERAL_HISTOGRAM = USE_GENERAL_HISTOGRAM


# --------------------------------------------------------------------------
# kernels


@kernel
def mean_wait_kernel(qcounts, stats, n_proc):
    """Sum of count(type) * pt_mean(type) over queued types, divided by P."""
    g = qcounts.shape[0]
    total = 0.0
    for k in range(g):
        c = qcounts[k]
        if c == 0:
            continue
        if stats[k, 3] > 0.0:
            total += c * stats[k, 0]
        elif stats[g, 3] > 0.0:
            total += c * stats[g, 0]
    return total / n_proc


@kernel
def bouncer_kernel(k, qcounts, stats, slo, default_k, n_proc, empty_action):
    """Returns (reason, ewt_mean, ert_p50, ert_p90); estimates are NaN on leniency."""
    g = qcounts.shape[0]
    ewt = mean_wait_kernel(qcounts, stats, n_proc)
    if stats[k, 3] > 0.0:
        p50 = stats[k, 1]
        p90 = stats[k, 2]
        s50 = slo[k, 0]
        s90 = slo[k, 1]
    elif empty_action == 1 and stats[g, 3] > 0.0:
        p50 = stats[g, 1]
        p90 = stats[g, 2]
        s50 = slo[default_k, 0]
        s90 = slo[default_k, 1]
    else:
        return 3, ewt, np.nan, np.nan
    e50 = ewt + p50
    e90 = ewt + p90
    if e50 > s50 or e90 > s90:
        return 4, ewt, e50, e90
    return 0, ewt, e50, e90


@kernel
def allowance_prefilter(sw_totals, k, allowance):
    """History part: accept if the type is unseen or under its allowance."""
    rqc = sw_totals[2 * k + 1]
    if rqc == 0:
        return True
    return sw_totals[2 * k] / rqc < allowance


@kernel
def underserved_probability(sw_totals, k, known, alpha):
    """Override probability for a rejected query of type k (0 if not underserved)."""
    ar = acceptance_ratio_of(sw_totals, k)
    aar = 0.0
    n_known = 0
    for t in range(known.shape[0]):
        if known[t]:
            aar += acceptance_ratio_of(sw_totals, t)
            n_known += 1
    if n_known < 1:
        n_known = 1
    aar /= n_known
    if ar < aar:
        x = (aar - ar) / aar
        return alpha * x / (1.0 + x)
    return 0.0


@kernel
def maxqwt_kernel(queue_len, pt_mavg, n_proc, limit):
    if queue_len * pt_mavg / n_proc <= limit:
        return 0
    return 6


@kernel
def accept_fraction_kernel(apc, qps_mavg, pt_mavg):
    dpc = qps_mavg * pt_mavg / 1e9
    if dpc <= 0.0:
        return 1.0
    return min(1.0, apc / dpc)


# --------------------------------------------------------------------------
# object API


class QueueView:
    """Length and per-type counts of the queries waiting in the FIFO queue."""

    def __init__(self, types: Sequence[str]):
        self.types = list(types)
        self.index = {t: i for i, t in enumerate(self.types)}
        self.per_type = np.zeros(len(self.types), dtype=np.int64)

    @property
    def length(self) -> int:
        return int(self.per_type.sum())

    def count(self, qtype: str) -> int:
        return int(self.per_type[self.index[qtype]])

    def enqueue(self, qtype: str) -> None:
        self.per_type[self.index[qtype]] += 1

    def dequeue(self, qtype: str) -> None:
        i = self.index[qtype]
        assert self.per_type[i] > 0, f"no {qtype!r} query queued"
        self.per_type[i] -= 1

    @classmethod
    def from_counts(cls, counts: Mapping[str, int], types: Sequence[str] | None = None):
        qv = cls(types if types is not None else list(counts))
        for t, c in counts.items():
            qv.per_type[qv.index[t]] = c
        return qv


def resolve_types(slos: SloTable, extra: Sequence[str] = ()) -> list[str]:
    """Type universe: SLO table keys first (``default`` included), then extras."""
    types = list(slos)
    for t in extra:
        if t not in types:
            types.append(t)
    return types


def slo_matrix(slos: SloTable, types: Sequence[str]) -> np.ndarray:
    return np.array([[slos[t].p50_target, slos[t].p90_target] for t in types], dtype=np.float64)


@dataclass
class ResponseTimeEstimate:
    ewt_mean: float
    ert_p50: float
    ert_p90: float


@dataclass
class BouncerConfig:
    slos: SloTable
    P: int
    histograms: HistogramSet
    empty_histogram_action: EmptyHistogramAction = EmptyHistogramAction.USE_GENERAL_HISTOGRAM

    def __post_init__(self):
        if self.P < 1:
            raise ValueError("P must be >= 1")
        self._slo = slo_matrix(self.slos, self.histograms.types)
        self._default = self.histograms.index[DEFAULT_TYPE]


@dataclass
class AllowanceConfig:
    A: float
    window: SlidingWindowCounts

    def __post_init__(self):
        if not 0.0 <= self.A <= 1.0:
            raise ValueError("A must be in [0, 1]")


@dataclass
class UnderservedConfig:
    alpha: float
    window: SlidingWindowCounts
    known_types: Optional[Sequence[str]] = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        known = self.window.types if self.known_types is None else self.known_types
        self._known = np.array([t in set(known) for t in self.window.types], dtype=np.bool_)


@dataclass
class MaxQlConfig:
    L_limit: int

    def __post_init__(self):
        if self.L_limit < 1:
            raise ValueError("L_limit must be >= 1")


@dataclass
class MaxQwtConfig:
    T_limit: int | Mapping[str, int]
    P: int
    pt_window: MovingAverage = field(default_factory=MovingAverage)

    def limit_for(self, qtype: str) -> int:
        if isinstance(self.T_limit, Mapping):
            if qtype in self.T_limit:
                return self.T_limit[qtype]
            return self.T_limit[DEFAULT_TYPE]
        return self.T_limit


@dataclass
class AcceptFractionState:
    max_util: float
    PU: int
    window: MovingAverage = field(default_factory=MovingAverage)
    update_interval: int = NS_PER_S
    enforce_timeout_rejection: bool = False
    expiration: Optional[int] = None
    f: float = 1.0
    next_update: int = NS_PER_S

    def __post_init__(self):
        if not 0.0 < self.max_util <= 1.0:
            raise ValueError("max_util must be in (0, 1]")
        self.APC = self.max_util * self.PU


def estimate_mean_wait(qv: QueueView, hist: HistogramSet, P: int) -> float:
    """Estimated mean queue wait (ns) of an arriving query."""
    assert P >= 1
    counts = np.zeros(len(hist.types), dtype=np.int64)
    for t, c in zip(qv.types, qv.per_type):
        counts[hist.index[t]] += c
    return float(mean_wait_kernel(counts, hist.store.stats, P))


def _queue_counts(qv: QueueView, hist: HistogramSet) -> np.ndarray:
    if qv.types == hist.types:
        return qv.per_type
    counts = np.zeros(len(hist.types), dtype=np.int64)
    for t, c in zip(qv.types, qv.per_type):
        counts[hist.index[t]] += c
    return counts


def _type_index(hist: HistogramSet, qtype: str) -> int:
    return hist.index.get(qtype, hist.index[DEFAULT_TYPE])


def bouncer_decide(q: Query, qv: QueueView, cfg: BouncerConfig):
    """Accept iff both percentile response-time estimates are within the SLO."""
    hist = cfg.histograms
    code, ewt, e50, e90 = bouncer_kernel(_type_index(hist, q.qtype), _queue_counts(qv, hist),
                                         hist.store.stats, cfg._slo, cfg._default, cfg.P,
                                         cfg.empty_histogram_action.value)
    return Decision.from_code(code), ResponseTimeEstimate(ewt, e50, e90)


def allowance_decide(q: Query, qv: QueueView, cfg: AllowanceConfig, inner, rng) -> Decision:
    """Acceptance-allowance wrapper; ``inner(q, qv)`` returns the Bouncer decision."""
    sw = cfg.window
    k = sw.index.get(q.qtype, sw.index[DEFAULT_TYPE])
    if allowance_prefilter(sw.totals, k, cfg.A):
        decision = Decision.from_code(R_ALLOWANCE)
    else:
        decision = inner(q, qv)
        if not decision.accepted and rng.random() < cfg.A:
            decision = Decision.from_code(R_ALLOWANCE)
    _count(sw, k, decision)
    return decision


def underserved_decide(q: Query, qv: QueueView, cfg: UnderservedConfig, inner, rng,
                       probe: Optional[list] = None) -> Decision:
    """Helping-the-underserved wrapper; ``probe`` collects override probabilities."""
    sw = cfg.window
    k = sw.index.get(q.qtype, sw.index[DEFAULT_TYPE])
    decision = inner(q, qv)
    if not decision.accepted:
        p = float(underserved_probability(sw.totals, k, cfg._known, cfg.alpha))
        if p > 0.0:
            if probe is not None:
                probe.append(p)
            if rng.random() < p:
                decision = Decision.from_code(R_UNDERSERVED)
    _count(sw, k, decision)
    return decision


def _count(sw: SlidingWindowCounts, k: int, decision: Decision) -> None:
    if decision.accepted:
        ring_add(sw.ring, sw.totals, sw.state, 2 * k, 1)
    ring_add(sw.ring, sw.totals, sw.state, 2 * k + 1, 1)


def maxql_decide(q: Query, qv: QueueView, cfg: MaxQlConfig) -> Decision:
    if qv.length < cfg.L_limit:
        return ACCEPT
    return Decision.from_code(R_QUEUE_FULL)


def maxqwt_decide(q: Query, qv: QueueView, cfg: MaxQwtConfig) -> Decision:
    pt = float(ma_pt(cfg.pt_window.totals))
    return Decision.from_code(maxqwt_kernel(qv.length, pt, cfg.P, cfg.limit_for(q.qtype)))


def acceptfraction_update(st: AcceptFractionState, now: int) -> float:
    qps = st.window.qps_mavg(now)
    st.f = float(accept_fraction_kernel(st.APC, qps, ma_pt(st.window.totals)))
    return st.f


def acceptfraction_decide(q: Query, qv: QueueView, st: AcceptFractionState, rng) -> Decision:
    if rng.random() >= st.f:
        return Decision.from_code(R_FRACTION)
    if st.enforce_timeout_rejection and st.expiration is not None:
        ewt = qv.length * st.window.pt_mavg() / st.PU
        if ewt > st.expiration:
            return Decision.from_code(R_TIMEOUT)
    return ACCEPT


# --------------------------------------------------------------------------
# hook-based policy objects


class Policy:
    """Uniform admission interface; hooks correspond to metric points 1-3."""

    def on_arrival(self, q: Query, qv: QueueView, now: int) -> Decision:
        raise NotImplementedError

    def on_enqueue(self, q: Query, now: int) -> None:
        pass

    def on_dequeue(self, q: Query, now: int) -> None:
        pass

    def on_complete(self, q: Query, now: int) -> None:
        pass


class AcceptAll(Policy):
    def on_arrival(self, q, qv, now):
        return ACCEPT


class Bouncer(Policy):
    def __init__(self, cfg: BouncerConfig):
        self.cfg = cfg
        self.last_estimate: Optional[ResponseTimeEstimate] = None

    def decide(self, q: Query, qv: QueueView) -> Decision:
        decision, self.last_estimate = bouncer_decide(q, qv, self.cfg)
        return decision

    def on_arrival(self, q, qv, now):
        self.cfg.histograms.maybe_swap(now)
        return self.decide(q, qv)

    def on_complete(self, q, now):
        self.cfg.histograms.record(q.qtype if q.qtype in self.cfg.histograms.index
                                   else DEFAULT_TYPE, q.processing_time)


class BouncerAllowance(Bouncer):
    def __init__(self, cfg: BouncerConfig, allowance: AllowanceConfig, rng):
        super().__init__(cfg)
        self.allowance, self.rng = allowance, rng

    def on_arrival(self, q, qv, now):
        self.cfg.histograms.maybe_swap(now)
        self.allowance.window.advance(now)
        return allowance_decide(q, qv, self.allowance, self.decide, self.rng)


class BouncerUnderserved(Bouncer):
    def __init__(self, cfg: BouncerConfig, underserved: UnderservedConfig, rng):
        super().__init__(cfg)
        self.underserved, self.rng = underserved, rng
        self.override_probabilities: list[float] = []

    def on_arrival(self, q, qv, now):
        self.cfg.histograms.maybe_swap(now)
        self.underserved.window.advance(now)
        return underserved_decide(q, qv, self.underserved, self.decide, self.rng,
                                  self.override_probabilities)


class MaxQL(Policy):
    def __init__(self, cfg: MaxQlConfig):
        self.cfg = cfg

    def on_arrival(self, q, qv, now):
        return maxql_decide(q, qv, self.cfg)


class MaxQWT(Policy):
    def __init__(self, cfg: MaxQwtConfig):
        self.cfg = cfg

    def on_arrival(self, q, qv, now):
        self.cfg.pt_window.advance(now)
        return maxqwt_decide(q, qv, self.cfg)

    def on_complete(self, q, now):
        self.cfg.pt_window.advance(now)
        self.cfg.pt_window.add_completion(q.processing_time)


class AcceptFraction(Policy):
    def __init__(self, st: AcceptFractionState, rng):
        self.st, self.rng = st, rng

    def on_arrival(self, q, qv, now):
        st = self.st
        st.window.advance(now)
        while now >= st.next_update:
            acceptfraction_update(st, now)
            st.next_update += st.update_interval
        st.window.add_arrival()
        return acceptfraction_decide(q, qv, st, self.rng)

    def on_complete(self, q, now):
        self.st.window.advance(now)
        self.st.window.add_completion(q.processing_time)


# --------------------------------------------------------------------------
# declarative configuration


POLICY_KINDS = {
    "bouncer": K_BOUNCER,
    "bouncer_aa": K_ALLOWANCE,
    "bouncer_hu": K_UNDERSERVED,
    "maxql": K_MAXQL,
    "maxqwt": K_MAXQWT,
    "accept_fraction": K_ACCEPT_FRACTION,
    "accept_all": K_ACCEPT_ALL,
}

STRATEGY_NAMES = {K_BOUNCER: "basic", K_ALLOWANCE: "allowance", K_UNDERSERVED: "underserved"}


@dataclass
class PolicySpec:
    """Tagged configuration for one admission policy.

    Durations are integer nanoseconds.  Fields irrelevant to ``kind`` are
    ignored.
    """

    kind: str
    slos: Optional[SloTable] = None
    A: float = 0.05
    alpha: float = 1.0
    known_types: Optional[list[str]] = None
    L_limit: int = 400
    T_limit: int = 15 * NS_PER_MS
    per_type_limits: Optional[dict[str, int]] = None
    max_util: float = 0.95
    PU: Optional[int] = None
    update_interval: int = NS_PER_S
    enforce_timeout_rejection: bool = False
    expiration: Optional[int] = None
    empty_histogram_action: EmptyHistogramAction = EmptyHistogramAction.USE_GENERAL_HISTOGRAM
    strategy_window: tuple[int, int] = (NS_PER_S, 10 * NS_PER_MS)
    mavg_window: tuple[int, int] = (60 * NS_PER_S, NS_PER_S)
    swap_interval: int = NS_PER_S
    min_samples_to_swap: int = DEFAULT_MIN_SAMPLES
    qps_over_full_window: bool = False

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {sorted(POLICY_KINDS)}")
        if self.is_bouncer and self.slos is None:
            raise ValueError(f"policy {self.kind!r} needs an SLO table")
        if not 0.0 <= self.A <= 1.0:
            raise ValueError("A must be in [0, 1]")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0.0 < self.max_util <= 1.0:
            raise ValueError("max_util must be in (0, 1]")
        if self.L_limit < 1:
            raise ValueError("L_limit must be >= 1")
        limits = [self.T_limit] + list((self.per_type_limits or {}).values())
        if any(v <= 0 for v in limits):
            raise ValueError("wait time limits must be > 0")

    @property
    def code(self) -> int:
        return POLICY_KINDS[self.kind]

    @property
    def is_bouncer(self) -> bool:
        return self.code in (K_BOUNCER, K_ALLOWANCE, K_UNDERSERVED)

    @property
    def policy_name(self) -> str:
        return "bouncer" if self.is_bouncer else self.kind

    @property
    def strategy_name(self) -> str:
        return STRATEGY_NAMES.get(self.code, "none")

    def wait_limits(self, types: Sequence[str]) -> np.ndarray:
        out = np.full(len(types), float(self.T_limit))
        if self.per_type_limits:
            fallback = self.per_type_limits.get(DEFAULT_TYPE, self.T_limit)
            for i, t in enumerate(types):
                out[i] = self.per_type_limits.get(t, fallback)
        return out

    def build(self, types: Sequence[str], P: int, rng=None) -> Policy:
        """Instantiate a hook-based policy object over the type universe ``types``."""
        c = self.code
        if c == K_ACCEPT_ALL:
            return AcceptAll()
        if c == K_MAXQL:
            return MaxQL(MaxQlConfig(self.L_limit))
        if c == K_MAXQWT:
            limit = dict(self.per_type_limits) if self.per_type_limits else self.T_limit
            if isinstance(limit, dict):
                limit.setdefault(DEFAULT_TYPE, self.T_limit)
            return MaxQWT(MaxQwtConfig(limit, P, MovingAverage(*self.mavg_window)))
        if c == K_ACCEPT_FRACTION:
            window = MovingAverage(*self.mavg_window, full_window=self.qps_over_full_window)
            st = AcceptFractionState(self.max_util, self.PU or P, window,
                                     self.update_interval, self.enforce_timeout_rejection,
                                     self.expiration, next_update=self.update_interval)
            return AcceptFraction(st, rng)
        hist = HistogramSet(types, swap_interval=self.swap_interval,
                            min_samples_to_swap=self.min_samples_to_swap)
        cfg = BouncerConfig(self.slos, P, hist, self.empty_histogram_action)
        if c == K_BOUNCER:
            return Bouncer(cfg)
        window = SlidingWindowCounts(types, *self.strategy_window)
        if c == K_ALLOWANCE:
            return BouncerAllowance(cfg, AllowanceConfig(self.A, window), rng)
        return BouncerUnderserved(cfg, UnderservedConfig(self.alpha, window, self.known_types), rng)
