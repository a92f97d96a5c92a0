"""Slotted sliding windows over simulated time.

A window of duration ``D`` is a ring of ``D / step`` slots.  An event at time
``t`` lands in absolute slot ``t // step``; after advancing to ``now`` the
live slots are the last ``D / step`` ones ending at ``now // step``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ._jit import kernel
from .core_types import NS_PER_MS, NS_PER_S

CUR, STEP, SLOTS, ORIGIN = 0, 1, 2, 3
ACCEPTED, RECEIVED = 0, 1
PT_SUM, COMPLETIONS, ARRIVALS = 0, 1, 2


@kernel
def ring_advance(ring, totals, state, now):
    slot = now // state[1]
    cur = state[0]
    if slot <= cur:
        return
    n_slots = state[2]
    n_expire = slot - cur
    if n_expire > n_slots:
        n_expire = n_slots
    for j in range(1, n_expire + 1):
        idx = (cur + j) % n_slots
        for w in range(ring.shape[1]):
            totals[w] -= ring[idx, w]
            ring[idx, w] = 0
    state[0] = slot


@kernel
def ring_add(ring, totals, state, col, amount):
    ring[state[0] % state[2], col] += amount
    totals[col] += amount


@kernel
def acceptance_ratio_of(totals, k):
    rec = totals[2 * k + 1]
    if rec < 1:
        rec = 1
    return totals[2 * k] / rec


@kernel
def window_span(state, now):
    start = (state[0] - state[2] + 1) * state[1]
    if start < state[3]:
        start = state[3]
    return now - start


@kernel
def ma_pt(totals):
    if totals[1] == 0:
        return 0.0
    return totals[0] / totals[1]


@kernel
def ma_qps(totals, state, now, full_window=False):
    if full_window:
        span = state[1] * state[2]
    else:
        span = window_span(state, now)
    if span <= 0:
        return 0.0
    return totals[2] * 1e9 / span


def _make_state(duration: int, step: int, origin: int = 0) -> np.ndarray:
    duration, step = int(duration), int(step)
    if step <= 0 or duration % step != 0:
        raise ValueError("window duration must be a positive multiple of the step")
    if duration // step < 10:
        raise ValueError("window duration must be at least 10 steps")
    return np.array([origin // step, step, duration // step, origin], dtype=np.int64)


class SlidingWindowCounts:
    """Accepted/received counts per query type over a sliding window."""

    def __init__(self, types: Sequence[str], duration: int = NS_PER_S,
                 step: int = 10 * NS_PER_MS):
        self.types = list(types)
        self.index = {t: i for i, t in enumerate(self.types)}
        self.duration, self.step = int(duration), int(step)
        self.state = _make_state(duration, step)
        self.ring = np.zeros((int(self.state[SLOTS]), 2 * len(self.types)), dtype=np.int64)
        self.totals = np.zeros(2 * len(self.types), dtype=np.int64)

    def advance(self, now: int) -> None:
        ring_advance(self.ring, self.totals, self.state, int(now))

    def increment_received(self, qtype: str) -> None:
        ring_add(self.ring, self.totals, self.state, 2 * self.index[qtype] + RECEIVED, 1)

    def increment_accepted(self, qtype: str) -> None:
        ring_add(self.ring, self.totals, self.state, 2 * self.index[qtype] + ACCEPTED, 1)

    def query_count(self, qtype: str) -> int:
        return int(self.totals[2 * self.index[qtype] + RECEIVED])

    def accepted_count(self, qtype: str) -> int:
        return int(self.totals[2 * self.index[qtype] + ACCEPTED])

    def acceptance_ratio(self, qtype: str) -> float:
        return float(acceptance_ratio_of(self.totals, self.index[qtype]))


class MovingAverage:
    """Windowed processing-time sum, completion count and arrival count.

    ``qps_mavg`` divides by the time the live slots actually cover (never
    more than ``duration``), so the rate is not under-estimated while the
    window is still filling after ``origin``.  ``full_window=True`` always
    divides by ``duration`` instead.
    """

    def __init__(self, duration: int = 60 * NS_PER_S, step: int = NS_PER_S, origin: int = 0,
                 full_window: bool = False):
        self.duration, self.step = int(duration), int(step)
        self.full_window = bool(full_window)
        self.state = _make_state(duration, step, origin)
        self.ring = np.zeros((int(self.state[SLOTS]), 3), dtype=np.int64)
        self.totals = np.zeros(3, dtype=np.int64)

    def advance(self, now: int) -> None:
        ring_advance(self.ring, self.totals, self.state, int(now))

    def add_completion(self, pt: int) -> None:
        ring_add(self.ring, self.totals, self.state, PT_SUM, int(pt))
        ring_add(self.ring, self.totals, self.state, COMPLETIONS, 1)

    def add_arrival(self) -> None:
        ring_add(self.ring, self.totals, self.state, ARRIVALS, 1)

    def pt_mavg(self) -> float:
        """Mean processing time (ns) of completions in the window; 0 if none."""
        return float(ma_pt(self.totals))

    def qps_mavg(self, now: int) -> float:
        return float(ma_qps(self.totals, self.state, int(now), self.full_window))
