"""Discrete-event simulation of an admission-controlled FIFO query engine.

Arrivals are decided on the spot; accepted queries wait in one FIFO queue
served by ``P`` identical processes.  At equal timestamps completions are
handled before arrivals, completions among themselves by query id.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ._jit import kernel
from .core_types import DEFAULT_TYPE, Decision, Query
from .histogram import BucketScheme, dual_maybe_swap, dual_record
from .policies import (K_ACCEPT_ALL, K_ACCEPT_FRACTION, K_ALLOWANCE, K_BOUNCER, K_MAXQL,
                       K_MAXQWT, K_UNDERSERVED, Policy, PolicySpec, QueueView,
                       accept_fraction_kernel, allowance_prefilter, bouncer_kernel,
                       maxqwt_kernel, slo_matrix, underserved_probability)
from .sliding_window import ma_pt, ma_qps, ring_add, ring_advance
from .workload import STREAM_POLICY, Workload, streams

# fparams layout
F_A, F_ALPHA, F_LLIMIT, F_APC, F_PU, F_UPDATE, F_TIMEOUT, F_EXPIRATION, F_EMPTY, F_QPS_FULL = range(10)


@kernel
def _heap_push(ht, hq, size, t, q):
    i = size
    ht[i] = t
    hq[i] = q
    while i > 0:
        parent = (i - 1) >> 1
        if ht[parent] < ht[i] or (ht[parent] == ht[i] and hq[parent] < hq[i]):
            break
        ht[parent], ht[i] = ht[i], ht[parent]
        hq[parent], hq[i] = hq[i], hq[parent]
        i = parent
    return size + 1


@kernel
def _heap_pop(ht, hq, size):
    size -= 1
    ht[0] = ht[size]
    hq[0] = hq[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        c = left
        right = left + 1
        if right < size and (ht[right] < ht[left] or (ht[right] == ht[left] and hq[right] < hq[left])):
            c = right
        if ht[i] < ht[c] or (ht[i] == ht[c] and hq[i] < hq[c]):
            break
        ht[c], ht[i] = ht[i], ht[c]
        hq[c], hq[i] = hq[i], hq[c]
        i = c
    return size


@kernel
def simulate_kernel(arrival, qtype, demand, n_types, n_proc, kind, fparams, slo, default_k,
                    limits, known, uniforms, bounds, swap_interval, min_samples,
                    sw_duration, sw_step, ma_duration, ma_step, queue_cap,
                    reason, t_deq, t_done, est50, est90, hu_p):
    n = arrival.shape[0]
    bouncer_family = kind == 0 or kind == 1 or kind == 2
    uses_ma = kind == 4 or kind == 5

    n_hist = n_types + 1
    counts = np.zeros((n_hist, 2, bounds.shape[0] + 1), dtype=np.int64)
    tally = np.zeros((n_hist, 2, 3), dtype=np.int64)
    meta = np.zeros((n_hist, 2), dtype=np.int64)
    stats = np.zeros((n_hist, 4), dtype=np.float64)
    qcounts = np.zeros(n_types, dtype=np.int64)

    sw_state = np.array([0, sw_step, sw_duration // sw_step, 0], dtype=np.int64)
    sw_ring = np.zeros((sw_state[2], 2 * n_types), dtype=np.int64)
    sw_tot = np.zeros(2 * n_types, dtype=np.int64)
    ma_state = np.array([0, ma_step, ma_duration // ma_step, 0], dtype=np.int64)
    ma_ring = np.zeros((ma_state[2], 3), dtype=np.int64)
    ma_tot = np.zeros(3, dtype=np.int64)

    allowance = fparams[0]
    alpha = fparams[1]
    l_limit = fparams[2]
    apc = fparams[3]
    pu = fparams[4]
    update_interval = np.int64(fparams[5])
    timeout_on = fparams[6] > 0.0
    expiration = fparams[7]
    empty_action = np.int64(fparams[8])
    qps_full = fparams[9] > 0.0
    f = 1.0
    next_update = update_interval
    draw = 0

    queue = np.empty(n, dtype=np.int64)
    qh = 0
    qt = 0
    ht = np.empty(n_proc, dtype=np.int64)
    hq = np.empty(n_proc, dtype=np.int64)
    busy = 0
    i = 0
    while i < n or busy > 0:
        if busy > 0 and (i >= n or ht[0] <= arrival[i]):
            # completion (metric point 3)
            now = ht[0]
            q = hq[0]
            busy = _heap_pop(ht, hq, busy)
            pt = demand[q]
            if bouncer_family:
                dual_record(counts, tally, meta, qtype[q], pt, bounds)
                dual_record(counts, tally, meta, n_types, pt, bounds)
            elif uses_ma:
                ring_advance(ma_ring, ma_tot, ma_state, now)
                ring_add(ma_ring, ma_tot, ma_state, 0, pt)
                ring_add(ma_ring, ma_tot, ma_state, 1, 1)
            if qh < qt:
                # dequeue (metric point 2)
                q2 = queue[qh]
                qh += 1
                qcounts[qtype[q2]] -= 1
                t_deq[q2] = now
                t_done[q2] = now + demand[q2]
                busy = _heap_push(ht, hq, busy, t_done[q2], q2)
            continue

        # arrival (metric point 1)
        now = arrival[i]
        q = i
        i += 1
        k = qtype[q]
        qlen = qt - qh
        code = 0
        if queue_cap > 0 and qlen >= queue_cap:
            code = 5
        elif bouncer_family:
            for h in range(n_hist):
                dual_maybe_swap(counts, tally, meta, stats, h, now, swap_interval, min_samples, bounds)
            if kind == 0:
                code, ewt, e50, e90 = bouncer_kernel(k, qcounts, stats, slo, default_k, n_proc, empty_action)
                est50[q] = e50
                est90[q] = e90
            elif kind == 1:
                ring_advance(sw_ring, sw_tot, sw_state, now)
                if allowance_prefilter(sw_tot, k, allowance):
                    code = 1
                else:
                    code, ewt, e50, e90 = bouncer_kernel(k, qcounts, stats, slo, default_k, n_proc, empty_action)
                    est50[q] = e50
                    est90[q] = e90
                    if code >= 4:
                        u = uniforms[draw]
                        draw += 1
                        if u < allowance:
                            code = 1
                if code < 4:
                    ring_add(sw_ring, sw_tot, sw_state, 2 * k, 1)
                ring_add(sw_ring, sw_tot, sw_state, 2 * k + 1, 1)
            else:
                ring_advance(sw_ring, sw_tot, sw_state, now)
                code, ewt, e50, e90 = bouncer_kernel(k, qcounts, stats, slo, default_k, n_proc, empty_action)
                est50[q] = e50
                est90[q] = e90
                if code >= 4:
                    p = underserved_probability(sw_tot, k, known, alpha)
                    hu_p[q] = p
                    if p > 0.0:
                        u = uniforms[draw]
                        draw += 1
                        if u < p:
                            code = 2
                if code < 4:
                    ring_add(sw_ring, sw_tot, sw_state, 2 * k, 1)
                ring_add(sw_ring, sw_tot, sw_state, 2 * k + 1, 1)
        elif kind == 3:
            if qlen >= l_limit:
                code = 5
        elif kind == 4:
            ring_advance(ma_ring, ma_tot, ma_state, now)
            code = maxqwt_kernel(qlen, ma_pt(ma_tot), n_proc, limits[k])
        elif kind == 5:
            ring_advance(ma_ring, ma_tot, ma_state, now)
            while now >= next_update:
                f = accept_fraction_kernel(apc, ma_qps(ma_tot, ma_state, now, qps_full), ma_pt(ma_tot))
                next_update += update_interval
            ring_add(ma_ring, ma_tot, ma_state, 2, 1)
            u = uniforms[draw]
            draw += 1
            if u >= f:
                code = 7
            elif timeout_on and qlen * ma_pt(ma_tot) / pu > expiration:
                code = 8

        reason[q] = code
        if code < 4:
            if busy < n_proc:
                t_deq[q] = now
                t_done[q] = now + demand[q]
                busy = _heap_push(ht, hq, busy, t_done[q], q)
            else:
                queue[qt] = q
                qt += 1
                qcounts[k] += 1
    return draw


@dataclass
class RunRecords:
    """Per-query outcome arrays of one simulation run."""
    workload: Workload
    n_proc: int
    policy: PolicySpec
    reason: np.ndarray
    t_deq: np.ndarray
    t_done: np.ndarray
    est_p50: np.ndarray
    est_p90: np.ndarray
    hu_p: np.ndarray
    slo: np.ndarray  # (p50, p90) SLO row per type index, ns

    @property
    def accepted(self) -> np.ndarray:
        return self.reason < 4

    @property
    def n(self) -> int:
        return len(self.workload)

    def query(self, i: int) -> Query:
        w = self.workload
        q = Query(id=i, qtype=w.type_names[w.qtype[i]], t_arrival=int(w.arrival[i]),
                  service_demand=int(w.demand[i]))
        d = Decision.from_code(int(self.reason[i]))
        q.decide(d)
        if d.accepted:
            q.t_enqueued = int(w.arrival[i])
            q.t_dequeued = int(self.t_deq[i])
            q.t_completed = int(self.t_done[i])
        return q

    def queries(self) -> Iterable[Query]:
        for i in range(self.n):
            yield self.query(i)


def _kernel_inputs(policy: PolicySpec, type_names: list[str], n_proc: int):
    fparams = np.zeros(10)
    fparams[F_A] = policy.A
    fparams[F_ALPHA] = policy.alpha
    fparams[F_LLIMIT] = policy.L_limit
    pu = policy.PU or n_proc
    fparams[F_APC] = policy.max_util * pu
    fparams[F_PU] = pu
    fparams[F_UPDATE] = policy.update_interval
    fparams[F_TIMEOUT] = 1.0 if policy.enforce_timeout_rejection and policy.expiration else 0.0
    fparams[F_EXPIRATION] = policy.expiration or 0
    fparams[F_EMPTY] = policy.empty_histogram_action.value
    fparams[F_QPS_FULL] = 1.0 if policy.qps_over_full_window else 0.0
    if policy.slos is not None:
        slo = slo_matrix(policy.slos, type_names)
        default_k = type_names.index(DEFAULT_TYPE)
    else:
        slo = np.ones((len(type_names), 2))
        default_k = 0
    # QT defaults to the whole type universe, zero-traffic types included
    known_names = policy.known_types if policy.known_types is not None else type_names
    known = np.array([t in known_names for t in type_names], dtype=np.bool_)
    return fparams, slo, default_k, policy.wait_limits(type_names), known


def type_universe(policy: PolicySpec, workload_types: Iterable[str]) -> list[str]:
    names = list(policy.slos) if policy.slos is not None else []
    for t in workload_types:
        if t not in names:
            names.append(t)
    if DEFAULT_TYPE not in names:
        names.append(DEFAULT_TYPE)
    return names


def simulate(workload: Workload, policy: PolicySpec, n_proc: int, seed: int,
             queue_cap: int = 0, scheme: Optional[BucketScheme] = None) -> RunRecords:
    """Run one simulation over a pre-generated workload.

    ``workload.type_names`` must be the run's full type universe (see
    :func:`type_universe`); the policy's coin flips come from the policy
    stream of ``seed``.
    """
    if n_proc < 1:
        raise ValueError("n_proc must be >= 1")
    names = list(workload.type_names)
    n = len(workload)
    fparams, slo, default_k, limits, known = _kernel_inputs(policy, names, n_proc)
    if policy.code in (K_ALLOWANCE, K_UNDERSERVED, K_ACCEPT_FRACTION):
        uniforms = streams(seed)[STREAM_POLICY].random(n)
    else:
        uniforms = np.zeros(1)
    bounds = (scheme or BucketScheme()).boundaries()
    reason = np.zeros(n, dtype=np.int8)
    t_deq = np.full(n, -1, dtype=np.int64)
    t_done = np.full(n, -1, dtype=np.int64)
    est50 = np.full(n, np.nan)
    est90 = np.full(n, np.nan)
    hu_p = np.full(n, np.nan)
    sw_d, sw_s = policy.strategy_window
    ma_d, ma_s = policy.mavg_window
    simulate_kernel(workload.arrival, workload.qtype, workload.demand, len(names), int(n_proc),
                    policy.code, fparams, slo, default_k, limits, known, uniforms, bounds,
                    int(policy.swap_interval), int(policy.min_samples_to_swap),
                    int(sw_d), int(sw_s), int(ma_d), int(ma_s), int(queue_cap),
                    reason, t_deq, t_done, est50, est90, hu_p)
    return RunRecords(workload, n_proc, policy, reason, t_deq, t_done, est50, est90, hu_p, slo)


def run_objects(queries: list[Query], policy: Policy, n_proc: int, type_names: list[str],
                queue_cap: int = 0) -> list[Query]:
    """Reference event loop driving a hook-based :class:`Policy` object.

    Much slower than :func:`simulate`; used to cross-check the kernel and
    to exercise the hook interface directly.
    """
    qv = QueueView(type_names)
    events: list[tuple] = []  # (time, rank, id, query); completions rank 0
    for q in queries:
        heapq.heappush(events, (q.t_arrival, 1, q.id, q))
    fifo: list[Query] = []
    head = 0
    idle = n_proc

    def start(q, now):
        q.t_dequeued = now
        q.t_completed = now + q.service_demand
        heapq.heappush(events, (q.t_completed, 0, q.id, q))

    while events:
        now, rank, _, q = heapq.heappop(events)
        if rank == 0:
            policy.on_complete(q, now)
            if head < len(fifo):
                nxt = fifo[head]
                head += 1
                qv.dequeue(nxt.qtype)
                start(nxt, now)
                policy.on_dequeue(nxt, now)
            else:
                idle += 1
            continue
        if queue_cap and len(fifo) - head >= queue_cap:
            q.decide(Decision.from_code(5))
            continue
        decision = policy.on_arrival(q, qv, now)
        q.decide(decision)
        if not decision.accepted:
            continue
        q.t_enqueued = now
        policy.on_enqueue(q, now)
        if idle > 0:
            idle -= 1
            start(q, now)
            policy.on_dequeue(q, now)
        else:
            fifo.append(q)
            qv.enqueue(q.qtype)
    return queries
