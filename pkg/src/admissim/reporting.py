"""Per-run metrics, seed-averaged sweep tables, CSV/text output, overhead timing."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core_types import NS_PER_MS, NS_PER_S, Query, Reason
from .engine import RunRecords

ALL = "ALL"

CSV_COLUMNS = (
    "scenario_id", "seed", "policy", "strategy", "qps_factor", "query_type",
    "received", "accepted", "rejected", "rejection_pct",
    "rt_p50_ms", "rt_p90_ms", "rt_mean_ms", "wt_p50_ms", "pt_p50_ms",
    "utilization", "exact_zero_flag",
)
EXACT = "exact"
ZERO_CELL = "-0-"


def nearest_rank(values: np.ndarray, q: float, presorted: bool = False) -> float:
    """The ceil(q*n)-th smallest value (1-based); NaN for an empty sample."""
    n = len(values)
    if n == 0:
        return math.nan
    if not 0.0 < q <= 1.0:
        raise ValueError("q must be in (0, 1]")
    v = values if presorted else np.sort(values)
    rank = max(1, math.ceil(q * n - 1e-9))
    return float(v[rank - 1])


@dataclass(frozen=True)
class Warmup:
    """Prefix excluded from metrics: the first max(``queries``, arrivals before ``time``)."""
    queries: int = 100_000
    time: int = 10 * NS_PER_S

    def start_index(self, arrival: np.ndarray) -> int:
        by_time = int(np.searchsorted(arrival, self.time, side="left"))
        return min(len(arrival), max(self.queries, by_time))


@dataclass
class TypeRow:
    qtype: str
    received: float
    accepted: float
    rejected: float
    rejection_pct: Optional[float]   # None when nothing was received
    rt_p50_ms: Optional[float]       # None when nothing was serviced
    rt_p90_ms: Optional[float]
    rt_mean_ms: Optional[float]
    wt_p50_ms: Optional[float]
    pt_p50_ms: Optional[float]
    exact_zero: bool = False


@dataclass
class OverheadStats:
    n: int
    mean_us: float
    p50_us: float
    p99_us: float


@dataclass
class RunReport:
    scenario_id: str
    seed: object             # int for a run, "mean" for a seed average
    policy: str
    strategy: str
    qps_factor: float
    rows: list[TypeRow]      # one per query type, then ALL
    utilization: float
    reason_counts: dict[str, int] = field(default_factory=dict)
    overhead: Optional[OverheadStats] = None

    def row(self, qtype: str) -> TypeRow:
        for r in self.rows:
            if r.qtype == qtype:
                return r
        raise KeyError(qtype)

    @property
    def overall(self) -> TypeRow:
        return self.row(ALL)


def _ms(x: float) -> Optional[float]:
    return None if math.isnan(x) else x / NS_PER_MS


def _type_row(qtype: str, acc: np.ndarray, rt: np.ndarray, wt: np.ndarray, pt: np.ndarray) -> TypeRow:
    received = int(acc.shape[0])
    accepted = int(acc.sum())
    rejected = received - accepted
    rt_s, wt_s, pt_s = np.sort(rt[acc]), np.sort(wt[acc]), np.sort(pt[acc])
    return TypeRow(
        qtype=qtype, received=received, accepted=accepted, rejected=rejected,
        rejection_pct=100.0 * rejected / received if received else None,
        rt_p50_ms=_ms(nearest_rank(rt_s, 0.5, True)),
        rt_p90_ms=_ms(nearest_rank(rt_s, 0.9, True)),
        rt_mean_ms=_ms(float(rt_s.mean())) if accepted else None,
        wt_p50_ms=_ms(nearest_rank(wt_s, 0.5, True)),
        pt_p50_ms=_ms(nearest_rank(pt_s, 0.5, True)),
        exact_zero=received > 0 and rejected == 0,
    )


def utilization(records: RunRecords, t_lo: int, t_hi: int) -> float:
    """Busy server-time inside [t_lo, t_hi] divided by P * (t_hi - t_lo)."""
    if t_hi <= t_lo:
        return 0.0
    acc = records.accepted
    start = np.maximum(records.t_deq[acc], t_lo)
    end = np.minimum(records.t_done[acc], t_hi)
    busy = np.clip(end - start, 0, None).sum()
    return float(busy) / (records.n_proc * (t_hi - t_lo))


def measurement_window(records: RunRecords, first: int) -> tuple[int, int]:
    """From the first measured arrival to the end of the drain."""
    arrival = records.workload.arrival
    if first >= len(arrival):
        return 0, 0
    t_hi = int(max(arrival[-1], records.t_done.max()))
    return int(arrival[first]), t_hi


def aggregate(records: RunRecords, scenario_id: str, seed: int, qps_factor: float,
              warmup: Warmup = Warmup(), types: Optional[Sequence[str]] = None) -> RunReport:
    """Summarise one drained run over its post-warm-up queries.

    ``types`` picks the per-type rows (default: every type that received a
    query after warm-up), in that order; the ALL row covers every query.
    """
    w = records.workload
    first = warmup.start_index(w.arrival)
    sl = slice(first, None)
    acc = records.accepted[sl]
    qt = w.qtype[sl]
    arrival = w.arrival[sl]
    rt = (records.t_done[sl] - arrival).astype(np.float64)
    wt = (records.t_deq[sl] - arrival).astype(np.float64)
    pt = w.demand[sl].astype(np.float64)
    counts = np.bincount(qt, minlength=len(w.type_names))
    if types is None:
        types = [t for i, t in enumerate(w.type_names) if counts[i] > 0]
    rows = []
    for t in types:
        m = qt == w.type_names.index(t)
        rows.append(_type_row(t, acc[m], rt[m], wt[m], pt[m]))
    rows.append(_type_row(ALL, acc, rt, wt, pt))
    codes = np.bincount(records.reason[sl].astype(np.int64), minlength=len(Reason))
    reasons = {Reason(i).name: int(c) for i, c in enumerate(codes) if c}
    t_lo, t_hi = measurement_window(records, first)
    pol = records.policy
    return RunReport(scenario_id, seed, pol.policy_name, pol.strategy_name, float(qps_factor),
                     rows, utilization(records, t_lo, t_hi), reasons)


# --------------------------------------------------------------------------
# seed averages

def _mean_opt(values: list[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def average(reports: Sequence[RunReport]) -> RunReport:
    """Cell-wise arithmetic mean over runs of the same scenario point.

    A cell is an exact zero only if every run rejected nothing of that type.
    """
    if not reports:
        raise ValueError("nothing to average")
    head = reports[0]
    rows = []
    for i, r0 in enumerate(head.rows):
        col = [rep.rows[i] for rep in reports]
        assert all(c.qtype == r0.qtype for c in col), "row layout differs between runs"
        rows.append(TypeRow(
            qtype=r0.qtype,
            received=float(np.mean([c.received for c in col])),
            accepted=float(np.mean([c.accepted for c in col])),
            rejected=float(np.mean([c.rejected for c in col])),
            rejection_pct=_mean_opt([c.rejection_pct for c in col]),
            rt_p50_ms=_mean_opt([c.rt_p50_ms for c in col]),
            rt_p90_ms=_mean_opt([c.rt_p90_ms for c in col]),
            rt_mean_ms=_mean_opt([c.rt_mean_ms for c in col]),
            wt_p50_ms=_mean_opt([c.wt_p50_ms for c in col]),
            pt_p50_ms=_mean_opt([c.pt_p50_ms for c in col]),
            exact_zero=all(c.exact_zero for c in col),
        ))
    reasons: dict[str, int] = {}
    for rep in reports:
        for k, v in rep.reason_counts.items():
            reasons[k] = reasons.get(k, 0) + v
    return RunReport(head.scenario_id, "mean", head.policy, head.strategy, head.qps_factor, rows,
                     float(np.mean([r.utilization for r in reports])), reasons)


@dataclass
class SweepReport:
    """Seed-averaged reports, one per axis point."""
    scenario_id: str
    axis: str
    points: list             # axis values, printable
    averaged: list[RunReport]
    runs: list[list[RunReport]] = field(default_factory=list)

    def cell(self, qtype: str, attr: str = "rejection_pct") -> list:
        return [getattr(rep.row(qtype), attr) for rep in self.averaged]


# --------------------------------------------------------------------------
# CSV

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_rows(report: RunReport) -> Iterable[list[str]]:
    for r in report.rows:
        yield [
            report.scenario_id, _fmt(report.seed), report.policy, report.strategy,
            _fmt(report.qps_factor), r.qtype, _fmt(r.received), _fmt(r.accepted),
            _fmt(r.rejected), _fmt(r.rejection_pct), _fmt(r.rt_p50_ms), _fmt(r.rt_p90_ms),
            _fmt(r.rt_mean_ms), _fmt(r.wt_p50_ms), _fmt(r.pt_p50_ms),
            _fmt(report.utilization), EXACT if r.exact_zero else "",
        ]


def emit_csv(reports: RunReport | Sequence[RunReport], path: str | Path) -> Path:
    if isinstance(reports, RunReport):
        reports = [reports]
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(CSV_COLUMNS)
            for rep in reports:
                out.writerows(csv_rows(rep))
    except OSError as e:
        raise OSError(f"cannot write report {path}: {e}") from e
    return path


def _num(s: str):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        return float(s)


def read_csv(path: str | Path) -> list[RunReport]:
    """Parse a file written by :func:`emit_csv` back into reports."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise OSError(f"cannot read report {path}: {e}") from e
    reports: list[RunReport] = []
    key = None
    for d in rows:
        k = (d["scenario_id"], d["seed"], d["policy"], d["strategy"], d["qps_factor"], d["utilization"])
        if k != key or any(r.qtype == d["query_type"] for r in reports[-1].rows):
            seed = _num(d["seed"]) if d["seed"].lstrip("-").isdigit() else d["seed"]
            reports.append(RunReport(d["scenario_id"], seed, d["policy"], d["strategy"],
                                     float(d["qps_factor"]), [], float(d["utilization"])))
            key = k
        reports[-1].rows.append(TypeRow(
            qtype=d["query_type"],
            received=_num(d["received"]), accepted=_num(d["accepted"]), rejected=_num(d["rejected"]),
            rejection_pct=_num(d["rejection_pct"]), rt_p50_ms=_num(d["rt_p50_ms"]),
            rt_p90_ms=_num(d["rt_p90_ms"]), rt_mean_ms=_num(d["rt_mean_ms"]),
            wt_p50_ms=_num(d["wt_p50_ms"]), pt_p50_ms=_num(d["pt_p50_ms"]),
            exact_zero=d["exact_zero_flag"] == EXACT,
        ))
    return reports


# --------------------------------------------------------------------------
# text tables

def format_cell(row: TypeRow, attr: str = "rejection_pct") -> str:
    if attr == "rejection_pct" and row.exact_zero:
        return ZERO_CELL
    v = getattr(row, attr)
    return "" if v is None else f"{v:.2f}"


def emit_table(sweeps: SweepReport | Sequence[SweepReport], attr: str = "rejection_pct") -> str:
    """Rows are (policy, strategy) x query type, columns the axis points."""
    if isinstance(sweeps, SweepReport):
        sweeps = [sweeps]
    lines = []
    for sw in sweeps:
        head = [f"{sw.axis}"] + [_point_label(p) for p in sw.points]
        body = []
        qtypes = [r.qtype for r in sw.averaged[0].rows] if sw.averaged else []
        label = sw.averaged[0].policy + (f" ({sw.averaged[0].strategy})"
                                         if sw.averaged and sw.averaged[0].strategy != "none" else "")
        for t in qtypes:
            body.append([f"{label} {t}"] + [format_cell(rep.row(t), attr) for rep in sw.averaged])
        widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
        lines.append(f"# {sw.scenario_id}: {attr}")
        for r in [head] + body:
            lines.append("  ".join(c.rjust(wd) if i else c.ljust(wd) for i, (c, wd) in enumerate(zip(r, widths))))
        util = ["utilization"] + [f"{rep.utilization:.3f}" for rep in sw.averaged]
        lines.append("  ".join(c.rjust(wd) if i else c.ljust(wd) for i, (c, wd) in enumerate(zip(util, widths))))
        lines.append("")
    return "\n".join(lines)


def _point_label(p) -> str:
    if isinstance(p, float):
        return f"{p:g}"
    if isinstance(p, dict):
        return "/".join(f"{v / NS_PER_MS:g}" if isinstance(v, (int, float)) else str(v) for v in p.values())
    return str(p)


# --------------------------------------------------------------------------
# decision overhead

class OverheadTimer:
    """Wall-clock latency of individual decision calls."""

    def __init__(self, clock: Callable[[], int] = time.perf_counter_ns):
        self._clock = clock
        self.samples: list[int] = []

    def call(self, fn, *args):
        t0 = self._clock()
        out = fn(*args)
        self.samples.append(self._clock() - t0)
        return out

    def stats(self) -> OverheadStats:
        if not self.samples:
            raise ValueError("no decisions timed")
        a = np.asarray(self.samples, dtype=np.float64) / 1e3
        return OverheadStats(len(a), float(a.mean()), float(np.percentile(a, 50)),
                             float(np.percentile(a, 99)))


def measure_decision_overhead(policy, workload, n_decisions: int = 1_000_000,
                              queue_counts: Optional[dict[str, int]] = None,
                              timer: Optional[OverheadTimer] = None) -> OverheadStats:
    """Time ``policy.on_arrival`` along a workload's arrivals.

    Every accepted query is also handed to ``on_complete`` (untimed) so the
    policy's histograms and windows fill and swap as they would in a run.
    The queue is held at ``queue_counts`` (default: a few hundred queries in
    mix proportions) so the wait estimate does real work.
    """
    from .policies import QueueView

    timer = timer or OverheadTimer()
    names = workload.type_names
    qv = QueueView(names)
    if queue_counts is None:
        share = np.bincount(workload.qtype[:10_000], minlength=len(names)) / min(10_000, len(workload))
        queue_counts = {t: int(round(200 * s)) for t, s in zip(names, share)}
    for t, c in queue_counts.items():
        qv.per_type[qv.index[t]] = c
    n = len(workload)
    for i in range(n_decisions):
        j = i % n
        lap = (i // n) * (int(workload.arrival[-1]) + NS_PER_S)
        now = int(workload.arrival[j]) + lap
        q = Query(i, names[workload.qtype[j]], now, int(workload.demand[j]))
        decision = timer.call(policy.on_arrival, q, qv, now)
        q.decide(decision)
        if decision.accepted:
            q.t_enqueued = q.t_dequeued = now
            q.t_completed = now + q.service_demand
            policy.on_complete(q, now)
    return timer.stats()
