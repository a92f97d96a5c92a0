"""Declarative experiment descriptions stored as YAML.

A scenario fixes the server (``P``), the workload mix, one admission policy,
the run length and the seeds, plus an optional sweep axis.  Durations are
always strings with a unit ("18ms").  ``load`` validates everything up front
and raises :class:`ConfigError` naming the offending field.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .core_types import DEFAULT_TYPE, NS_PER_S, Slo, SloTable, format_duration, parse_duration
from .engine import simulate, type_universe
from .histogram import BucketScheme
from .policies import POLICY_KINDS, EmptyHistogramAction, PolicySpec
from .reporting import RunReport, Warmup, aggregate
from .workload import (ConfigError, Constant, Exponential, FitError, FromStats, Lognormal,
                       QueryTypeSpec, WorkloadSpec, full_load_qps, generate)

SWEEP_AXES = ("qps_factor", "A", "alpha", "wait_limits")
CANNED_PACKAGE = "admissim.scenarios"

Point = Union[float, dict]


@dataclass(frozen=True)
class WorkloadSection:
    types: tuple            # of QueryTypeSpec
    qps_factor: Optional[float] = None
    qps: Optional[float] = None
    arrival: str = "poisson"

    def spec(self, P: int, qps_factor: Optional[float] = None) -> WorkloadSpec:
        base = WorkloadSpec(self.types, 1.0, self.arrival)
        factor = qps_factor if qps_factor is not None else self.qps_factor
        rate = full_load_qps(base, P) * factor if factor is not None else self.qps
        return base.with_rate(rate)


@dataclass(frozen=True)
class SweepAxis:
    axis: str
    values: tuple


@dataclass(frozen=True)
class Scenario:
    name: str
    P: int
    workload: WorkloadSection
    policy: PolicySpec
    query_count: int = 1_500_000
    warmup: Warmup = Warmup()
    seeds: tuple = (1, 2, 3, 4, 5)
    sweep: Optional[SweepAxis] = None
    queue_cap: int = 0
    histogram: Optional[BucketScheme] = None

    def points(self) -> list:
        if self.sweep is None:
            return [self.workload.qps_factor if self.workload.qps_factor is not None else None]
        return list(self.sweep.values)

    @property
    def axis(self) -> str:
        return self.sweep.axis if self.sweep else "qps_factor"

    def at(self, point: Point) -> tuple[PolicySpec, Optional[float]]:
        """Policy and load factor of one sweep point."""
        factor = self.workload.qps_factor
        pol = self.policy
        if self.sweep is None or self.axis == "qps_factor":
            factor = point if self.sweep else factor
        elif self.axis == "A":
            pol = replace(pol, A=float(point))
        elif self.axis == "alpha":
            pol = replace(pol, alpha=float(point))
        elif self.axis == "wait_limits":
            pol = replace(pol, per_type_limits=dict(point))
        return pol, factor


# --------------------------------------------------------------------------
# parsing


class _Ctx:
    """Locates YAML paths in the composed node tree for error messages."""

    def __init__(self, root: Optional[yaml.Node] = None, source: str = "<scenario>"):
        self.root, self.source = root, source

    def line(self, path: tuple) -> Optional[int]:
        node = self.root
        for key in path:
            if isinstance(node, yaml.MappingNode):
                nxt = None
                for k, v in node.value:
                    if k.value == key:
                        nxt = v
                        break
                if nxt is None:
                    break
                node = nxt
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
            else:
                break
        return None if node is None else node.start_mark.line + 1

    def fail(self, path: tuple, msg: str):
        where = ".".join(str(p) for p in path) or "<root>"
        line = self.line(path)
        loc = f"{self.source}:{line}: " if line is not None else f"{self.source}: "
        raise ConfigError(f"{loc}{where}: {msg}")


def _get(ctx: _Ctx, d: dict, path: tuple, key: str, default: Any = ..., kind=None):
    if not isinstance(d, dict):
        ctx.fail(path, "expected a mapping")
    if key not in d:
        if default is ...:
            ctx.fail(path, f"missing required key {key!r}")
        return default
    v = d[key]
    if kind is None or v is None and default is None:
        return v
    # bool is an int subclass but never a valid number here
    if not isinstance(v, kind) or (isinstance(v, bool) and kind is not bool):
        ctx.fail(path + (key,), f"expected {getattr(kind, '__name__', 'a number')}, got {v!r}")
    return v


def _duration(ctx: _Ctx, path: tuple, v) -> int:
    try:
        return parse_duration(v)
    except ValueError as e:
        ctx.fail(path, str(e))


def _check_keys(ctx: _Ctx, d: dict, path: tuple, allowed):
    if not isinstance(d, dict):
        ctx.fail(path, "expected a mapping")
    extra = sorted(set(d) - set(allowed), key=str)
    if extra:
        ctx.fail(path + (extra[0],), f"unknown key {extra[0]!r}; allowed: {', '.join(allowed)}")


def _parse_dist(ctx: _Ctx, d, path):
    kind = _get(ctx, d, path, "kind", kind=str)
    if kind == "from_stats":
        _check_keys(ctx, d, path, ("kind", "mean", "p50"))
        mean = _duration(ctx, path + ("mean",), _get(ctx, d, path, "mean"))
        p50 = _duration(ctx, path + ("p50",), _get(ctx, d, path, "p50"))
        dist = FromStats(mean / NS_PER_S, p50 / NS_PER_S)
        try:
            dist.fitted()
        except FitError as e:
            ctx.fail(path, str(e))
        return dist
    if kind == "lognormal":
        _check_keys(ctx, d, path, ("kind", "mu", "sigma"))
        mu = _get(ctx, d, path, "mu", kind=(int, float))
        sigma = _get(ctx, d, path, "sigma", kind=(int, float))
        if not sigma > 0:
            ctx.fail(path + ("sigma",), "must be > 0")
        return Lognormal(float(mu), float(sigma))
    if kind == "exponential":
        _check_keys(ctx, d, path, ("kind", "mean"))
        mean = _duration(ctx, path + ("mean",), _get(ctx, d, path, "mean"))
        if mean <= 0:
            ctx.fail(path + ("mean",), "must be > 0")
        return Exponential(NS_PER_S / mean)
    if kind == "constant":
        _check_keys(ctx, d, path, ("kind", "value"))
        v = _duration(ctx, path + ("value",), _get(ctx, d, path, "value"))
        if v <= 0:
            ctx.fail(path + ("value",), "must be > 0")
        return Constant(v / NS_PER_S)
    ctx.fail(path + ("kind",), f"unknown distribution {kind!r}; expected from_stats, lognormal, exponential or constant")


def _parse_workload(ctx: _Ctx, d, path=("workload",)) -> WorkloadSection:
    _check_keys(ctx, d, path, ("types", "qps_factor", "qps", "arrival"))
    raw = _get(ctx, d, path, "types", kind=list)
    types = []
    for i, t in enumerate(raw):
        p = path + ("types", i)
        _check_keys(ctx, t, p, ("name", "proportion", "dist"))
        name = _get(ctx, t, p, "name", kind=str)
        if not name:
            ctx.fail(p + ("name",), "must be non-empty")
        prop = _get(ctx, t, p, "proportion", kind=(int, float))
        types.append(QueryTypeSpec(name, float(prop), _parse_dist(ctx, _get(ctx, t, p, "dist"), p + ("dist",))))
    factor = _get(ctx, d, path, "qps_factor", None, kind=(int, float))
    qps = _get(ctx, d, path, "qps", None, kind=(int, float))
    if (factor is None) == (qps is None):
        ctx.fail(path, "give exactly one of 'qps_factor' or 'qps'")
    for key, v in (("qps_factor", factor), ("qps", qps)):
        if v is not None and not v > 0:
            ctx.fail(path + (key,), "must be > 0")
    arrival = _get(ctx, d, path, "arrival", "poisson", kind=str)
    sec = WorkloadSection(tuple(types), None if factor is None else float(factor),
                          None if qps is None else float(qps), arrival)
    try:
        sec.spec(1)
    except ConfigError as e:
        ctx.fail(path, str(e))
    return sec


def _parse_slos(ctx: _Ctx, d, path) -> SloTable:
    if not isinstance(d, dict):
        ctx.fail(path, "expected a mapping of query type to {p50, p90}")
    if DEFAULT_TYPE not in d:
        ctx.fail(path, f"missing required key {DEFAULT_TYPE!r}")
    out = {}
    for t, v in d.items():
        p = path + (t,)
        _check_keys(ctx, v, p, ("p50", "p90"))
        p50 = _duration(ctx, p + ("p50",), _get(ctx, v, p, "p50"))
        p90 = _duration(ctx, p + ("p90",), _get(ctx, v, p, "p90"))
        try:
            out[str(t)] = Slo(p50, p90)
        except ValueError as e:
            ctx.fail(p, str(e))
    return SloTable(out)


def _parse_limits(ctx: _Ctx, d, path) -> dict:
    if not isinstance(d, dict) or not d:
        ctx.fail(path, "expected a non-empty mapping of query type to duration")
    out = {}
    for t, v in d.items():
        ns = _duration(ctx, path + (t,), v)
        if ns <= 0:
            ctx.fail(path + (t,), "must be > 0")
        out[str(t)] = ns
    return out


def _parse_window(ctx: _Ctx, d, path) -> tuple[int, int]:
    _check_keys(ctx, d, path, ("duration", "step"))
    dur = _duration(ctx, path + ("duration",), _get(ctx, d, path, "duration"))
    step = _duration(ctx, path + ("step",), _get(ctx, d, path, "step"))
    if step <= 0 or dur <= 0 or dur % step:
        ctx.fail(path, "duration must be a positive multiple of step")
    return dur, step


_POLICY_DEFAULTS = PolicySpec("maxql")
_DURATION_FIELDS = ("T_limit", "update_interval", "expiration", "swap_interval")
_WINDOW_FIELDS = ("strategy_window", "mavg_window")
_POLICY_FIELDS = [f.name for f in dataclasses.fields(PolicySpec)]


def _parse_policy(ctx: _Ctx, d, path=("policy",)) -> PolicySpec:
    _check_keys(ctx, d, path, _POLICY_FIELDS)
    kind = _get(ctx, d, path, "kind", kind=str)
    if kind not in POLICY_KINDS:
        ctx.fail(path + ("kind",), f"unknown policy {kind!r}; expected one of {', '.join(POLICY_KINDS)}")
    kw: dict[str, Any] = {"kind": kind}
    for key, v in d.items():
        p = path + (key,)
        if key == "kind":
            continue
        if key == "slos":
            kw[key] = _parse_slos(ctx, v, p)
        elif key in _DURATION_FIELDS:
            kw[key] = _duration(ctx, p, v)
        elif key in _WINDOW_FIELDS:
            kw[key] = _parse_window(ctx, v, p)
        elif key == "per_type_limits":
            kw[key] = _parse_limits(ctx, v, p)
        elif key == "known_types":
            if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
                ctx.fail(p, "expected a list of type names")
            kw[key] = list(v)
        elif key == "empty_histogram_action":
            names = [a.name.lower() for a in EmptyHistogramAction]
            if v not in names:
                ctx.fail(p, f"expected one of {', '.join(names)}")
            kw[key] = EmptyHistogramAction[v.upper()]
        elif key in ("enforce_timeout_rejection", "qps_over_full_window"):
            if not isinstance(v, bool):
                ctx.fail(p, "expected true or false")
            kw[key] = v
        elif key in ("L_limit", "PU", "min_samples_to_swap"):
            if not isinstance(v, int) or isinstance(v, bool):
                ctx.fail(p, "expected an integer")
            kw[key] = v
        else:  # A, alpha, max_util
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                ctx.fail(p, "expected a number")
            kw[key] = float(v)
    if kind.startswith("bouncer") and "slos" not in kw:
        ctx.fail(path, "missing required key 'slos'")
    try:
        return PolicySpec(**kw)
    except ValueError as e:
        ctx.fail(path, str(e))


def _parse_sweep(ctx: _Ctx, d, path=("sweep",)) -> SweepAxis:
    _check_keys(ctx, d, path, ("axis", "values"))
    axis = _get(ctx, d, path, "axis", kind=str)
    if axis not in SWEEP_AXES:
        ctx.fail(path + ("axis",), f"unknown axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}")
    raw = _get(ctx, d, path, "values", kind=list)
    if not raw:
        ctx.fail(path + ("values",), "must be non-empty")
    values = []
    for i, v in enumerate(raw):
        p = path + ("values", i)
        if axis == "wait_limits":
            values.append(_parse_limits(ctx, v, p))
            continue
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            ctx.fail(p, "expected a number")
        v = float(v)
        ok = {"qps_factor": v > 0, "A": 0.0 <= v <= 1.0, "alpha": 0.0 < v <= 1.0}[axis]
        if not ok:
            rng = {"qps_factor": "> 0", "A": "in [0, 1]", "alpha": "in (0, 1]"}[axis]
            ctx.fail(p, f"{axis} must be {rng}, got {v}")
        values.append(v)
    return SweepAxis(axis, tuple(values))


def sweep_axis(axis: str, values: list, source: str = "<sweep>") -> SweepAxis:
    """Validated sweep axis from plain values (durations as strings)."""
    return _parse_sweep(_Ctx(source=source), {"axis": axis, "values": list(values)})


_TOP_KEYS = ("name", "P", "workload", "policy", "query_count", "warmup", "seeds", "sweep",
             "queue_cap", "histogram")


def from_dict(d: dict, ctx: Optional[_Ctx] = None) -> Scenario:
    ctx = ctx or _Ctx()
    if not isinstance(d, dict):
        ctx.fail((), "scenario must be a mapping")
    _check_keys(ctx, d, (), _TOP_KEYS)
    name = _get(ctx, d, (), "name", kind=str)
    P = _get(ctx, d, (), "P", kind=int)
    if P < 1:
        ctx.fail(("P",), "must be >= 1")
    workload = _parse_workload(ctx, _get(ctx, d, (), "workload"))
    policy = _parse_policy(ctx, _get(ctx, d, (), "policy"))
    count = _get(ctx, d, (), "query_count", 1_500_000, kind=int)
    if count < 1:
        ctx.fail(("query_count",), "must be >= 1")
    warm = Warmup()
    if "warmup" in d:
        w = d["warmup"]
        _check_keys(ctx, w, ("warmup",), ("queries", "time"))
        q = _get(ctx, w, ("warmup",), "queries", warm.queries, kind=int)
        t = _duration(ctx, ("warmup", "time"), w["time"]) if "time" in w else warm.time
        if q < 0 or t < 0:
            ctx.fail(("warmup",), "must be nonnegative")
        warm = Warmup(q, t)
    seeds = _get(ctx, d, (), "seeds", [1, 2, 3, 4, 5], kind=list)
    if not seeds or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
        ctx.fail(("seeds",), "expected a non-empty list of nonnegative integers")
    sweep = _parse_sweep(ctx, d["sweep"]) if d.get("sweep") is not None else None
    cap = _get(ctx, d, (), "queue_cap", 0, kind=int)
    if cap < 0:
        ctx.fail(("queue_cap",), "must be >= 0 (0 disables the cap)")
    scheme = None
    if "histogram" in d:
        h = d["histogram"]
        _check_keys(ctx, h, ("histogram",), ("lower_bound", "growth", "bucket_count"))
        dflt = BucketScheme()
        lb = _duration(ctx, ("histogram", "lower_bound"), h["lower_bound"]) if "lower_bound" in h else dflt.lower_bound
        try:
            scheme = BucketScheme(lb, float(_get(ctx, h, ("histogram",), "growth", dflt.growth, kind=(int, float))),
                                  _get(ctx, h, ("histogram",), "bucket_count", dflt.bucket_count, kind=int))
        except ValueError as e:
            ctx.fail(("histogram",), str(e))
    return Scenario(name, P, workload, policy, count, warm, tuple(seeds), sweep, cap, scheme)


def loads(text: str, source: str = "<scenario>") -> Scenario:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{source}: invalid YAML: {e}") from e
    return from_dict(data, _Ctx(root, source))


def load(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read scenario {path}: {e}") from e
    return loads(text, str(path))


# --------------------------------------------------------------------------
# serialization


def _dist_dict(dist) -> dict:
    if isinstance(dist, FromStats):
        return {"kind": "from_stats", "mean": format_duration(round(dist.mean_s * NS_PER_S)),
                "p50": format_duration(round(dist.p50_s * NS_PER_S))}
    if isinstance(dist, Lognormal):
        return {"kind": "lognormal", "mu": dist.mu, "sigma": dist.sigma}
    if isinstance(dist, Exponential):
        return {"kind": "exponential", "mean": format_duration(round(NS_PER_S / dist.rate))}
    if isinstance(dist, Constant):
        return {"kind": "constant", "value": format_duration(round(dist.value_s * NS_PER_S))}
    raise TypeError(f"unsupported distribution {dist!r}")


def _limits_dict(limits: dict) -> dict:
    return {t: format_duration(v) for t, v in limits.items()}


def _policy_dict(pol: PolicySpec) -> dict:
    out: dict[str, Any] = {"kind": pol.kind}
    for name in _POLICY_FIELDS:
        v = getattr(pol, name)
        if name == "kind" or v == getattr(_POLICY_DEFAULTS, name):
            continue
        if name == "slos":
            v = {t: {"p50": format_duration(s.p50_target), "p90": format_duration(s.p90_target)}
                 for t, s in v.items()}
        elif name in _DURATION_FIELDS:
            v = format_duration(v)
        elif name in _WINDOW_FIELDS:
            v = {"duration": format_duration(v[0]), "step": format_duration(v[1])}
        elif name == "per_type_limits":
            v = _limits_dict(v)
        elif name == "empty_histogram_action":
            v = v.name.lower()
        out[name] = v
    return out


def to_dict(sc: Scenario) -> dict:
    wl: dict[str, Any] = {"types": [{"name": t.qtype, "proportion": t.proportion, "dist": _dist_dict(t.dist)}
                                    for t in sc.workload.types]}
    if sc.workload.qps_factor is not None:
        wl["qps_factor"] = sc.workload.qps_factor
    else:
        wl["qps"] = sc.workload.qps
    if sc.workload.arrival != "poisson":
        wl["arrival"] = sc.workload.arrival
    d: dict[str, Any] = {
        "name": sc.name, "P": sc.P, "query_count": sc.query_count,
        "warmup": {"queries": sc.warmup.queries, "time": format_duration(sc.warmup.time)},
        "seeds": list(sc.seeds), "workload": wl, "policy": _policy_dict(sc.policy),
    }
    if sc.queue_cap:
        d["queue_cap"] = sc.queue_cap
    if sc.histogram is not None:
        d["histogram"] = {"lower_bound": format_duration(sc.histogram.lower_bound),
                          "growth": sc.histogram.growth, "bucket_count": sc.histogram.bucket_count}
    if sc.sweep is not None:
        vals = [_limits_dict(v) if sc.sweep.axis == "wait_limits" else v for v in sc.sweep.values]
        d["sweep"] = {"axis": sc.sweep.axis, "values": vals}
    return d


def dumps(sc: Scenario) -> str:
    return yaml.safe_dump(to_dict(sc), sort_keys=False, allow_unicode=True)


# --------------------------------------------------------------------------
# canned scenarios


def canned_names() -> list[str]:
    root = resources.files(CANNED_PACKAGE)
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def canned_path(name: str):
    return resources.files(CANNED_PACKAGE) / f"{name}.yaml"


def load_canned(name: str) -> Scenario:
    p = canned_path(name)
    if not p.is_file():
        raise ConfigError(f"no canned scenario {name!r}; available: {', '.join(canned_names())}")
    return loads(p.read_text(), f"{name}.yaml")


def resolve(ref: str) -> Scenario:
    """A scenario file path, or the name of a shipped scenario."""
    p = Path(ref)
    if p.exists() or p.suffix in (".yaml", ".yml") or "/" in ref:
        return load(p)
    return load_canned(ref)


# --------------------------------------------------------------------------
# running


def point_label(axis: str, point) -> str:
    """Filesystem-safe directory name of one axis point."""
    if point is None:
        return "base"
    if isinstance(point, dict):
        body = "_".join(f"{t.replace(' ', '-')}-{format_duration(v)}" for t, v in point.items())
        return f"{axis}={body}"
    return f"{axis}={point:g}"


def run(sc: Scenario, seed: int, point: Point | None = None) -> RunReport:
    """Generate, simulate and aggregate one (point, seed) of a scenario."""
    if point is None:
        point = sc.points()[0]
    pol, factor = sc.at(point)
    spec = sc.workload.spec(sc.P, factor)
    names = type_universe(pol, spec.type_names)
    w = generate(spec, sc.query_count, seed, names)
    rec = simulate(w, pol, sc.P, seed, queue_cap=sc.queue_cap, scheme=sc.histogram)
    shown = factor if factor is not None else spec.rate_qps / full_load_qps(spec, sc.P)
    return aggregate(rec, sc.name, seed, shown, sc.warmup, types=spec.type_names)
