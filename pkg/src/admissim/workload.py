"""Synthetic open-loop traffic: query mix, service demands, arrival times.

Random streams come from numpy's PCG64 seeded through ``SeedSequence``; one
child stream per concern (types, arrivals, demands, policy coin flips) so a
policy that draws more random numbers never perturbs the workload.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .core_types import NS_PER_S

Z90 = 1.2815515655446004  # standard normal 0.9-quantile

STREAM_TYPES, STREAM_ARRIVALS, STREAM_DEMANDS, STREAM_POLICY = range(4)


class FitError(ValueError):
    pass


class ConfigError(ValueError):
    """Inconsistent scenario or workload configuration."""


@dataclass(frozen=True)
class Lognormal:
    mu: float  # log of seconds
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError("lognormal sigma must be > 0")

    @property
    def mean(self) -> float:
        return math.exp(self.mu + self.sigma ** 2 / 2)


@dataclass(frozen=True)
class FromStats:
    """Lognormal given by its mean and median (seconds)."""
    mean_s: float
    p50_s: float

    def fitted(self) -> Lognormal:
        mu, sigma, _ = fit_lognormal(self.mean_s, self.p50_s)
        return Lognormal(mu, sigma)

    @property
    def mean(self) -> float:
        return self.mean_s


@dataclass(frozen=True)
class Exponential:
    """Test-only service distribution."""
    rate: float

    @property
    def mean(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True)
class Constant:
    """Test-only fixed service time (seconds)."""
    value_s: float

    @property
    def mean(self) -> float:
        return self.value_s


Distribution = Union[Lognormal, FromStats, Exponential, Constant]


@dataclass(frozen=True)
class QueryTypeSpec:
    qtype: str
    proportion: float
    dist: Distribution


@dataclass(frozen=True)
class WorkloadSpec:
    types: tuple
    rate_qps: float
    arrival: str = "poisson"

    def __post_init__(self):
        if not self.types:
            raise ConfigError("workload needs at least one query type")
        names = [t.qtype for t in self.types]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate query types in workload: {names}")
        total = sum(t.proportion for t in self.types)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"query mix proportions sum to {total!r}, expected 1")
        if any(t.proportion < 0 for t in self.types):
            raise ConfigError("proportions must be nonnegative")
        if not self.rate_qps > 0:
            raise ConfigError("rate_qps must be > 0")
        if self.arrival not in ("poisson", "constant"):
            raise ConfigError(f"unknown arrival process {self.arrival!r}")

    @property
    def type_names(self) -> list[str]:
        return [t.qtype for t in self.types]

    def with_rate(self, rate_qps: float) -> "WorkloadSpec":
        return WorkloadSpec(self.types, rate_qps, self.arrival)


def fit_lognormal(mean: float, p50: float) -> tuple[float, float, float]:
    """(mu, sigma, implied p90) of the lognormal with the given mean and median.

    Units are whatever ``mean`` and ``p50`` are in; mu is the log of that unit.
    """
    if not (mean > p50 > 0):
        raise FitError(f"need mean > p50 > 0 for a lognormal, got mean={mean}, p50={p50}")
    mu = math.log(p50)
    sigma = math.sqrt(2.0 * (math.log(mean) - mu))
    return mu, sigma, math.exp(mu + Z90 * sigma)


def weighted_mean_pt(spec: WorkloadSpec) -> float:
    """Mix-weighted mean processing time in seconds."""
    return sum(t.proportion * t.dist.mean for t in spec.types)


def full_load_qps(spec: WorkloadSpec, P: int) -> float:
    """Arrival rate that keeps all P processes busy on average."""
    return P / weighted_mean_pt(spec)


@dataclass
class Workload:
    """Arrays describing ``n`` generated queries, ordered by arrival."""
    type_names: list
    arrival: np.ndarray   # int64 ns, strictly increasing
    qtype: np.ndarray     # int64 index into type_names
    demand: np.ndarray    # int64 ns, >= 1

    def __len__(self):
        return self.arrival.shape[0]


def streams(seed: int) -> list[np.random.Generator]:
    ss = np.random.SeedSequence(int(seed))
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(4)]


def _draw_demands(dist: Distribution, rng: np.random.Generator, n: int) -> np.ndarray:
    if isinstance(dist, FromStats):
        dist = dist.fitted()
    if isinstance(dist, Lognormal):
        return np.exp(dist.mu + dist.sigma * rng.standard_normal(n))
    if isinstance(dist, Exponential):
        return rng.exponential(1.0 / dist.rate, n)
    if isinstance(dist, Constant):
        return np.full(n, dist.value_s)
    raise TypeError(f"unsupported distribution {dist!r}")


def generate(spec: WorkloadSpec, count: int, seed: int, type_names: Sequence[str] | None = None) -> Workload:
    """Draw ``count`` queries.

    ``type_names`` fixes the index space of ``Workload.qtype`` (it must
    contain every workload type); by default the workload's own order.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    names = list(type_names) if type_names is not None else spec.type_names
    missing = [t for t in spec.type_names if t not in names]
    if missing:
        raise ConfigError(f"type universe lacks workload types {missing}")
    rng_types, rng_arrivals, rng_demands, _ = streams(seed)

    cum = np.cumsum([t.proportion for t in spec.types])
    cum[-1] = 1.0
    local = np.searchsorted(cum, rng_types.random(count), side="right")
    local = np.minimum(local, len(spec.types) - 1)

    if spec.arrival == "poisson":
        gaps = rng_arrivals.exponential(1.0 / spec.rate_qps, count)
    else:
        gaps = np.full(count, 1.0 / spec.rate_qps)
    arrival = np.rint(np.cumsum(gaps) * NS_PER_S).astype(np.int64)
    # strictly increasing: bump ties by 1ns
    idx = np.arange(count, dtype=np.int64)
    arrival = np.maximum.accumulate(arrival - idx) + idx

    demand_s = np.empty(count)
    for j, t in enumerate(spec.types):
        # per-type sub-streams, drawn in arrival order within each type
        sub = np.random.Generator(np.random.PCG64(rng_demands.integers(0, 2 ** 63)))
        mask = local == j
        demand_s[mask] = _draw_demands(t.dist, sub, int(mask.sum()))
    demand = np.maximum(np.rint(demand_s * NS_PER_S), 1).astype(np.int64)

    remap = np.array([names.index(t) for t in spec.type_names], dtype=np.int64)
    return Workload(names, arrival, remap[local], demand)
