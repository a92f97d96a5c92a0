"""Log-bucketed processing-time histograms with read/write double buffering.

Storage is struct-of-arrays so the simulation kernels can update many
histograms in place:

* ``counts[h, side, bucket]``  bucket tallies
* ``tally[h, side, :]``        (count, exact sum in ns, max in ns)
* ``meta[h, :]``               (index of the read side, time of last swap)
* ``stats[h, :]``              cached read-side (mean, p50, p90, valid)

Bucket 0 is underflow ``[0, lower)``, bucket ``i + 1`` is
``[lower * g**i, lower * g**(i + 1))`` and the last bucket is overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._jit import kernel
from .core_types import NS_PER_S, NS_PER_US

COUNT, SUM, MAX = 0, 1, 2
READ, LAST_SWAP = 0, 1
MEAN, P50, P90, VALID = 0, 1, 2, 3

# Retention threshold.  With fewer samples one interval's p90 of a heavy
# tailed type is noisy enough to cross its SLO by itself, and a type that is
# then fully rejected never produces the samples that would correct it.
DEFAULT_MIN_SAMPLES = 2000


class EmptyHistogram(ValueError):
    """Statistic requested from a histogram with no samples."""


@dataclass(frozen=True)
class BucketScheme:
    lower_bound: int = NS_PER_US
    growth: float = 1.01
    bucket_count: int = 1800

    def __post_init__(self):
        if self.growth <= 1.0:
            raise ValueError("growth must be > 1")
        if self.lower_bound <= 0 or self.bucket_count < 1:
            raise ValueError("lower_bound and bucket_count must be positive")

    @property
    def n_buckets(self) -> int:
        return self.bucket_count + 2

    def boundaries(self) -> np.ndarray:
        """Bucket edges ``lower * growth**i`` for i in 0..bucket_count (ns)."""
        return self.lower_bound * self.growth ** np.arange(self.bucket_count + 1, dtype=np.float64)


# --------------------------------------------------------------------------
# kernels


@kernel
def bucket_index(x, bounds):
    nb = bounds.shape[0] - 1
    if x < bounds[0]:
        return 0
    if x >= bounds[nb]:
        return nb + 1
    log_g = math.log(bounds[1] / bounds[0])
    k = int(math.log(x / bounds[0]) / log_g)
    if k > nb - 1:
        k = nb - 1
    # float log can be off by one near an edge
    while k < nb - 1 and x >= bounds[k + 1]:
        k += 1
    while k > 0 and x < bounds[k]:
        k -= 1
    return k + 1


@kernel
def hist_insert(counts, tally, h, side, x, bounds):
    counts[h, side, bucket_index(x, bounds)] += 1
    tally[h, side, 0] += 1
    tally[h, side, 1] += x
    if x > tally[h, side, 2]:
        tally[h, side, 2] = x


@kernel
def hist_percentile(counts, tally, h, side, q, bounds):
    n = tally[h, side, 0]
    need = int(math.ceil(q * n - 1e-9))
    if need < 1:
        need = 1
    if need > n:
        need = n
    nb = bounds.shape[0] - 1
    cum = 0
    for b in range(nb + 2):
        cum += counts[h, side, b]
        if cum >= need:
            if b == nb + 1:
                return float(tally[h, side, 2])
            return bounds[b]
    return float(tally[h, side, 2])


@kernel
def refresh_stats(counts, tally, meta, stats, h, bounds):
    side = meta[h, 0]
    n = tally[h, side, 0]
    if n == 0:
        stats[h, 0] = 0.0
        stats[h, 1] = 0.0
        stats[h, 2] = 0.0
        stats[h, 3] = 0.0
        return
    stats[h, 0] = tally[h, side, 1] / n
    stats[h, 1] = hist_percentile(counts, tally, h, side, 0.5, bounds)
    stats[h, 2] = hist_percentile(counts, tally, h, side, 0.9, bounds)
    stats[h, 3] = 1.0


@kernel
def dual_record(counts, tally, meta, h, x, bounds):
    hist_insert(counts, tally, h, 1 - meta[h, 0], x, bounds)


@kernel
def dual_maybe_swap(counts, tally, meta, stats, h, now, interval, min_samples, bounds):
    if now - meta[h, 1] < interval:
        return False
    meta[h, 1] = now
    write = 1 - meta[h, 0]
    if tally[h, write, 0] < min_samples:
        # too few samples: keep serving the stale read side
        return False
    read = meta[h, 0]
    counts[h, read, :] = 0
    tally[h, read, 0] = 0
    tally[h, read, 1] = 0
    tally[h, read, 2] = 0
    meta[h, 0] = write
    refresh_stats(counts, tally, meta, stats, h, bounds)
    return True


# --------------------------------------------------------------------------
# object API


class HistogramStore:
    """Backing arrays for ``n`` dual histograms sharing one bucket scheme."""

    def __init__(self, n: int, scheme: BucketScheme | None = None,
                 swap_interval: int = NS_PER_S, min_samples_to_swap: int = DEFAULT_MIN_SAMPLES):
        self.scheme = scheme or BucketScheme()
        self.swap_interval = int(swap_interval)
        self.min_samples_to_swap = int(min_samples_to_swap)
        self.bounds = self.scheme.boundaries()
        self.counts = np.zeros((n, 2, self.scheme.n_buckets), dtype=np.int64)
        self.tally = np.zeros((n, 2, 3), dtype=np.int64)
        self.meta = np.zeros((n, 2), dtype=np.int64)
        self.stats = np.zeros((n, 4), dtype=np.float64)

    def __len__(self):
        return self.counts.shape[0]


class Histogram:
    """One side of a dual histogram (a view into a :class:`HistogramStore`)."""

    def __init__(self, store: HistogramStore, h: int, side: int):
        self._store, self._h, self._side = store, h, side

    @property
    def scheme(self) -> BucketScheme:
        return self._store.scheme

    @property
    def counts(self) -> np.ndarray:
        return self._store.counts[self._h, self._side]

    @property
    def total_count(self) -> int:
        return int(self._store.tally[self._h, self._side, COUNT])

    @property
    def sum(self) -> int:
        return int(self._store.tally[self._h, self._side, SUM])

    def mean(self) -> float:
        """Exact mean of the inserted durations in ns."""
        if self.total_count == 0:
            raise EmptyHistogram("mean of empty histogram")
        return self.sum / self.total_count

    def percentile(self, q: float) -> int:
        """Upper edge of the bucket holding the nearest-rank q-quantile, in ns.

        Over-estimates the exact empirical quantile by at most the growth
        factor (plus rounding up to a whole nanosecond).
        """
        if not 0.0 < q < 1.0:
            raise ValueError("q must be in (0, 1)")
        if self.total_count == 0:
            raise EmptyHistogram("percentile of empty histogram")
        s = self._store
        return int(math.ceil(hist_percentile(s.counts, s.tally, self._h, self._side, q, s.bounds)))

    def insert(self, pt: int) -> None:
        assert pt >= 0, "negative processing time"
        s = self._store
        hist_insert(s.counts, s.tally, self._h, self._side, int(pt), s.bounds)


class DualHistogram:
    """Read-only snapshot for estimates plus a write side for new samples."""

    def __init__(self, store: HistogramStore | None = None, h: int = 0):
        self._store = store if store is not None else HistogramStore(1)
        self._h = h

    @property
    def read_side(self) -> Histogram:
        return Histogram(self._store, self._h, int(self._store.meta[self._h, READ]))

    @property
    def write_side(self) -> Histogram:
        return Histogram(self._store, self._h, 1 - int(self._store.meta[self._h, READ]))

    @property
    def last_swap(self) -> int:
        return int(self._store.meta[self._h, LAST_SWAP])

    def record(self, pt: int) -> None:
        assert pt >= 0, "negative processing time"
        s = self._store
        dual_record(s.counts, s.tally, s.meta, self._h, int(pt), s.bounds)

    def maybe_swap(self, now: int) -> bool:
        s = self._store
        assert now >= self.last_swap
        return bool(dual_maybe_swap(s.counts, s.tally, s.meta, s.stats, self._h, int(now),
                                    s.swap_interval, s.min_samples_to_swap, s.bounds))

    def estimates(self) -> tuple[float, float, float] | None:
        """Cached (mean, p50, p90) of the read side in ns, or None if empty."""
        st = self._store.stats[self._h]
        if st[VALID] == 0.0:
            return None
        return float(st[MEAN]), float(st[P50]), float(st[P90])


class HistogramSet:
    """One dual histogram per query type plus a type-agnostic general one."""

    def __init__(self, types: Sequence[str], scheme: BucketScheme | None = None,
                 swap_interval: int = NS_PER_S, min_samples_to_swap: int = DEFAULT_MIN_SAMPLES):
        self.types = list(types)
        self.index = {t: i for i, t in enumerate(self.types)}
        self.store = HistogramStore(len(self.types) + 1, scheme, swap_interval, min_samples_to_swap)
        self.general = DualHistogram(self.store, len(self.types))

    @property
    def general_index(self) -> int:
        return len(self.types)

    def __getitem__(self, qtype: str) -> DualHistogram:
        return DualHistogram(self.store, self.index[qtype])

    def record(self, qtype: str, pt: int) -> None:
        self[qtype].record(pt)
        self.general.record(pt)

    def maybe_swap(self, now: int) -> None:
        s = self.store
        if now - s.meta[:, LAST_SWAP].min() < s.swap_interval:
            return
        for h in range(len(s)):
            dual_maybe_swap(s.counts, s.tally, s.meta, s.stats, h, int(now),
                            s.swap_interval, s.min_samples_to_swap, s.bounds)

    def record_many(self, qtype: str, samples: Iterable[int]) -> None:
        for pt in samples:
            self.record(qtype, pt)
