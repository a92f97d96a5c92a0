import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from admissim.core_types import NS_PER_S, ms
from admissim.histogram import BucketScheme, DualHistogram, EmptyHistogram, HistogramSet, HistogramStore

SCHEME = BucketScheme()


def fresh(min_samples=10):
    return DualHistogram(HistogramStore(1, SCHEME, NS_PER_S, min_samples))


def nearest_rank_oracle(samples, q):
    s = sorted(samples)
    return s[max(1, math.ceil(q * len(s) - 1e-9)) - 1]


def test_record_single_sample():
    h = fresh()
    h.record(ms(10))
    assert h.write_side.total_count == 1
    assert h.write_side.mean() == ms(10)


def test_record_identical_samples_exact_mean():
    h = fresh()
    for _ in range(3):
        h.record(ms(10))
    assert h.write_side.sum == ms(30)
    assert h.write_side.mean() == ms(10)


def test_zero_goes_to_underflow():
    h = fresh()
    h.record(ms(10))
    h.record(0)
    assert h.write_side.counts[0] == 1
    assert h.write_side.mean() == ms(5)


def test_swap_after_interval():
    h = fresh()
    for _ in range(100):
        h.record(ms(4))
    assert h.maybe_swap(NS_PER_S)
    assert h.read_side.total_count == 100
    assert h.write_side.total_count == 0
    assert h.estimates()[0] == ms(4)


def test_swap_retains_below_threshold():
    h = fresh(min_samples=10)
    for _ in range(100):
        h.record(ms(4))
    h.maybe_swap(NS_PER_S)
    for _ in range(3):
        h.record(ms(40))
    before = h.estimates()
    assert not h.maybe_swap(2 * NS_PER_S)
    assert h.read_side.total_count == 100
    assert h.estimates() == before
    # the interval still restarts at the attempted swap
    assert h.last_swap == 2 * NS_PER_S


def test_no_swap_before_interval():
    h = fresh()
    for _ in range(100):
        h.record(ms(4))
    assert not h.maybe_swap(NS_PER_S - 1)
    assert h.read_side.total_count == 0
    assert h.write_side.total_count == 100
    assert h.estimates() is None


def test_point_mass_percentile():
    h = fresh().write_side
    for _ in range(100):
        h.insert(ms(10))
    v = h.percentile(0.5)
    assert ms(10) <= v <= ms(10) * SCHEME.growth + 1


def test_two_point_percentiles():
    h = fresh().write_side
    for _ in range(90):
        h.insert(ms(1))
    for _ in range(10):
        h.insert(ms(100))
    assert ms(1) <= h.percentile(0.5) <= ms(1) * SCHEME.growth + 1
    assert ms(100) <= h.percentile(0.95) <= ms(100) * SCHEME.growth + 1


def test_empty_percentile_raises():
    with pytest.raises(EmptyHistogram):
        fresh().write_side.percentile(0.9)
    with pytest.raises(EmptyHistogram):
        fresh().write_side.mean()


def test_overflow_reports_max():
    scheme = BucketScheme(lower_bound=1000, growth=2.0, bucket_count=3)   # edges up to 8us
    h = DualHistogram(HistogramStore(1, scheme)).write_side
    h.insert(50_000)
    assert h.percentile(0.5) == 50_000


def test_invalid_scheme():
    with pytest.raises(ValueError):
        BucketScheme(growth=1.0)
    with pytest.raises(ValueError):
        BucketScheme(bucket_count=0)


samples = st.lists(st.integers(min_value=0, max_value=5 * NS_PER_S), min_size=1, max_size=300)
quantile = st.floats(min_value=0.01, max_value=0.99)


@given(samples, quantile)
def test_percentile_within_growth_of_oracle(xs, q):
    h = fresh().write_side
    for x in xs:
        h.insert(x)
    exact = nearest_rank_oracle(xs, q)
    v = h.percentile(q)
    assert v >= exact
    # below lower_bound everything shares the underflow bucket [0, lower_bound)
    assert v <= max(exact * SCHEME.growth, SCHEME.lower_bound) + 1


@given(samples, quantile, quantile)
def test_percentile_monotone(xs, q1, q2):
    h = fresh().write_side
    for x in xs:
        h.insert(x)
    lo, hi = sorted((q1, q2))
    assert h.percentile(lo) <= h.percentile(hi)


@given(samples)
def test_mean_exact(xs):
    h = fresh().write_side
    for x in xs:
        h.insert(x)
    assert h.sum == sum(xs)
    assert abs(h.mean() - sum(xs) / len(xs)) < 1e-6 * max(1, max(xs))


@given(st.lists(st.integers(1, 10 ** 8), min_size=10, max_size=50),
       st.lists(st.integers(1, 10 ** 8), min_size=1, max_size=50))
def test_dual_buffer_isolation(first, second):
    h = fresh(min_samples=1)
    for x in first:
        h.record(x)
    h.maybe_swap(NS_PER_S)
    snapshot = h.estimates()
    for x in second:
        h.record(x)
        h.maybe_swap(NS_PER_S + 10)   # within the interval: no swap
        assert h.estimates() == snapshot


@given(st.floats(min_value=1.0, max_value=1e10))
def test_bucket_index_matches_edges(x):
    from admissim.histogram import bucket_index
    bounds = SCHEME.boundaries()
    b = bucket_index(x, bounds)
    nb = len(bounds) - 1
    if b == 0:
        assert x < bounds[0]
    elif b == nb + 1:
        assert x >= bounds[-1]
    else:
        assert bounds[b - 1] <= x < bounds[b]


def test_histogram_set_general_mirrors_types():
    hs = HistogramSet(["fast", "slow", "default"], SCHEME, NS_PER_S, 1)
    hs.record("fast", ms(1))
    hs.record("slow", ms(20))
    hs.maybe_swap(NS_PER_S)
    assert hs["fast"].read_side.total_count == 1
    assert hs.general.read_side.total_count == 2
    assert hs.general.estimates()[0] == pytest.approx(ms(10.5))
    assert hs["default"].estimates() is None
