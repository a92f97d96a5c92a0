import math

import numpy as np
import pytest
from scipy import stats

from admissim.core_types import NS_PER_S
from admissim.workload import (ConfigError, Constant, Exponential, FitError, FromStats, Lognormal,
                               QueryTypeSpec, WorkloadSpec, fit_lognormal, full_load_qps, generate,
                               weighted_mean_pt)

from conftest import MIX, TYPE_NAMES, mix_spec


def test_fit_slow():
    mu, sigma, p90 = fit_lognormal(20.05, 12.51)
    assert mu == pytest.approx(math.log(12.51))
    assert sigma == pytest.approx(0.971, abs=1e-3)
    assert p90 == pytest.approx(43.4, abs=0.1)
    # consistency with the published p90 of 44.26ms
    assert abs(p90 - 44.26) / 44.26 < 0.05


def test_fit_fast():
    _, sigma, p90 = fit_lognormal(1.16, 0.38)
    assert sigma == pytest.approx(1.494, abs=1e-3)
    assert abs(p90 - 2.70) / 2.70 < 0.05


def test_fit_degenerate():
    with pytest.raises(FitError):
        fit_lognormal(5.0, 5.0)
    with pytest.raises(FitError):
        fit_lognormal(4.0, 5.0)


def test_weighted_mean_and_full_load():
    spec = mix_spec()
    assert weighted_mean_pt(spec) * 1e3 == pytest.approx(6.614, abs=5e-4)
    assert full_load_qps(spec, 100) == pytest.approx(15119, abs=1.0)
    one = WorkloadSpec((QueryTypeSpec("t", 1.0, Constant(0.010)),), 1.0)
    assert full_load_qps(one, 1) == pytest.approx(100.0)


def test_constant_arrivals():
    spec = WorkloadSpec((QueryTypeSpec("t", 1.0, Constant(0.001)),), 10.0, arrival="constant")
    w = generate(spec, 3, seed=0)
    assert w.arrival.tolist() == [NS_PER_S // 10, 2 * NS_PER_S // 10, 3 * NS_PER_S // 10]


def test_mix_proportions():
    w = generate(mix_spec(15000.0), 1_500_000, seed=3)
    frac = np.bincount(w.qtype, minlength=4) / len(w)
    for (_, p, _, _), f in zip(MIX, frac):
        assert abs(f - p) < 0.002


def test_slow_mean_demand():
    spec = WorkloadSpec((QueryTypeSpec("slow", 1.0, FromStats(0.02005, 0.01251)),), 1000.0)
    w = generate(spec, 1_000_000, seed=5)
    assert abs(w.demand.mean() / 1e6 - 20.05) / 20.05 < 0.02


def test_lognormal_ks():
    dist = FromStats(0.02005, 0.01251)
    ln = dist.fitted()
    spec = WorkloadSpec((QueryTypeSpec("slow", 1.0, dist),), 1000.0)
    w = generate(spec, 100_000, seed=11)
    res = stats.kstest(w.demand / 1e9, stats.lognorm(s=ln.sigma, scale=math.exp(ln.mu)).cdf)
    assert res.pvalue > 0.01


def test_exponential_gaps():
    spec = WorkloadSpec((QueryTypeSpec("t", 1.0, Constant(0.001)),), 2000.0)
    w = generate(spec, 1_000_000, seed=2)
    gaps = np.diff(np.concatenate([[0], w.arrival]))
    assert abs(gaps.mean() - 1e9 / 2000) / (1e9 / 2000) < 0.01


def test_seed_determinism_and_independence():
    spec = mix_spec(15000.0)
    a, b = generate(spec, 50_000, 9), generate(spec, 50_000, 9)
    for f in ("arrival", "qtype", "demand"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    c = generate(spec, 50_000, 10)
    assert not np.array_equal(a.arrival, c.arrival)


def test_arrivals_strictly_increasing_and_demands_positive():
    spec = WorkloadSpec((QueryTypeSpec("t", 1.0, Exponential(1e6)),), 5e8)
    w = generate(spec, 10_000, 1)
    assert np.all(np.diff(w.arrival) > 0)
    assert w.demand.min() >= 1


def test_type_universe_remap():
    w = generate(mix_spec(1000.0), 1000, 1, type_names=["default"] + TYPE_NAMES)
    assert w.type_names[0] == "default"
    assert set(np.unique(w.qtype)) <= {1, 2, 3, 4}
    with pytest.raises(ConfigError):
        generate(mix_spec(1000.0), 10, 1, type_names=["fast"])


@pytest.mark.parametrize("types", [
    (QueryTypeSpec("a", 0.5, Constant(0.001)), QueryTypeSpec("b", 0.4, Constant(0.001))),
    (QueryTypeSpec("a", 0.5, Constant(0.001)), QueryTypeSpec("a", 0.5, Constant(0.001))),
    (),
])
def test_spec_validation(types):
    with pytest.raises(ConfigError):
        WorkloadSpec(types, 1.0)


def test_lognormal_needs_positive_sigma():
    with pytest.raises(ConfigError):
        Lognormal(0.0, 0.0)
