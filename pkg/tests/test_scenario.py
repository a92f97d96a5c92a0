import textwrap

import pytest

from admissim.core_types import ms
from admissim.scenario import (canned_names, dumps, load, load_canned, loads, point_label, resolve, run,
                               to_dict)
from admissim.workload import ConfigError, Exponential, FromStats

MINIMAL = textwrap.dedent("""\
    name: tiny
    P: 4
    query_count: 20000
    warmup: {queries: 1000, time: 0s}
    seeds: [1, 2]
    workload:
      qps_factor: 1.2
      types:
        - {name: fast, proportion: 0.7, dist: {kind: from_stats, mean: 1.16ms, p50: 0.38ms}}
        - {name: slow, proportion: 0.3, dist: {kind: exponential, mean: 20ms}}
    policy:
      kind: bouncer
      slos:
        default: {p50: 18ms, p90: 50ms}
""")


def test_minimal_scenario():
    sc = loads(MINIMAL)
    assert sc.P == 4 and sc.seeds == (1, 2)
    assert sc.workload.types[0].dist == FromStats(0.00116, 0.00038)
    assert sc.workload.types[1].dist == Exponential(50.0)
    assert sc.policy.slos["anything"].p50_target == ms(18)
    assert sc.points() == [1.2]


def test_round_trip_minimal():
    sc = loads(MINIMAL)
    assert loads(dumps(sc)) == sc
    assert to_dict(loads(dumps(sc))) == to_dict(sc)


@pytest.mark.parametrize("name", canned_names())
def test_canned_round_trip(name):
    sc = load_canned(name)
    again = loads(dumps(sc))
    assert again == sc
    assert dumps(again) == dumps(sc)


def test_canned_set():
    names = set(canned_names())
    for kind in ("bouncer", "bouncer_aa", "bouncer_hu", "maxql", "maxqwt", "accept_fraction"):
        assert f"table3_{kind}" in names
    assert {"table4_bouncer_basic", "table4_bouncer_aa", "table4_bouncer_hu", "table5", "table6",
            "fig13", "fig13_bouncer", "fig2_starvation"} <= names


def test_canned_sweep_shapes():
    t4 = load_canned("table4_bouncer_basic")
    assert t4.axis == "qps_factor" and len(t4.points()) == 13
    assert t4.points()[0] == 0.9 and t4.points()[-1] == 1.5
    assert load_canned("table4_bouncer_aa").policy.A == 0.1
    assert load_canned("table4_bouncer_hu").policy.alpha == 1.0
    t5 = load_canned("table5")
    assert t5.axis == "A" and len(t5.points()) == 12 and t5.workload.qps_factor == 1.5
    t6 = load_canned("table6")
    assert t6.axis == "alpha" and len(t6.points()) == 10
    fig13 = load_canned("fig13")
    assert fig13.axis == "wait_limits" and fig13.points()[0] == {"default": ms(15)}
    pol, _ = fig13.at(fig13.points()[1])
    assert pol.wait_limits(["fast", "slow"]).tolist() == [ms(15), ms(5)]
    assert load_canned("table3_bouncer_aa").policy.A == 0.05


def test_sweep_points_apply():
    sc = load_canned("table5")
    pol, factor = sc.at(0.3)
    assert pol.A == 0.3 and factor == 1.5
    sc = load_canned("table4_bouncer_basic")
    pol, factor = sc.at(1.1)
    assert factor == 1.1 and pol == sc.policy


def broken(old, new):
    assert old in MINIMAL
    return MINIMAL.replace(old, new)


@pytest.mark.parametrize("text,needle", [
    (broken("default: {p50", "slow: {p50"), "'default'"),
    (broken("proportion: 0.3", "proportion: 0.2"), "sum to"),
    (broken("mean: 20ms", "mean: 20"), "workload.types.1.dist.mean"),
    (broken("kind: bouncer", "kind: bouncer_xx"), "unknown policy"),
    (broken("P: 4", "P: 0"), "P"),
    (broken("qps_factor: 1.2", "qps_factor: 1.2\n  qps: 100"), "exactly one"),
    (broken("mean: 1.16ms, p50: 0.38ms", "mean: 0.38ms, p50: 1.16ms"), "mean > p50"),
    (MINIMAL + "sweep: {axis: alpha, values: [0.5, 1.5]}\n", "alpha must be in (0, 1]"),
    (MINIMAL + "sweep: {axis: A, values: [-0.1]}\n", "A must be in [0, 1]"),
    (MINIMAL + "sweep: {axis: speed, values: [1]}\n", "unknown axis"),
    (MINIMAL + "extra_key: 1\n", "unknown key 'extra_key'"),
    ("name: [unclosed\n", "invalid YAML"),
    ("- just\n- a list\n", "mapping"),
])
def test_validation_errors(text, needle):
    with pytest.raises(ConfigError) as err:
        loads(text, "bad.yaml")
    assert needle in str(err.value)


def test_error_carries_line_number():
    text = broken("mean: 20ms", "mean: 20")
    with pytest.raises(ConfigError, match=r"bad.yaml:10:"):
        loads(text, "bad.yaml")


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load(tmp_path / "nope.yaml")
    with pytest.raises(ConfigError, match="no canned scenario"):
        resolve("no_such_scenario")


def test_point_labels():
    assert point_label("qps_factor", 1.05) == "qps_factor=1.05"
    assert point_label("wait_limits", {"medium slow": ms(10)}) == "wait_limits=medium-slow-10ms"
    assert point_label("qps_factor", None) == "base"


def test_run_is_deterministic():
    sc = loads(MINIMAL)
    a, b = run(sc, 1), run(sc, 1)
    assert a.rows == b.rows and a.utilization == b.utilization
    assert [r.qtype for r in a.rows] == ["fast", "slow", "ALL"]
    assert run(sc, 2).rows != a.rows
