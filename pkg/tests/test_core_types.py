import pytest

from admissim.core_types import (ACCEPT, Decision, LifecycleError, Query, Reason, Slo, SloTable,
                                 Verdict, format_duration, ms, parse_duration, response_time)


def completed(t_enq, t_deq, t_done):
    q = Query(1, "slow", t_enq, t_done - t_deq)
    q.decide(ACCEPT)
    q.t_enqueued, q.t_dequeued, q.t_completed = t_enq, t_deq, t_done
    return q


@pytest.mark.parametrize("enq,deq,done,expected", [
    (0, ms(5), ms(17), ms(17)),
    (ms(1000), ms(1000), ms(1000), 0),
    (ms(2000), ms(2000), ms(2020), ms(20)),
])
def test_response_time_examples(enq, deq, done, expected):
    q = completed(enq, deq, done)
    assert response_time(q) == expected
    assert response_time(q) == q.wait_time + q.processing_time


def test_outcome_written_once():
    q = Query(1, "fast", 0, 10)
    q.decide(ACCEPT)
    with pytest.raises(LifecycleError):
        q.decide(Decision(Verdict.REJECT, Reason.SLO_ESTIMATE_EXCEEDED))


def test_rejected_query_has_no_response_time():
    q = Query(1, "fast", 0, 10)
    q.decide(Decision(Verdict.REJECT, Reason.QUEUE_FULL))
    with pytest.raises(LifecycleError):
        response_time(q)


def test_missing_timestamps_raise():
    q = Query(1, "fast", 0, 10)
    q.decide(ACCEPT)
    with pytest.raises(LifecycleError):
        q.wait_time


def test_decision_reason_must_match_verdict():
    with pytest.raises(ValueError):
        Decision(Verdict.ACCEPT, Reason.QUEUE_FULL)
    with pytest.raises(ValueError):
        Decision(Verdict.REJECT, Reason.ALLOWANCE_OVERRIDE)
    assert Decision.from_code(2).reason is Reason.UNDERSERVED_OVERRIDE
    assert not Decision.from_code(7).accepted


@pytest.mark.parametrize("text,ns", [("18ms", 18_000_000), ("1.5s", 1_500_000_000), ("250us", 250_000),
                                     ("7ns", 7), ("1m", 60_000_000_000), ("0.38ms", 380_000)])
def test_parse_duration(text, ns):
    assert parse_duration(text) == ns
    assert parse_duration(format_duration(ns)) == ns


@pytest.mark.parametrize("bad", ["18", 18, "ms", "-5ms", "5 hours", None])
def test_parse_duration_rejects(bad):
    with pytest.raises(ValueError):
        parse_duration(bad)


def test_slo_table_requires_default_and_falls_back():
    with pytest.raises(KeyError, match="default"):
        SloTable({"slow": Slo(ms(18), ms(50))})
    table = SloTable({"default": Slo(ms(18), ms(50)), "fast": Slo(ms(5), ms(10))})
    assert table["fast"].p50_target == ms(5)
    assert table["never seen"] == table["default"]


def test_slo_ordering():
    with pytest.raises(ValueError):
        Slo(ms(50), ms(18))
    with pytest.raises(ValueError):
        Slo(0, ms(18))
