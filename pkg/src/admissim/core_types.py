"""Domain types shared by the simulator: queries, SLOs and decisions.

All timestamps and durations are integer nanoseconds of simulated time.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000

DEFAULT_TYPE = "default"

_UNITS = {"ns": 1, "us": NS_PER_US, "µs": NS_PER_US, "ms": NS_PER_MS,
          "s": NS_PER_S, "m": 60 * NS_PER_S}
_DURATION_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(ns|us|µs|ms|s|m)\s*$")


def parse_duration(text: str) -> int:
    """Parse a duration string with an explicit unit ("18ms", "1.5s") into ns."""
    if not isinstance(text, str):
        raise ValueError(f"duration must be a string with a unit, got {text!r}")
    m = _DURATION_RE.match(text)
    if m is None:
        raise ValueError(f"invalid duration {text!r}; expected e.g. '18ms'")
    value, unit = m.groups()
    ns = round(float(value) * _UNITS[unit])
    return int(ns)


def format_duration(ns: int) -> str:
    """Inverse of :func:`parse_duration`, choosing the largest exact unit."""
    ns = int(ns)
    for unit, scale in (("s", NS_PER_S), ("ms", NS_PER_MS), ("us", NS_PER_US)):
        if ns != 0 and ns % scale == 0:
            return f"{ns // scale}{unit}"
    return f"{ns}ns"


def ms(value: float) -> int:
    """Milliseconds to integer nanoseconds."""
    return int(round(value * NS_PER_MS))


class Verdict(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class Reason(enum.IntEnum):
    # Values are shared with the simulation kernels; accept reasons sort first.
    NONE = 0
    ALLOWANCE_OVERRIDE = 1
    UNDERSERVED_OVERRIDE = 2
    EMPTY_HISTOGRAM_LENIENCY = 3
    SLO_ESTIMATE_EXCEEDED = 4
    QUEUE_FULL = 5
    WAIT_LIMIT_EXCEEDED = 6
    FRACTION_DROP = 7
    EXPECTED_TIMEOUT = 8

    @property
    def accepts(self) -> bool:
        return self.value < FIRST_REJECT_REASON


FIRST_REJECT_REASON = 4


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    reason: Reason = Reason.NONE

    def __post_init__(self):
        if (self.verdict is Verdict.ACCEPT) != self.reason.accepts:
            raise ValueError(f"{self.verdict.name} cannot carry reason {self.reason.name}")

    @classmethod
    def from_code(cls, code: int) -> "Decision":
        reason = Reason(int(code))
        return cls(Verdict.ACCEPT if reason.accepts else Verdict.REJECT, reason)

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT


ACCEPT = Decision(Verdict.ACCEPT)


class LifecycleError(RuntimeError):
    """A query's timestamps are missing or out of order."""


@dataclass
class Query:
    id: int
    qtype: str
    t_arrival: int
    service_demand: int
    t_enqueued: Optional[int] = None
    t_dequeued: Optional[int] = None
    t_completed: Optional[int] = None
    outcome: Optional[Decision] = field(default=None)

    def decide(self, decision: Decision) -> None:
        if self.outcome is not None:
            raise LifecycleError(f"query {self.id} already has outcome {self.outcome}")
        self.outcome = decision

    @property
    def wait_time(self) -> int:
        self._check_complete()
        return self.t_dequeued - self.t_enqueued

    @property
    def processing_time(self) -> int:
        self._check_complete()
        return self.t_completed - self.t_dequeued

    def _check_complete(self) -> None:
        if self.outcome is None or not self.outcome.accepted:
            raise LifecycleError(f"query {self.id} was not accepted")
        if None in (self.t_enqueued, self.t_dequeued, self.t_completed):
            raise LifecycleError(f"query {self.id} is missing lifecycle timestamps")


def response_time(q: Query) -> int:
    """Queue wait plus processing time of a completed query (host overhead is zero)."""
    return q.wait_time + q.processing_time


@dataclass(frozen=True)
class Slo:
    p50_target: int
    p90_target: int

    def __post_init__(self):
        if not 0 < self.p50_target <= self.p90_target:
            raise ValueError(f"need 0 < p50 <= p90, got {self.p50_target}, {self.p90_target}")


class SloTable:
    """Per-type latency objectives with a mandatory catch-all ``default`` entry."""

    def __init__(self, slos: Mapping[str, Slo]):
        if DEFAULT_TYPE not in slos:
            raise KeyError(f"SLO table must contain a {DEFAULT_TYPE!r} entry")
        self._slos = dict(slos)

    def __getitem__(self, qtype: str) -> Slo:
        return self._slos.get(qtype, self._slos[DEFAULT_TYPE])

    def __contains__(self, qtype: str) -> bool:
        return qtype in self._slos

    def __iter__(self):
        return iter(self._slos)

    def __len__(self):
        return len(self._slos)

    def items(self):
        return self._slos.items()

    def __eq__(self, other):
        return isinstance(other, SloTable) and self._slos == other._slos

    def __repr__(self):
        return f"SloTable({self._slos!r})"
