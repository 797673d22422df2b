"""Exact inequality bookkeeping shared by the constructions."""
from __future__ import annotations

import operator
from dataclasses import dataclass, field
from fractions import Fraction

_RELATIONS = {
    "<": operator.lt,
    "<=": operator.le,
    "==": operator.eq,
    ">": operator.gt,
    ">=": operator.ge,
    "!=": operator.ne,
}


class AssertionViolation(AssertionError):
    """A checked inequality failed."""

    def __init__(self, record: "Assertion"):
        super().__init__(f"{record.name}: {record.lhs} {record.relation} {record.rhs} is false")
        self.record = record


def _fmt(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, (int, Fraction)):
        return str(Fraction(v))
    return str(v)


@dataclass(frozen=True)
class Assertion:
    name: str
    lhs: object
    rhs: object
    relation: str
    verdict: bool

    def to_json(self) -> dict:
        return {"name": self.name, "lhs": _fmt(self.lhs), "rhs": _fmt(self.rhs),
                "relation": self.relation, "verdict": "pass" if self.verdict else "fail"}


@dataclass
class AuditLog:
    """Ordered list of checked claims; ``strict`` raises on the first failure."""

    strict: bool = True
    records: list = field(default_factory=list)

    def check(self, name: str, lhs, relation: str, rhs) -> bool:
        ok = bool(_RELATIONS[relation](lhs, rhs))
        rec = Assertion(name, lhs, rhs, relation, ok)
        self.records.append(rec)
        if not ok and self.strict:
            raise AssertionViolation(rec)
        return ok

    def extend(self, other: "AuditLog", prefix: str = ""):
        for r in other.records:
            self.records.append(Assertion(prefix + r.name, r.lhs, r.rhs, r.relation, r.verdict))

    @property
    def ok(self) -> bool:
        return all(r.verdict for r in self.records)

    def failures(self):
        return [r for r in self.records if not r.verdict]

    def to_json(self):
        return [r.to_json() for r in self.records]
