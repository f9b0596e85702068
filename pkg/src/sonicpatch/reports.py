"""Structured pass/fail records shared by the validation gate and the checks."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass
class ConditionResult:
    name: str
    passed: bool
    worst_margin: float
    arg_worst: float | None = None
    reason: str = ""


@dataclass
class ValidationReport:
    conditions: list[ConditionResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def failures(self) -> list[ConditionResult]:
        return [c for c in self.conditions if not c.passed]

    def extend(self, other: "ValidationReport") -> "ValidationReport":
        return ValidationReport(self.conditions + other.conditions)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "conditions": [asdict(c) for c in self.conditions]}
