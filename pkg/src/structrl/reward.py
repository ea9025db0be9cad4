"""Answer metrics and the two-term reward.

The reward is R = direct + lambda * reinf: exact match of the primary answer,
plus a weighted exact match of the answer produced from the structured content
alone. A trajectory that emitted no format block earns reinf = 0 by rule, so
structuring is never free.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum

from ._textnorm import normalize_text, norm_tokens
from .errors import EmptyGolds, InconsistentInput, NegativeLambda, ZeroSteps
from .trajectory import Trajectory


def normalize_answer(a: str) -> str:
    """Lowercase, strip punctuation, drop articles, squeeze whitespace."""
    return normalize_text(a)


def _require_golds(golds: list[str]) -> None:
    if not golds:
        raise EmptyGolds("metric needs at least one gold answer")


def exact_match(pred: str, golds: list[str]) -> float:
    """1.0 iff the normalized prediction equals any normalized gold."""
    _require_golds(golds)
    p = normalize_answer(pred)
    return max(1.0 if p == normalize_answer(g) else 0.0 for g in golds)


def _f1_single(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    return 2.0 * overlap / (len(pred_tokens) + len(gold_tokens))


def f1(pred: str, golds: list[str]) -> float:
    """Token-multiset F1, max over golds; both-empty counts as a match."""
    _require_golds(golds)
    pred_tokens = norm_tokens(pred)
    return max(_f1_single(pred_tokens, norm_tokens(g)) for g in golds)


def direct_reward(traj: Trajectory, golds: list[str]) -> float:
    """Exact match of the primary answer; 0 when no answer block exists."""
    if traj.answer is None:
        return 0.0
    return exact_match(traj.answer, golds)


def reinference_reward(
    reinf_traj: Trajectory | None, had_formats: bool, golds: list[str]
) -> float:
    """Exact match of the structure-only answer; 0 by rule without formats."""
    if (reinf_traj is not None) != had_formats:
        raise InconsistentInput(
            "re-inferred trajectory must be present exactly when formats existed"
        )
    if not had_formats:
        return 0.0
    if reinf_traj.answer is None:
        return 0.0
    return exact_match(reinf_traj.answer, golds)


@dataclass(frozen=True)
class RewardBreakdown:
    direct: float
    reinf: float
    lambda_: float
    total: float

    def to_dict(self) -> dict:
        return {
            "direct": self.direct,
            "reinf": self.reinf,
            "lambda": self.lambda_,
            "total": self.total,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RewardBreakdown":
        return cls(d["direct"], d["reinf"], d["lambda"], d["total"])


def combined_reward(direct: float, reinf: float, lambda_: float) -> RewardBreakdown:
    if lambda_ < 0:
        raise NegativeLambda(f"lambda must be non-negative, got {lambda_}")
    return RewardBreakdown(direct, reinf, lambda_, direct + lambda_ * reinf)


class ScheduleKind(str, Enum):
    CONSTANT = "constant"
    LINEAR = "linear"


@dataclass(frozen=True)
class LambdaSchedule:
    """Mixing weight over training steps: constant, or linear ramp then hold."""

    kind: ScheduleKind = ScheduleKind.CONSTANT
    value: float = 0.2
    start: float = 0.0
    end: float = 0.2
    steps: int = 0

    @classmethod
    def constant(cls, value: float) -> "LambdaSchedule":
        if value < 0:
            raise NegativeLambda(f"lambda must be non-negative, got {value}")
        return cls(kind=ScheduleKind.CONSTANT, value=value)

    @classmethod
    def linear(cls, start: float, end: float, steps: int) -> "LambdaSchedule":
        if steps <= 0:
            raise ZeroSteps("linear schedule needs steps >= 1")
        if start < 0 or end < 0:
            raise NegativeLambda("lambda endpoints must be non-negative")
        return cls(kind=ScheduleKind.LINEAR, start=start, end=end, steps=steps)

    def to_dict(self) -> dict:
        if self.kind is ScheduleKind.CONSTANT:
            return {"kind": self.kind.value, "value": self.value}
        return {
            "kind": self.kind.value,
            "start": self.start,
            "end": self.end,
            "steps": self.steps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LambdaSchedule":
        kind = ScheduleKind(d["kind"])
        if kind is ScheduleKind.CONSTANT:
            return cls.constant(d["value"])
        return cls.linear(d["start"], d["end"], d["steps"])


def lambda_at(schedule: LambdaSchedule, step: int) -> float:
    """Weight at a step index; linear schedules clamp past their horizon."""
    if schedule.kind is ScheduleKind.CONSTANT:
        return schedule.value
    if schedule.steps <= 0:
        raise ZeroSteps("linear schedule needs steps >= 1")
    return schedule.start + (schedule.end - schedule.start) * min(
        step, schedule.steps
    ) / schedule.steps
