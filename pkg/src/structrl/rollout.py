"""Two-stage rollout: sample K trajectories per query, then re-infer from
the extracted structures alone and score both passes.

The re-inference prompt is built from format bodies only, never the source
documents, so its reward measures whether the structures carry the answer.
Failed samples stay in the group (scored 0 and flagged) to keep group size
and advantage semantics stable. All seeds derive from (query id, sample
index, base seed), which makes output independent of parallelism degree.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .backends import Generation, GenerationBackend, SamplingParams
from .dataset import QueryInstance
from .errors import BackendError
from .grpo import AdvantageSet, RewardGroup, TokenLogProbs, group_advantages
from .prompting import build_main_prompt, build_reinference_prompt
from .reward import (
    LambdaSchedule,
    RewardBreakdown,
    combined_reward,
    direct_reward,
    lambda_at,
    reinference_reward,
)
from .trajectory import (
    Trajectory,
    ValidationPolicy,
    ValidationReport,
    extract_formats,
    parse_trajectory,
    validate,
)

__all__ = [
    "QueryInstance",
    "RolloutConfig",
    "TrajectoryPair",
    "RolloutGroup",
    "derive_seed",
    "rollout_one",
    "run_rollouts",
    "write_rollout_jsonl",
    "read_rollout_jsonl",
]


def derive_seed(query_id: str, sample_index: int, base_seed: int) -> int:
    """Stable per-sample seed from (query id, sample index, base seed)."""
    h = hashlib.sha256(f"{query_id}:{sample_index}:{base_seed}".encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big")


@dataclass(frozen=True)
class RolloutConfig:
    k: int = 8
    lambda_schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    base_seed: int = 0
    parallelism: int = 1
    temperature: float = 1.0
    max_tokens: int = 1024
    retries: int = 2
    # validation rules that zero the pair's reward when they fire; empty by
    # default (NoAnswer already scores 0 through the missing answer)
    punitive_rules: tuple[str, ...] = ()
    # the re-inference pass runs on the same policy snapshot; kept as a field
    # so a frozen-verifier ablation is expressible in config
    reinference_backend: str = "same"
    copy_ngram: int = 30

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "lambda_schedule": self.lambda_schedule.to_dict(),
            "base_seed": self.base_seed,
            "parallelism": self.parallelism,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "retries": self.retries,
            "punitive_rules": list(self.punitive_rules),
            "reinference_backend": self.reinference_backend,
            "copy_ngram": self.copy_ngram,
        }


@dataclass(frozen=True)
class TrajectoryPair:
    primary: Trajectory
    reinferred: Trajectory | None
    breakdown: RewardBreakdown
    primary_validation: ValidationReport
    reinferred_validation: ValidationReport | None
    logprobs: TokenLogProbs | None
    seed: int
    failed: bool = False
    failure: str | None = None

    def to_dict(self) -> dict:
        return {
            "primary": self.primary.to_dict(),
            "primary_validation": self.primary_validation.to_dict(),
            "reinferred": self.reinferred.to_dict() if self.reinferred else None,
            "reinferred_validation": (
                self.reinferred_validation.to_dict()
                if self.reinferred_validation
                else None
            ),
            "breakdown": self.breakdown.to_dict(),
            "logprobs": (
                {
                    "policy": list(self.logprobs.policy),
                    "reference": list(self.logprobs.reference),
                    "behavior": list(self.logprobs.behavior),
                }
                if self.logprobs
                else None
            ),
            "seed": self.seed,
            "failed": self.failed,
            "failure": self.failure,
        }


@dataclass(frozen=True)
class RolloutGroup:
    query: QueryInstance
    pairs: tuple[TrajectoryPair, ...]
    advantages: AdvantageSet
    lambda_: float
    step: int

    def totals(self) -> tuple[float, ...]:
        return tuple(p.breakdown.total for p in self.pairs)

    def to_dict(self) -> dict:
        return {
            "query": self.query.to_dict(),
            "lambda": self.lambda_,
            "step": self.step,
            "pairs": [p.to_dict() for p in self.pairs],
            "advantages": list(self.advantages.advantages),
        }


def _generate_with_retries(
    backend: GenerationBackend, prompt: str, sampling: SamplingParams, retries: int
) -> Generation:
    last: BackendError | None = None
    for _ in range(retries + 1):
        try:
            return backend.generate(prompt, sampling)
        except BackendError as exc:
            last = exc
    raise last


def _failed_pair(seed: int, lambda_: float, reason: str) -> TrajectoryPair:
    empty = parse_trajectory("")
    return TrajectoryPair(
        primary=empty,
        reinferred=None,
        breakdown=combined_reward(0.0, 0.0, lambda_),
        primary_validation=validate(empty, []),
        reinferred_validation=None,
        logprobs=None,
        seed=seed,
        failed=True,
        failure=reason,
    )


def _rollout_sample(
    query: QueryInstance,
    index: int,
    lambda_: float,
    backend: GenerationBackend,
    config: RolloutConfig,
) -> TrajectoryPair:
    seed = derive_seed(query.id, index, config.base_seed)
    sampling = SamplingParams(
        temperature=config.temperature, max_tokens=config.max_tokens, seed=seed
    )
    prompt = build_main_prompt(query.question, list(query.docs))
    try:
        gen = _generate_with_retries(backend, prompt, sampling, config.retries)
    except BackendError as exc:
        return _failed_pair(seed, lambda_, f"primary generation: {exc}")

    policy = ValidationPolicy(copy_ngram=config.copy_ngram)
    primary = parse_trajectory(gen.text)
    primary_report = validate(primary, list(query.docs), policy)

    reinferred = None
    reinferred_report = None
    had_formats = primary.has_formats()
    if had_formats:
        reinf_prompt = build_reinference_prompt(query.question, extract_formats(primary))
        try:
            reinf_gen = _generate_with_retries(
                backend, reinf_prompt, sampling, config.retries
            )
        except BackendError as exc:
            return _failed_pair(seed, lambda_, f"re-inference generation: {exc}")
        reinferred = parse_trajectory(reinf_gen.text)
        reinferred_report = validate(reinferred, list(query.docs), policy)

    direct = direct_reward(primary, list(query.golds))
    reinf = reinference_reward(reinferred, had_formats, list(query.golds))
    if config.punitive_rules and any(
        v.rule_id.value in config.punitive_rules for v in primary_report.violations
    ):
        direct, reinf = 0.0, 0.0
    return TrajectoryPair(
        primary=primary,
        reinferred=reinferred,
        breakdown=combined_reward(direct, reinf, lambda_),
        primary_validation=primary_report,
        reinferred_validation=reinferred_report,
        logprobs=gen.logprobs,
        seed=seed,
    )


def rollout_one(
    query: QueryInstance,
    k: int,
    lambda_: float,
    backend: GenerationBackend,
    config: RolloutConfig = RolloutConfig(),
    step: int = 0,
) -> RolloutGroup:
    """One group: K sampled pairs for a query plus centered advantages."""
    if k < 1:
        raise ValueError("k must be >= 1")
    pairs = tuple(
        _rollout_sample(query, i, lambda_, backend, config) for i in range(k)
    )
    advantages = group_advantages(RewardGroup(tuple(p.breakdown.total for p in pairs)))
    return RolloutGroup(query, pairs, advantages, lambda_, step)


def run_rollouts(
    dataset: Iterable[QueryInstance],
    config: RolloutConfig,
    backend: GenerationBackend,
) -> Iterator[RolloutGroup]:
    """One group per query, in dataset order regardless of completion order.

    The query's position is its step index for the lambda schedule.
    """
    queries = list(dataset)

    def _one(item: tuple[int, QueryInstance]) -> RolloutGroup:
        step, query = item
        lam = lambda_at(config.lambda_schedule, step)
        return rollout_one(query, config.k, lam, backend, config, step=step)

    if config.parallelism <= 1:
        for item in enumerate(queries):
            yield _one(item)
        return
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        yield from pool.map(_one, enumerate(queries))


def write_rollout_jsonl(path: str | Path, groups: Iterable[RolloutGroup]) -> int:
    """One group per line; returns the group count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for group in groups:
            fh.write(json.dumps(group.to_dict(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_rollout_jsonl(path: str | Path) -> list[dict]:
    """Raw group records; re-scoring tools work on the dict form."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records


def rescore_records(records: list[dict], lambda_: float) -> list[dict]:
    """Recompute breakdowns and advantages under a new lambda.

    Pure re-scoring: generation is reused, the backend is never invoked.
    """
    out = []
    for record in records:
        new = json.loads(json.dumps(record))
        totals = []
        for pair in new["pairs"]:
            b = pair["breakdown"]
            breakdown = combined_reward(b["direct"], b["reinf"], lambda_)
            pair["breakdown"] = breakdown.to_dict()
            totals.append(breakdown.total)
        new["lambda"] = lambda_
        new["advantages"] = list(
            group_advantages(RewardGroup(tuple(totals))).advantages
        )
        out.append(new)
    return out
