import json

import pytest

from structrl.backends import MockBackend, SamplingParams
from structrl.dataset import QueryInstance
from structrl.errors import BackendError
from structrl.reward import LambdaSchedule
from structrl.rollout import (
    RolloutConfig,
    derive_seed,
    rescore_records,
    rollout_one,
    run_rollouts,
    write_rollout_jsonl,
)

QUESTION = (
    "Which film has the director born later, The Girl In Possession "
    "or Así En El Cielo Como En La Tierra?"
)

REINF_ANSWER = (
    "<think>The dates show 1947 is later than 1897, so the second film's "
    "director was born later.</think>\n"
    "<answer> Así en el cielo como en la tierra </answer>"
)


def golden_backend(tmp_path, golden_trace):
    rules = [
        {"contains": "Doc 1: The Girl in Possession", "response": golden_trace},
        {"contains": "- Monty Banks: 1897-07-15", "response": REINF_ANSWER},
    ]
    (tmp_path / "rules.json").write_text(json.dumps(rules), "utf-8")
    return MockBackend(tmp_path)


def golden_query(golden_docs, golden_golds):
    return QueryInstance(
        id="case-study",
        question=QUESTION,
        docs=tuple(golden_docs),
        golds=tuple(golden_golds),
    )


class TestSeeds:
    def test_derived_seed_is_stable(self):
        assert derive_seed("q1", 0, 0) == derive_seed("q1", 0, 0)

    def test_derived_seed_varies_per_component(self):
        seeds = {
            derive_seed("q1", 0, 0),
            derive_seed("q1", 1, 0),
            derive_seed("q2", 0, 0),
            derive_seed("q1", 0, 1),
        }
        assert len(seeds) == 4


class TestRolloutOne:
    def test_golden_group_rewards(self, tmp_path, golden_trace, golden_docs, golden_golds):
        backend = golden_backend(tmp_path, golden_trace)
        group = rollout_one(
            golden_query(golden_docs, golden_golds), 4, 0.2, backend
        )
        assert len(group.pairs) == 4
        for pair in group.pairs:
            assert pair.breakdown.direct == 1.0
            assert pair.breakdown.reinf == 1.0
            assert pair.breakdown.total == pytest.approx(1.2)
            assert pair.reinferred is not None
            assert pair.primary_validation.is_clean
        assert group.advantages.advantages == pytest.approx((0.0,) * 4, abs=1e-12)

    def test_no_format_trajectory_skips_reinference(self, tmp_path):
        rules = [{"contains": "Doc 1:", "response": "<think>easy</think><answer> Rome </answer>"}]
        (tmp_path / "rules.json").write_text(json.dumps(rules), "utf-8")
        query = QueryInstance("q", "capital?", ("some doc",), ("Rome",))
        group = rollout_one(query, 2, 0.2, MockBackend(tmp_path))
        for pair in group.pairs:
            assert pair.reinferred is None
            assert pair.breakdown.reinf == 0.0
            assert pair.breakdown.total == 1.0

    def test_no_answer_scores_zero(self, tmp_path):
        rules = [{"contains": "Doc 1:", "response": "<think>stuck</think>"}]
        (tmp_path / "rules.json").write_text(json.dumps(rules), "utf-8")
        query = QueryInstance("q", "capital?", ("some doc",), ("Rome",))
        group = rollout_one(query, 2, 0.2, MockBackend(tmp_path))
        assert group.totals() == (0.0, 0.0)

    def test_backend_failure_flags_sample_keeps_group_size(self, tmp_path):
        query = QueryInstance("q", "capital?", ("some doc",), ("Rome",))
        group = rollout_one(query, 3, 0.2, MockBackend(tmp_path))
        assert len(group.pairs) == 3
        for pair in group.pairs:
            assert pair.failed
            assert pair.breakdown.total == 0.0
            assert "primary generation" in pair.failure

    def test_retry_budget(self, tmp_path):
        from structrl.backends import Generation

        class Flaky:
            def __init__(self, fail_times):
                self.remaining = fail_times

            def generate(self, prompt, sampling):
                if self.remaining > 0:
                    self.remaining -= 1
                    raise BackendError("transient")
                return Generation("<answer> Rome </answer>", None)

        query = QueryInstance("q", "capital?", ("some doc",), ("Rome",))
        ok = rollout_one(query, 1, 0.0, Flaky(2), RolloutConfig(retries=2))
        assert not ok.pairs[0].failed
        failed = rollout_one(query, 1, 0.0, Flaky(2), RolloutConfig(retries=1))
        assert failed.pairs[0].failed

    def test_punitive_rule_zeroes_reward(self, tmp_path):
        doc = " ".join(f"w{i}" for i in range(40))
        trace = f"<format: Chunk>{doc}</format: Chunk><answer> Rome </answer>"
        rules = [
            {"contains": "Doc 1: w0", "response": trace},
            {"contains": "w0 w1", "response": "<answer> Rome </answer>"},
        ]
        (tmp_path / "rules.json").write_text(json.dumps(rules), "utf-8")
        query = QueryInstance("q", "capital?", (doc,), ("Rome",))
        lenient = rollout_one(query, 1, 0.2, MockBackend(tmp_path))
        assert lenient.totals()[0] == pytest.approx(1.2)
        strict = rollout_one(
            query, 1, 0.2, MockBackend(tmp_path),
            RolloutConfig(punitive_rules=("CopiedContent",)),
        )
        assert strict.totals()[0] == 0.0

    def test_pair_serialization_shape(self, tmp_path, golden_trace, golden_docs, golden_golds):
        backend = golden_backend(tmp_path, golden_trace)
        group = rollout_one(golden_query(golden_docs, golden_golds), 1, 0.2, backend)
        d = group.to_dict()
        assert set(d) == {"query", "lambda", "step", "pairs", "advantages"}
        pair = d["pairs"][0]
        assert set(pair) == {
            "primary",
            "primary_validation",
            "reinferred",
            "reinferred_validation",
            "breakdown",
            "logprobs",
            "seed",
            "failed",
            "failure",
        }


class TestRunRollouts:
    def _dataset(self):
        return [
            QueryInstance(f"q{i}", "capital?", (f"marker{i} doc",), ("Rome",))
            for i in range(3)
        ]

    def _backend(self, tmp_path):
        rules = [
            {"contains": f"marker{i}", "response": "<think>t</think><answer> Rome </answer>"}
            for i in range(3)
        ]
        (tmp_path / "rules.json").write_text(json.dumps(rules), "utf-8")
        return MockBackend(tmp_path)

    def test_order_matches_dataset(self, tmp_path):
        backend = self._backend(tmp_path)
        config = RolloutConfig(k=2, parallelism=1)
        groups = list(run_rollouts(self._dataset(), config, backend))
        assert [g.query.id for g in groups] == ["q0", "q1", "q2"]
        assert [g.step for g in groups] == [0, 1, 2]

    def test_parallelism_does_not_change_output(self, tmp_path):
        backend = self._backend(tmp_path)
        serial = [
            g.to_dict()
            for g in run_rollouts(self._dataset(), RolloutConfig(k=2, parallelism=1), backend)
        ]
        parallel = [
            g.to_dict()
            for g in run_rollouts(self._dataset(), RolloutConfig(k=2, parallelism=4), backend)
        ]
        assert json.dumps(serial) == json.dumps(parallel)

    def test_lambda_schedule_applied_per_step(self, tmp_path):
        backend = self._backend(tmp_path)
        config = RolloutConfig(
            k=1, lambda_schedule=LambdaSchedule.linear(0.0, 0.2, 2)
        )
        groups = list(run_rollouts(self._dataset(), config, backend))
        assert [g.lambda_ for g in groups] == pytest.approx([0.0, 0.1, 0.2])

    def test_empty_dataset_is_empty_stream(self, tmp_path):
        backend = self._backend(tmp_path)
        assert list(run_rollouts([], RolloutConfig(), backend)) == []

    def test_jsonl_round_trip_count(self, tmp_path):
        backend = self._backend(tmp_path)
        groups = run_rollouts(self._dataset(), RolloutConfig(k=2), backend)
        n = write_rollout_jsonl(tmp_path / "rollouts.jsonl", groups)
        assert n == 3


class TestRescore:
    def test_lambda_zero_collapses_to_direct(self, tmp_path, golden_trace, golden_docs, golden_golds):
        backend = golden_backend(tmp_path, golden_trace)
        group = rollout_one(golden_query(golden_docs, golden_golds), 2, 0.2, backend)
        records = [group.to_dict()]
        rescored = rescore_records(records, 0.0)
        for pair in rescored[0]["pairs"]:
            assert pair["breakdown"]["total"] == pair["breakdown"]["direct"]
            assert pair["breakdown"]["lambda"] == 0.0

    def test_rescoring_never_touches_generation(self, tmp_path, golden_trace, golden_docs, golden_golds):
        backend = golden_backend(tmp_path, golden_trace)
        group = rollout_one(golden_query(golden_docs, golden_golds), 2, 0.2, backend)
        records = [group.to_dict()]
        rescored = rescore_records(records, 0.5)
        assert rescored[0]["pairs"][0]["primary"] == records[0]["pairs"][0]["primary"]
        assert records[0]["pairs"][0]["breakdown"]["lambda"] == 0.2
