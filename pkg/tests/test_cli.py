"""End-to-end tests for the command line interface.

Every command is invoked in-process through main() so exit codes and
stdout/stderr are observable without subprocesses.
"""
import json
from importlib import resources

import jsonschema
import pytest

from structrl.cli import DEFAULTS, build_parser, main, parse_schedule, resolve_config
from structrl.reward import ScheduleKind

QUESTION = (
    "Which film has the director born later, The Girl In Possession "
    "or Así En El Cielo Como En La Tierra?"
)

REINF_ANSWER = (
    "<think>The dates show 1947 is later than 1897, so the second film's "
    "director was born later.</think>\n"
    "<answer> Así en el cielo como en la tierra </answer>"
)

PLAIN_RESPONSE = "<think>easy</think>\n<answer> Rome </answer>"


def write_fixtures(tmp_path, golden_trace, golden_docs, golden_golds):
    """Mock backend rules plus a two-query dataset file."""
    fixtures = tmp_path / "fixtures"
    fixtures.mkdir(exist_ok=True)
    rules = [
        {"contains": "Doc 1: The Girl in Possession", "response": golden_trace},
        {"contains": "- Monty Banks: 1897-07-15", "response": REINF_ANSWER},
        {"contains": "Doc 1: plain doc", "response": PLAIN_RESPONSE},
    ]
    (fixtures / "rules.json").write_text(json.dumps(rules), "utf-8")
    dataset = tmp_path / "dataset.jsonl"
    records = [
        {
            "id": "case-study",
            "question": QUESTION,
            "docs": list(golden_docs),
            "golden_answers": list(golden_golds),
        },
        {
            "id": "plain",
            "question": "What is the capital of Italy?",
            "docs": ["plain doc"],
            "golden_answers": ["Rome"],
        },
    ]
    dataset.write_text("\n".join(json.dumps(r) for r in records) + "\n", "utf-8")
    return dataset, fixtures


def run_rollout_cli(tmp_path, dataset, fixtures, out_name, extra=()):
    out_dir = tmp_path / out_name
    code = main(
        [
            "rollout",
            "--dataset", str(dataset),
            "--fixtures", str(fixtures),
            "--k", "2",
            "--out", str(out_dir),
            *extra,
        ]
    )
    assert code == 0
    return out_dir


class TestParseSchedule:
    def test_constant(self):
        schedule = parse_schedule("constant:0.3")
        assert schedule.kind is ScheduleKind.CONSTANT
        assert schedule.value == 0.3

    def test_linear(self):
        schedule = parse_schedule("linear:0:0.2:100")
        assert schedule.kind is ScheduleKind.LINEAR
        assert schedule.start == 0.0
        assert schedule.end == 0.2
        assert schedule.steps == 100

    @pytest.mark.parametrize("text", ["", "constant", "linear:1:2", "cosine:0:1:5"])
    def test_rejects_malformed(self, text):
        with pytest.raises(ValueError):
            parse_schedule(text)


class TestResolveConfig:
    def parse(self, argv):
        return build_parser().parse_args(argv)

    def base_argv(self, **overrides):
        argv = ["rollout", "--dataset", "d.jsonl", "--out", "out"]
        for flag, value in overrides.items():
            argv += [flag, value]
        return argv

    def test_defaults_apply(self):
        resolved = resolve_config(self.parse(self.base_argv()))
        assert resolved["k"] == DEFAULTS["k"]
        assert resolved["lambda"] == DEFAULTS["lambda"]
        assert resolved["backend"] == "mock"

    def test_config_file_overrides_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"k": 3, "lambda": 0.5}), "utf-8")
        resolved = resolve_config(self.parse(self.base_argv(**{"--config": str(cfg)})))
        assert resolved["k"] == 3
        assert resolved["lambda"] == 0.5

    def test_env_overrides_config_file(self, tmp_path, monkeypatch):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"endpoint": "http://from-file"}), "utf-8")
        monkeypatch.setenv("STRUCTRL_ENDPOINT", "http://from-env")
        resolved = resolve_config(self.parse(self.base_argv(**{"--config": str(cfg)})))
        assert resolved["endpoint"] == "http://from-env"

    def test_flag_overrides_everything(self, tmp_path, monkeypatch):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"k": 3, "endpoint": "http://from-file"}), "utf-8")
        monkeypatch.setenv("STRUCTRL_ENDPOINT", "http://from-env")
        args = self.parse(
            self.base_argv(**{"--config": str(cfg), "--k": "5", "--endpoint": "http://flag"})
        )
        resolved = resolve_config(args)
        assert resolved["k"] == 5
        assert resolved["endpoint"] == "http://flag"

    def test_lambda_flag_maps_to_lambda_key(self):
        resolved = resolve_config(self.parse(self.base_argv(**{"--lambda": "0.4"})))
        assert resolved["lambda"] == 0.4


class TestRolloutCommand:
    def test_writes_outputs_and_summary(
        self, tmp_path, capsys, golden_trace, golden_docs, golden_golds
    ):
        dataset, fixtures = write_fixtures(tmp_path, golden_trace, golden_docs, golden_golds)
        out_dir = run_rollout_cli(tmp_path, dataset, fixtures, "out")
        assert (out_dir / "rollouts.jsonl").is_file()
        assert (out_dir / "training_signals.jsonl").is_file()
        assert (out_dir / "resolved_config.json").is_file()
        assert (out_dir / "run.log").is_file()
        summary = capsys.readouterr().out
        assert "groups=2 samples=4" in summary
        assert "with_formats=50.0%" in summary

    def test_rerun_is_byte_identical(
        self, tmp_path, golden_trace, golden_docs, golden_golds
    ):
        dataset, fixtures = write_fixtures(tmp_path, golden_trace, golden_docs, golden_golds)
        first = run_rollout_cli(tmp_path, dataset, fixtures, "a")
        second = run_rollout_cli(tmp_path, dataset, fixtures, "b")
        for name in ("rollouts.jsonl", "training_signals.jsonl"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_parallel_matches_serial(
        self, tmp_path, golden_trace, golden_docs, golden_golds
    ):
        dataset, fixtures = write_fixtures(tmp_path, golden_trace, golden_docs, golden_golds)
        serial = run_rollout_cli(tmp_path, dataset, fixtures, "serial")
        parallel = run_rollout_cli(
            tmp_path, dataset, fixtures, "parallel", extra=["--parallel", "4"]
        )
        assert (serial / "rollouts.jsonl").read_bytes() == (
            parallel / "rollouts.jsonl"
        ).read_bytes()

    def test_resolved_config_records_flags(
        self, tmp_path, golden_trace, golden_docs, golden_golds
    ):
        dataset, fixtures = write_fixtures(tmp_path, golden_trace, golden_docs, golden_golds)
        out_dir = run_rollout_cli(
            tmp_path, dataset, fixtures, "out", extra=["--seed", "9"]
        )
        recorded = json.loads((out_dir / "resolved_config.json").read_text("utf-8"))
        assert recorded["command"] == "rollout"
        assert recorded["seed"] == 9
        assert recorded["k"] == 2

    def test_missing_dataset_exits_nonzero(self, tmp_path, capsys):
        code = main(
            [
                "rollout",
                "--dataset", str(tmp_path / "absent.jsonl"),
                "--fixtures", str(tmp_path),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestScoreExport:
    def test_matches_rollout_signals(
        self, tmp_path, golden_trace, golden_docs, golden_golds, capsys
    ):
        dataset, fixtures = write_fixtures(tmp_path, golden_trace, golden_docs, golden_golds)
        out_dir = run_rollout_cli(tmp_path, dataset, fixtures, "out")
        exported = tmp_path / "signals.jsonl"
        code = main(
            [
                "score-export",
                "--rollouts", str(out_dir / "rollouts.jsonl"),
                "--out", str(exported),
            ]
        )
        assert code == 0
        assert exported.read_bytes() == (out_dir / "training_signals.jsonl").read_bytes()
        assert "objective=" in capsys.readouterr().out

    def test_empty_rollout_file(self, tmp_path, capsys):
        empty = tmp_path / "rollouts.jsonl"
        empty.write_text("", "utf-8")
        out = tmp_path / "signals.jsonl"
        code = main(["score-export", "--rollouts", str(empty), "--out", str(out)])
        assert code == 0
        assert out.read_text("utf-8") == ""
        assert "groups=0" in capsys.readouterr().out


class TestSweepLambda:
    def rollouts(self, tmp_path, golden_trace, golden_docs, golden_golds):
        dataset, fixtures = write_fixtures(tmp_path, golden_trace, golden_docs, golden_golds)
        out_dir = run_rollout_cli(tmp_path, dataset, fixtures, "out")
        return out_dir / "rollouts.jsonl"

    def test_zero_lambda_row_equals_direct(
        self, tmp_path, capsys, golden_trace, golden_docs, golden_golds
    ):
        rollouts = self.rollouts(tmp_path, golden_trace, golden_docs, golden_golds)
        capsys.readouterr()
        code = main(
            [
                "sweep-lambda",
                "--rollouts", str(rollouts),
                "--values", "0,0.2",
                "--format", "json",
            ]
        )
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        assert rows[0]["lambda"] == 0.0
        assert rows[0]["mean_total"] == rows[0]["mean_direct"]
        gap = rows[1]["mean_total"] - rows[1]["mean_direct"]
        assert gap == pytest.approx(0.2 * rows[1]["mean_reinf"], abs=1e-12)

    def test_csv_format_and_out_file(
        self, tmp_path, capsys, golden_trace, golden_docs, golden_golds
    ):
        rollouts = self.rollouts(tmp_path, golden_trace, golden_docs, golden_golds)
        capsys.readouterr()
        out_file = tmp_path / "sweep.csv"
        code = main(
            [
                "sweep-lambda",
                "--rollouts", str(rollouts),
                "--values", "0,0.1",
                "--format", "csv",
                "--out", str(out_file),
            ]
        )
        assert code == 0
        text = out_file.read_text("utf-8")
        assert text.splitlines()[0] == "lambda,mean_total,mean_direct,mean_reinf"
        assert len(text.splitlines()) == 3
        assert capsys.readouterr().out == text


class TestEvalCommand:
    def dataset(self, tmp_path):
        path = tmp_path / "eval_dataset.jsonl"
        records = [
            {"id": "q1", "question": "?", "docs": ["d"], "golden_answers": ["Paris"]},
            {"id": "q2", "question": "?", "docs": ["d"], "golden_answers": ["Rome"]},
        ]
        path.write_text("\n".join(json.dumps(r) for r in records) + "\n", "utf-8")
        return path

    def test_reports_metrics(self, tmp_path, capsys):
        dataset = self.dataset(tmp_path)
        predictions = tmp_path / "preds.jsonl"
        predictions.write_text(
            json.dumps({"id": "q1", "prediction": "paris"}) + "\n"
            + json.dumps({"id": "q2", "prediction": "Milan"}) + "\n",
            "utf-8",
        )
        code = main(
            [
                "eval",
                "--predictions", str(predictions),
                "--dataset", str(dataset),
                "--format", "json",
            ]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["eval_dataset"]["em"] == "50.00"
        assert payload["eval_dataset"]["n"] == 2

    def test_unknown_id_exits_nonzero(self, tmp_path, capsys):
        dataset = self.dataset(tmp_path)
        predictions = tmp_path / "preds.jsonl"
        predictions.write_text(json.dumps({"id": "ghost", "prediction": "x"}) + "\n", "utf-8")
        code = main(
            ["eval", "--predictions", str(predictions), "--dataset", str(dataset)]
        )
        assert code == 1
        assert "unknown prediction id" in capsys.readouterr().err


class TestDensityCommand:
    def test_synthetic_report_validates_against_schema(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = main(
            ["density", "--synthetic", "--n", "5", "--seed", "3", "--out", str(out)]
        )
        assert code == 0
        assert "instances=5 pass=5" in capsys.readouterr().out
        schema = json.loads(
            resources.files("structrl.schemas")
            .joinpath("density_report.schema.json")
            .read_text("utf-8")
        )
        jsonschema.validate(json.loads(out.read_text("utf-8")), schema)

    def test_spec_file(self, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n_instances": 4, "seed": 11}), "utf-8")
        code = main(["density", "--synthetic", "--spec", str(spec)])
        assert code == 0
        assert "instances=4" in capsys.readouterr().out

    def test_corpus_file(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.jsonl"
        record = {
            "facts": ["f1 q", "f2 w"],
            "raw_docs": " ".join(["pad"] * 20) + " f1 q f2 w",
            "candidates": [
                {"label": "Table", "body": "f1 q f2 w hdr hdr"},
                {"label": "timeline", "body": "f1 q f2 w"},
            ],
        }
        corpus.write_text(json.dumps(record) + "\n", "utf-8")
        code = main(["density", "--corpus", str(corpus)])
        assert code == 0
        assert "pass=1" in capsys.readouterr().out

    def test_needs_source(self, capsys):
        code = main(["density"])
        assert code == 1
        assert "--corpus or --synthetic" in capsys.readouterr().err


class TestValidateCommand:
    def test_clean_trace(self, tmp_path, capsys, golden_trace, golden_docs):
        trajectories = tmp_path / "traces.jsonl"
        trajectories.write_text(json.dumps(golden_trace) + "\n", "utf-8")
        docs = tmp_path / "docs.json"
        docs.write_text(json.dumps(golden_docs), "utf-8")
        code = main(
            ["validate", "--trajectories", str(trajectories), "--docs", str(docs)]
        )
        assert code == 0
        line = json.loads(capsys.readouterr().out.splitlines()[0])
        assert line["is_clean"] is True
        assert line["violations"] == []

    def test_strict_flags_placeholder_answer(self, tmp_path, capsys):
        trajectories = tmp_path / "traces.jsonl"
        trajectories.write_text(
            json.dumps("<think>x</think><answer>and</answer>") + "\n", "utf-8"
        )
        code = main(
            ["validate", "--trajectories", str(trajectories), "--strict"]
        )
        assert code == 1
        line = json.loads(capsys.readouterr().out.splitlines()[0])
        assert line["is_clean"] is False

    def test_non_strict_returns_zero_on_findings(self, tmp_path, capsys):
        trajectories = tmp_path / "traces.jsonl"
        trajectories.write_text(json.dumps("<think>only thinking</think>") + "\n", "utf-8")
        code = main(["validate", "--trajectories", str(trajectories)])
        assert code == 0
        line = json.loads(capsys.readouterr().out.splitlines()[0])
        assert "NoAnswer" in [v["rule_id"] for v in line["violations"]]

    def test_accepts_raw_object_lines(self, tmp_path, capsys):
        trajectories = tmp_path / "traces.jsonl"
        record = {"raw": "<think>t</think><answer> Oslo </answer>"}
        trajectories.write_text(json.dumps(record) + "\n", "utf-8")
        code = main(["validate", "--trajectories", str(trajectories)])
        assert code == 0
        assert json.loads(capsys.readouterr().out.splitlines()[0])["is_clean"] is True


class TestConvertAndSample:
    def test_convert_dataset(self, tmp_path, capsys):
        src = tmp_path / "raw.json"
        raw = [
            {
                "_id": "abc",
                "question": "Who wrote it?",
                "answer": "Ada",
                "context": [["Bio", ["Ada wrote it. ", "She was first."]]],
            }
        ]
        src.write_text(json.dumps(raw), "utf-8")
        out = tmp_path / "converted.jsonl"
        code = main(["convert-dataset", "--src", str(src), "--out", str(out)])
        assert code == 0
        assert "wrote 1 instances" in capsys.readouterr().out
        record = json.loads(out.read_text("utf-8").splitlines()[0])
        assert record["id"] == "abc"
        assert record["golden_answers"] == ["Ada"]
        assert record["docs"] == ["Bio\nAda wrote it. She was first."]

    def dataset(self, tmp_path, n=10):
        path = tmp_path / "big.jsonl"
        lines = [
            json.dumps(
                {"id": f"q{i}", "question": "?", "docs": ["d"], "golden_answers": ["a"]}
            )
            for i in range(n)
        ]
        path.write_text("\n".join(lines) + "\n", "utf-8")
        return path

    def test_sample_is_reproducible(self, tmp_path, capsys):
        dataset = self.dataset(tmp_path)
        out1, out2 = tmp_path / "s1.jsonl", tmp_path / "s2.jsonl"
        assert main(["sample", "--dataset", str(dataset), "--n", "4",
                     "--seed", "1", "--out", str(out1)]) == 0
        assert main(["sample", "--dataset", str(dataset), "--n", "4",
                     "--seed", "1", "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        ids = [json.loads(l)["id"] for l in out1.read_text("utf-8").splitlines()]
        assert len(ids) == len(set(ids)) == 4

    def test_sample_too_large_errors(self, tmp_path, capsys):
        dataset = self.dataset(tmp_path, n=3)
        code = main(["sample", "--dataset", str(dataset), "--n", "5",
                     "--seed", "0", "--out", str(tmp_path / "s.jsonl")])
        assert code == 1
        assert "error:" in capsys.readouterr().err
