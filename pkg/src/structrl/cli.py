"""Operator entry point: rollouts, scoring export, evaluation, density
checks, trajectory validation, dataset plumbing, and a lambda sweep.

Config precedence is flags > environment > config file > defaults, and every
run that writes outputs also writes its resolved config beside them so reruns
are reproducible. Timestamps go to a sidecar log only, never into outputs.
Low scores are data, not failures: exit codes are nonzero only for
structural, schema, or I/O errors (and for --strict validation findings).
"""
from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

from . import dataset as ds
from . import evaluation as ev
from .density import (
    FactSet,
    Matcher,
    StructureCandidate,
    SyntheticInstance,
    SyntheticSpec,
    generate_synthetic,
    run_corpus,
)
from .backends import ENDPOINT_ENV, make_backend
from .errors import StructRLError
from .grpo import ObjectiveConfig, RewardGroup, TokenLogProbs, objective, write_training_signals
from .reward import LambdaSchedule
from .rollout import RolloutConfig, read_rollout_jsonl, rescore_records, run_rollouts, write_rollout_jsonl
from .trajectory import Rule, ValidationPolicy, parse_trajectory, validate

DEFAULTS = {
    "backend": "mock",
    "endpoint": None,
    "fixtures": None,
    "model": "default",
    "k": 8,
    "lambda": 0.2,
    "lambda_schedule": None,
    "epsilon": 0.2,
    "beta": 0.001,
    "seed": 0,
    "parallel": 1,
    "temperature": 1.0,
    "max_tokens": 1024,
    "retries": 2,
    "format": "text",
}

STRICT_RULES = {Rule.NO_ANSWER, Rule.PLACEHOLDER_FORMAT, Rule.PLACEHOLDER_ANSWER}


def parse_schedule(text: str) -> LambdaSchedule:
    """Parse 'constant:V' or 'linear:START:END:STEPS'."""
    parts = text.split(":")
    if parts[0] == "constant" and len(parts) == 2:
        return LambdaSchedule.constant(float(parts[1]))
    if parts[0] == "linear" and len(parts) == 4:
        return LambdaSchedule.linear(float(parts[1]), float(parts[2]), int(parts[3]))
    raise ValueError(
        f"bad schedule {text!r}: want constant:V or linear:START:END:STEPS"
    )


def resolve_config(args: argparse.Namespace) -> dict:
    """Overlay defaults <- config file <- environment <- explicit flags."""
    resolved = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        resolved.update(json.loads(Path(config_path).read_text("utf-8")))
    if os.environ.get(ENDPOINT_ENV):
        resolved["endpoint"] = os.environ[ENDPOINT_ENV]
    for key in DEFAULTS:
        attr = "lambda_" if key == "lambda" else key
        flag = getattr(args, attr, None)
        if flag is not None:
            resolved[key] = flag
    for key in ("dataset", "out"):
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _schedule_from(resolved: dict) -> LambdaSchedule:
    if resolved.get("lambda_schedule"):
        return parse_schedule(resolved["lambda_schedule"])
    return LambdaSchedule.constant(float(resolved["lambda"]))


def _write_sidecar(out_dir: Path, command: str, resolved: dict) -> None:
    serializable = {"command": command, **resolved}
    (out_dir / "resolved_config.json").write_text(
        json.dumps(serializable, indent=2, ensure_ascii=False) + "\n", "utf-8"
    )
    stamp = datetime.datetime.now().isoformat(timespec="seconds")
    with open(out_dir / "run.log", "a", encoding="utf-8") as fh:
        fh.write(f"{stamp} {command}\n")


def _signals_from_records(records: list[dict], cfg: ObjectiveConfig):
    groups = []
    for record in records:
        totals = tuple(p["breakdown"]["total"] for p in record["pairs"])
        logprobs = []
        for pair in record["pairs"]:
            lp = pair.get("logprobs")
            if lp:
                logprobs.append(
                    TokenLogProbs(
                        tuple(lp["policy"]), tuple(lp["reference"]), tuple(lp["behavior"])
                    )
                )
            else:
                logprobs.append(TokenLogProbs((), (), ()))
        groups.append((RewardGroup(totals), logprobs))
    return objective(groups, cfg)


def cmd_rollout(args: argparse.Namespace) -> int:
    resolved = resolve_config(args)
    queries = ds.load_jsonl(resolved["dataset"])
    backend = make_backend(
        resolved["backend"],
        fixtures=resolved["fixtures"],
        endpoint=resolved["endpoint"],
        model=resolved["model"],
    )
    config = RolloutConfig(
        k=int(resolved["k"]),
        lambda_schedule=_schedule_from(resolved),
        base_seed=int(resolved["seed"]),
        parallelism=int(resolved["parallel"]),
        temperature=float(resolved["temperature"]),
        max_tokens=int(resolved["max_tokens"]),
        retries=int(resolved["retries"]),
    )
    out_dir = Path(resolved["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = list(run_rollouts(queries, config, backend))
    write_rollout_jsonl(out_dir / "rollouts.jsonl", groups)

    records = read_rollout_jsonl(out_dir / "rollouts.jsonl")
    signals_path = out_dir / "training_signals.jsonl"
    if records:
        _, signals = _signals_from_records(
            records, ObjectiveConfig(float(resolved["epsilon"]), float(resolved["beta"]))
        )
        write_training_signals(signals_path, [r["query"]["id"] for r in records], signals)
    else:
        signals_path.write_text("", "utf-8")
    _write_sidecar(out_dir, "rollout", {**resolved, "config": config.to_dict()})

    pairs = [p for g in groups for p in g.pairs]
    if pairs:
        mean_total = sum(p.breakdown.total for p in pairs) / len(pairs)
        with_formats = sum(1 for p in pairs if p.primary.has_formats()) / len(pairs)
        self_contained = sum(1 for p in pairs if p.breakdown.reinf == 1.0) / len(pairs)
        print(
            f"groups={len(groups)} samples={len(pairs)} "
            f"mean_reward={mean_total:.4f} "
            f"with_formats={100 * with_formats:.1f}% "
            f"self_contained={100 * self_contained:.1f}%"
        )
    else:
        print("groups=0 samples=0")
    return 0


def cmd_score_export(args: argparse.Namespace) -> int:
    resolved = resolve_config(args)
    records = read_rollout_jsonl(args.rollouts)
    out_path = Path(args.out)
    if records:
        j, signals = _signals_from_records(
            records, ObjectiveConfig(float(resolved["epsilon"]), float(resolved["beta"]))
        )
        write_training_signals(out_path, [r["query"]["id"] for r in records], signals)
        print(f"objective={j:.6f} groups={len(records)}")
    else:
        out_path.write_text("", "utf-8")
        print("objective=n/a groups=0")
    return 0


def cmd_sweep_lambda(args: argparse.Namespace) -> int:
    records = read_rollout_jsonl(args.rollouts)
    values = [float(v) for v in args.values.split(",")]
    rows = []
    for lam in values:
        rescored = rescore_records(records, lam)
        pairs = [p for r in rescored for p in r["pairs"]]
        n = len(pairs) or 1
        rows.append(
            {
                "lambda": lam,
                "mean_total": sum(p["breakdown"]["total"] for p in pairs) / n,
                "mean_direct": sum(p["breakdown"]["direct"] for p in pairs) / n,
                "mean_reinf": sum(p["breakdown"]["reinf"] for p in pairs) / n,
            }
        )
    if args.format == "json":
        text = json.dumps(rows, indent=2)
    elif args.format == "csv":
        lines = ["lambda,mean_total,mean_direct,mean_reinf"]
        lines += [
            f"{r['lambda']},{r['mean_total']},{r['mean_direct']},{r['mean_reinf']}"
            for r in rows
        ]
        text = "\n".join(lines) + "\n"
    else:
        lines = [f"{'lambda':>8}  {'mean_total':>10}  {'mean_direct':>11}  {'mean_reinf':>10}"]
        lines += [
            f"{r['lambda']:8.3f}  {r['mean_total']:10.6f}  "
            f"{r['mean_direct']:11.6f}  {r['mean_reinf']:10.6f}"
            for r in rows
        ]
        text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, "utf-8")
    print(text, end="")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    instances = {q.id: q for q in ds.load_jsonl(args.dataset)}
    pairs: list[tuple[str, list[str]]] = []
    with open(args.predictions, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            qid = str(record["id"])
            if qid not in instances:
                print(f"line {lineno}: unknown prediction id {qid!r}", file=sys.stderr)
                return 1
            pairs.append((record["prediction"], list(instances[qid].golds)))
    summary = ev.evaluate(pairs)
    name = Path(args.dataset).stem
    print(ev.report({name: summary}, args.format or "text"), end="")
    return 0


def _corpus_instances(path: str) -> list[SyntheticInstance]:
    instances = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            raw = record["raw_docs"]
            if isinstance(raw, list):
                raw = "\n".join(raw)
            cands = tuple(
                StructureCandidate(c["label"], c["body"])
                for c in record.get("candidates", [])
            )
            matcher = Matcher(record.get("matcher", "normalized_containment"))
            instances.append(
                SyntheticInstance(raw, cands, FactSet(tuple(record["facts"]), matcher))
            )
    return instances


def cmd_density(args: argparse.Namespace) -> int:
    if args.synthetic:
        if args.spec:
            spec = SyntheticSpec.from_dict(json.loads(Path(args.spec).read_text("utf-8")))
        else:
            spec = SyntheticSpec(n_instances=args.n, seed=args.seed)
        instances = generate_synthetic(spec)
    elif args.corpus:
        instances = _corpus_instances(args.corpus)
    else:
        print("density needs --corpus or --synthetic", file=sys.stderr)
        return 1
    report = run_corpus(instances)
    text = json.dumps(report, ensure_ascii=False, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, "utf-8")
    s = report["summary"]
    print(
        f"instances={s['n']} pass={s['pass']} fail={s['fail']} "
        f"premise_unmet={s['premise_unmet']}"
    )
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    docs: list[str] = []
    if args.docs:
        docs = json.loads(Path(args.docs).read_text("utf-8"))
    strict_hit = False
    with open(args.trajectories, encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            if not line.strip():
                continue
            record = json.loads(line)
            raw = record if isinstance(record, str) else record["raw"]
            traj = parse_trajectory(raw)
            report = validate(traj, docs, ValidationPolicy())
            if report.rules() & STRICT_RULES:
                strict_hit = True
            print(
                json.dumps(
                    {"index": index, "is_clean": report.is_clean,
                     "violations": [v.to_dict() for v in report.violations]},
                    ensure_ascii=False,
                )
            )
    return 1 if (args.strict and strict_hit) else 0


def cmd_convert_dataset(args: argparse.Namespace) -> int:
    n = ds.convert_file(args.src, args.out)
    print(f"wrote {n} instances to {args.out}")
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    instances = ds.load_jsonl(args.dataset)
    sampled = ds.sample(instances, args.n, args.seed)
    ds.write_jsonl(args.out, sampled)
    print(f"sampled {len(sampled)} of {len(instances)} instances to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="structrl",
        description="Rollout, reward, and verification engine for structured retrieval QA reasoning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rollout", help="two-stage rollout over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--backend", choices=["mock", "http"], default=None)
    p.add_argument("--endpoint", default=None)
    p.add_argument("--fixtures", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p.add_argument("--lambda-schedule", default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallel", type=int, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--max-tokens", dest="max_tokens", type=int, default=None)
    p.add_argument("--retries", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("score-export", help="recompute training signals from rollouts")
    p.add_argument("--rollouts", required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score_export)

    p = sub.add_parser("sweep-lambda", help="re-score rollouts under several lambdas")
    p.add_argument("--rollouts", required=True)
    p.add_argument("--values", default="0,0.1,0.2,0.3")
    p.add_argument("--format", choices=["text", "json", "csv"], default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep_lambda)

    p = sub.add_parser("eval", help="EM/F1 report for a prediction file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", choices=["text", "json", "csv"], default="text")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("density", help="density ordering report")
    p.add_argument("--corpus", default=None)
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--spec", default=None)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("validate", help="parse and validate trajectories")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--docs", default=None)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("convert-dataset", help="convert a raw QA dump to the package schema")
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert_dataset)

    p = sub.add_parser("sample", help="deterministic subsample of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (StructRLError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
