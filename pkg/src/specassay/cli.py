"""Command-line application: assess, evaluate, calibrate, import-run, report.

Exit codes are a stable contract: 0 = CORRECT (or command succeeded),
1 = INCORRECT, 2 = operational error (bad config, unreadable files,
unavailable executor).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import (
    THRESHOLD_PRESETS,
    ConfigError,
    PipelineConfig,
    build_executor,
    build_gateway,
    load_config,
)
from .corpus import (
    Candidate,
    CorpusRecord,
    FormatError,
    InvalidFraction,
    TaskSpec,
    load_corpus,
    split_calibration,
)
from .executor import ExecutorUnavailable, HarnessProtocolError
from .llm import AuthError, MockExhausted, TokenUsage, TransportError
from .metrics import RunEntry, RunRecord, load_run_record, save_run_record
from .report import render_text, write_reports
from .verdicts import (
    Assessment,
    CalibrationPoint,
    assess,
    assess_many,
    calibrate_threshold,
    zero_shot_cot,
)

APPROACH_GROUNDED = "grounded"
APPROACH_ZERO_SHOT = "zero-shot-cot"
APPROACHES = (APPROACH_GROUNDED, APPROACH_ZERO_SHOT)

EXIT_CORRECT = 0
EXIT_INCORRECT = 1
EXIT_ERROR = 2

_OPERATIONAL_ERRORS = (
    ConfigError,
    FormatError,
    InvalidFraction,
    ExecutorUnavailable,
    HarnessProtocolError,
    TransportError,
    AuthError,
    MockExhausted,
    OSError,
    ValueError,
)

_CONFIG_FLAGS: list[tuple[str, str, type]] = [
    ("--scenarios", "scenarios", int),
    ("--repair-budget", "repair_budget", int),
    ("--inputs-per-scenario", "inputs_per_scenario", int),
    ("--threshold", "threshold", float),
    ("--early-stop-after", "early_stop_after", int),
    ("--timeout-ms", "timeout_ms", int),
    ("--temperature", "temperature", float),
    ("--reruns", "reruns", int),
    ("--workers", "workers", int),
    ("--base-seed", "base_seed", int),
    ("--model", "model", str),
    ("--endpoint", "endpoint", str),
    ("--backend", "backend", str),
    ("--mock-script", "mock_script", str),
    ("--executor", "executor", str),
    ("--harness-cmd", "harness_cmd", str),
    ("--grace-ms", "grace_ms", int),
    ("--retries", "retries", int),
    ("--max-output-tokens", "max_output_tokens", int),
    ("--template-dir", "template_dir", str),
    ("--api-key-env", "api_key_env", str),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline configuration")
    group.add_argument("--config", help="key = value configuration file")
    for flag, dest, typ in _CONFIG_FLAGS:
        group.add_argument(flag, dest=dest, type=typ, default=argparse.SUPPRESS)


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    for _, dest, _ in _CONFIG_FLAGS:
        if hasattr(args, dest):
            setattr(config, dest, getattr(args, dest))
    config.validate()
    return config


def _print_assessment(assessment: Assessment) -> None:
    head = f"{assessment.task_id} / {assessment.candidate_id}: {assessment.label}"
    print(head)
    print(f"  reason: {assessment.reason}")
    if assessment.score is not None:
        relation = ">=" if assessment.score >= assessment.threshold else "<"
        print(f"  score: {assessment.score:.3f} {relation} threshold {assessment.threshold:.2f}")
        presets = ", ".join(
            f"tau={tau:.1f} -> {'CORRECT' if assessment.score >= tau else 'INCORRECT'}"
            for tau in THRESHOLD_PRESETS
        )
        print(f"  preset labels: {presets}")
    else:
        print(f"  score: undefined (threshold {assessment.threshold:.2f})")
    if assessment.verdicts:
        print("  verdicts:")
        for verdict in assessment.verdicts:
            print(f"    {verdict.input_id:<10} {verdict.label:<12} attempts={verdict.attempts}")
    print(f"  skipped scenarios: {assessment.skipped_scenarios}")
    print(f"  unparseable verdicts: {assessment.unparseable_count}")
    print(
        f"  tokens: prompt {assessment.tokens.prompt_tokens}, "
        f"completion {assessment.tokens.completion_tokens}"
    )
    if assessment.error:
        print(f"  error: {assessment.error}")


def _single_candidate(args: argparse.Namespace) -> tuple[TaskSpec, Candidate]:
    if args.corpus:
        records = load_corpus(args.corpus)
        for record in records:
            if args.task_id and record.task.task_id != args.task_id:
                continue
            for candidate in record.candidates:
                if args.candidate_id and candidate.candidate_id != args.candidate_id:
                    continue
                return record.task, candidate
        raise ConfigError(
            f"no candidate matching task_id={args.task_id!r} candidate_id={args.candidate_id!r}"
        )
    if not (args.spec_file and args.candidate_file):
        raise ConfigError("provide either --corpus or both --spec-file and --candidate-file")
    specification = Path(args.spec_file).read_text(encoding="utf-8")
    source = Path(args.candidate_file).read_text(encoding="utf-8")
    task_id = args.task_id or Path(args.spec_file).stem
    task = TaskSpec(
        task_id=task_id,
        specification=specification,
        input_mode=args.input_mode,
        entry_point=args.entry_point,
    )
    if task.input_mode == "CALL" and not task.entry_point:
        raise ConfigError("CALL mode requires --entry-point")
    candidate = Candidate(
        candidate_id=args.candidate_id or Path(args.candidate_file).stem,
        task_id=task_id,
        source_code=source,
    )
    return task, candidate


def cmd_assess(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    task, candidate = _single_candidate(args)
    gateway = build_gateway(config)
    executor = build_executor(config)
    try:
        assessment = assess(task, candidate, config, gateway, executor, run_seed=config.base_seed)
    finally:
        close = getattr(executor, "close", None)
        if close:
            close()
    _print_assessment(assessment)
    if args.out:
        Path(args.out).write_text(assessment.to_json() + "\n", encoding="utf-8")
    return EXIT_CORRECT if assessment.label == "CORRECT" else EXIT_INCORRECT


def _require_labels(records: list[CorpusRecord]) -> None:
    for record in records:
        for candidate in record.candidates:
            if candidate.ground_truth is None:
                raise ConfigError(
                    f"candidate {candidate.candidate_id!r} of task {record.task.task_id!r} "
                    "has no ground_truth; evaluation needs a labeled corpus"
                )


def _grounded_run(
    records: list[CorpusRecord], config: PipelineConfig, run_index: int
) -> tuple[list[RunEntry], list[dict]]:
    gateway = build_gateway(config)
    executor = build_executor(config)
    errors: list[dict] = []
    truth = {
        (rec.task.task_id, cand.candidate_id): cand.ground_truth
        for rec in records
        for cand in rec.candidates
    }
    try:
        assessments = assess_many(
            records, config, gateway, executor, run_seed=config.base_seed + run_index
        )
    finally:
        close = getattr(executor, "close", None)
        if close:
            close()
    entries = []
    for assessment in assessments:
        key = (assessment.task_id, assessment.candidate_id)
        if assessment.error:
            errors.append(
                {
                    "task_id": assessment.task_id,
                    "candidate_id": assessment.candidate_id,
                    "error": assessment.error,
                }
            )
        entries.append(
            RunEntry(
                task_id=assessment.task_id,
                candidate_id=assessment.candidate_id,
                predicted=assessment.label,
                ground_truth=truth[key] or "INCORRECT",
                tokens=assessment.tokens,
            )
        )
    return entries, errors


def _zero_shot_run(
    records: list[CorpusRecord], config: PipelineConfig, run_index: int
) -> tuple[list[RunEntry], list[dict]]:
    gateway = build_gateway(config)
    params = config.params_for("zero_shot_cot", config.base_seed + run_index)
    pairs = [(rec.task, cand) for rec in records for cand in rec.candidates]

    def one(pair: tuple[TaskSpec, Candidate]) -> RunEntry:
        task, candidate = pair
        verdict = zero_shot_cot(task, candidate, gateway, params, template_dir=config.template_dir)
        return RunEntry(
            task_id=task.task_id,
            candidate_id=candidate.candidate_id,
            predicted=verdict.label,
            ground_truth=candidate.ground_truth or "INCORRECT",
            tokens=verdict.tokens,
        )

    if config.workers <= 1 or len(pairs) <= 1:
        entries = [one(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            entries = list(pool.map(one, pairs))
    return entries, []


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    records = load_corpus(args.corpus)
    if not records:
        raise ConfigError(f"corpus {args.corpus!r} is empty")
    _require_labels(records)
    approaches = [a.strip() for a in args.approaches.split(",") if a.strip()]
    for approach in approaches:
        if approach not in APPROACHES:
            raise ConfigError(f"unknown approach {approach!r}; choose from {APPROACHES}")

    out_dir = Path(args.out_dir)
    runs_dir = out_dir / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)

    for approach in approaches:
        runner = _grounded_run if approach == APPROACH_GROUNDED else _zero_shot_run
        for run_index in range(config.reruns):
            entries, errors = runner(records, config, run_index)
            entries.sort(key=lambda e: (e.task_id, e.candidate_id))
            run = RunRecord(approach=approach, run_index=run_index, entries=entries)
            save_run_record(run, runs_dir / f"{approach}.run{run_index}.jsonl")
            if errors:
                (runs_dir / f"{approach}.run{run_index}.errors.json").write_text(
                    json.dumps(errors, indent=2, sort_keys=True) + "\n", encoding="utf-8"
                )

    runs = [load_run_record(path) for path in sorted(runs_dir.glob("*.jsonl"))]
    data = write_reports(runs, out_dir)
    print(render_text(data), end="")
    return EXIT_CORRECT


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    records = load_corpus(args.corpus)
    if not records:
        raise ConfigError(f"corpus {args.corpus!r} is empty")
    _require_labels(records)
    calibration, _ = split_calibration(records, args.fraction, args.seed)

    gateway = build_gateway(config)
    executor = build_executor(config)
    try:
        assessments = assess_many(
            calibration, config, gateway, executor, run_seed=config.base_seed
        )
    finally:
        close = getattr(executor, "close", None)
        if close:
            close()

    truth = {
        (rec.task.task_id, cand.candidate_id): cand.ground_truth
        for rec in calibration
        for cand in rec.candidates
    }
    points = [
        CalibrationPoint(
            score=a.score, ground_truth=truth[(a.task_id, a.candidate_id)] or "INCORRECT"
        )
        for a in assessments
    ]
    steps = max(1, round(1 / args.grid_step))
    grid = [round(i / steps, 6) for i in range(steps + 1)]
    chosen, rows = calibrate_threshold(points, grid)

    print(f"calibration candidates: {len(points)}")
    print(f"{'threshold':>9}  {'MCC':>8}")
    for row in rows:
        marker = "  <- chosen" if row.threshold == chosen else ""
        flag = " *" if row.degenerate else ""
        print(f"{row.threshold:>9.2f}  {row.mcc:>8.4f}{flag}{marker}")
    print(f"chosen threshold: {chosen}")
    if args.out:
        payload = {
            "chosen_threshold": chosen,
            "sweep": [
                {"threshold": r.threshold, "mcc": r.mcc, "degenerate": r.degenerate} for r in rows
            ],
        }
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_CORRECT


def cmd_import_run(args: argparse.Namespace) -> int:
    run = load_run_record(args.file)
    runs_dir = Path(args.out_dir) / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    destination = runs_dir / f"{run.approach}.run{run.run_index}.jsonl"
    save_run_record(run, destination)
    print(f"imported {len(run.entries)} entries as {destination}")
    return EXIT_CORRECT


def cmd_report(args: argparse.Namespace) -> int:
    runs_dir = Path(args.runs_dir)
    paths = sorted(runs_dir.glob("*.jsonl"))
    if not paths:
        raise ConfigError(f"no run files (*.jsonl) under {runs_dir}")
    runs = [load_run_record(path) for path in paths]
    out_dir = Path(args.out_dir) if args.out_dir else runs_dir.parent
    data = write_reports(runs, out_dir)
    print(render_text(data), end="")
    return EXIT_CORRECT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specassay",
        description=(
            "Infer whether a candidate program conforms to a natural-language "
            "specification by judging executed input/output pairs."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_assess = sub.add_parser("assess", help="assess a single candidate program")
    p_assess.add_argument("--corpus", help="corpus JSONL holding the task and candidate")
    p_assess.add_argument("--task-id")
    p_assess.add_argument("--candidate-id")
    p_assess.add_argument("--spec-file", help="plain-text specification file")
    p_assess.add_argument("--candidate-file", help="candidate source file")
    p_assess.add_argument("--input-mode", choices=("STDIN", "CALL"), default="STDIN")
    p_assess.add_argument("--entry-point")
    p_assess.add_argument("--out", help="write the machine-readable assessment record here")
    _add_config_flags(p_assess)
    p_assess.set_defaults(func=cmd_assess)

    p_eval = sub.add_parser("evaluate", help="run approaches over a labeled corpus with reruns")
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--out-dir", required=True)
    p_eval.add_argument(
        "--approaches",
        default=",".join(APPROACHES),
        help=f"comma-separated subset of {APPROACHES}",
    )
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_cal = sub.add_parser("calibrate", help="tune the threshold on a calibration split")
    p_cal.add_argument("--corpus", required=True)
    p_cal.add_argument("--fraction", type=float, required=True)
    p_cal.add_argument("--seed", type=int, default=0)
    p_cal.add_argument("--grid-step", type=float, default=0.05)
    p_cal.add_argument("--out", help="write the sweep as JSON here")
    _add_config_flags(p_cal)
    p_cal.set_defaults(func=cmd_calibrate)

    p_imp = sub.add_parser("import-run", help="import an externally produced run file")
    p_imp.add_argument("--file", required=True)
    p_imp.add_argument("--out-dir", required=True)
    p_imp.set_defaults(func=cmd_import_run)

    p_rep = sub.add_parser("report", help="aggregate run files into reports and figures")
    p_rep.add_argument("--runs-dir", required=True)
    p_rep.add_argument("--out-dir")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _OPERATIONAL_ERRORS as exc:
        print(f"specassay: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
