"""Task/candidate corpus: JSONL loading, validation, and calibration splits.

One JSON object per line with fields {task_id, specification, input_mode,
entry_point?, candidate_id, source_code, ground_truth?, source_dataset?}.
Lines sharing a task_id are grouped into one record and must agree on the
task-level fields.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path

INPUT_MODES = ("STDIN", "CALL")
GROUND_TRUTH_LABELS = ("CORRECT", "INCORRECT")

_REQUIRED_FIELDS = ("task_id", "specification", "input_mode", "candidate_id", "source_code")


class FormatError(ValueError):
    """Malformed corpus record; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class InvalidFraction(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    """A natural-language problem description plus how candidates consume input."""

    task_id: str
    specification: str
    input_mode: str  # "STDIN" | "CALL"
    entry_point: str | None = None
    source_dataset: str | None = None


@dataclass(frozen=True)
class Candidate:
    """One program of unknown correctness attached to a task."""

    candidate_id: str
    task_id: str
    source_code: str
    ground_truth: str | None = None  # "CORRECT" | "INCORRECT" in labeled corpora


@dataclass
class CorpusRecord:
    task: TaskSpec
    candidates: list[Candidate]


def _parse_line(lineno: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(lineno, f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise FormatError(lineno, "record is not an object")
    for name in _REQUIRED_FIELDS:
        if name not in obj or not isinstance(obj[name], str):
            raise FormatError(lineno, f"missing or non-string field {name!r}")
    if not obj["specification"].strip():
        raise FormatError(lineno, "specification is empty")
    if not obj["source_code"]:
        raise FormatError(lineno, "source_code is empty")
    if obj["input_mode"] not in INPUT_MODES:
        raise FormatError(lineno, f"input_mode must be one of {INPUT_MODES}, got {obj['input_mode']!r}")
    entry_point = obj.get("entry_point")
    if obj["input_mode"] == "CALL" and not (entry_point and str(entry_point).strip()):
        raise FormatError(lineno, f"CALL task {obj['task_id']!r} has no entry_point")
    ground_truth = obj.get("ground_truth")
    if ground_truth is not None and ground_truth not in GROUND_TRUTH_LABELS:
        raise FormatError(lineno, f"ground_truth must be one of {GROUND_TRUTH_LABELS}, got {ground_truth!r}")
    return obj


def load_corpus(path: str | Path) -> list[CorpusRecord]:
    """Load a JSONL corpus, grouping candidates under their task in file order.

    Raises FormatError (with line number) on malformed records, task-field
    disagreements between lines sharing a task_id, or duplicate
    (task_id, candidate_id) pairs.  Unreadable paths raise OSError.
    """
    records: dict[str, CorpusRecord] = {}
    seen_candidates: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            obj = _parse_line(lineno, line)
            task = TaskSpec(
                task_id=obj["task_id"],
                specification=obj["specification"],
                input_mode=obj["input_mode"],
                entry_point=obj.get("entry_point"),
                source_dataset=obj.get("source_dataset"),
            )
            candidate = Candidate(
                candidate_id=obj["candidate_id"],
                task_id=obj["task_id"],
                source_code=obj["source_code"],
                ground_truth=obj.get("ground_truth"),
            )
            key = (candidate.task_id, candidate.candidate_id)
            if key in seen_candidates:
                raise FormatError(lineno, f"duplicate candidate {key!r}")
            seen_candidates.add(key)
            existing = records.get(task.task_id)
            if existing is None:
                records[task.task_id] = CorpusRecord(task=task, candidates=[candidate])
            else:
                if existing.task != task:
                    raise FormatError(
                        lineno,
                        f"task {task.task_id!r} disagrees with an earlier line on "
                        "specification/input_mode/entry_point/source_dataset",
                    )
                existing.candidates.append(candidate)
    return list(records.values())


def dump_corpus(records: list[CorpusRecord]) -> str:
    """Serialize records back to the JSONL corpus format (round-trip safe)."""
    lines = []
    for record in records:
        for candidate in record.candidates:
            obj = {
                "task_id": record.task.task_id,
                "specification": record.task.specification,
                "input_mode": record.task.input_mode,
                "candidate_id": candidate.candidate_id,
                "source_code": candidate.source_code,
            }
            if record.task.entry_point is not None:
                obj["entry_point"] = record.task.entry_point
            if record.task.source_dataset is not None:
                obj["source_dataset"] = record.task.source_dataset
            if candidate.ground_truth is not None:
                obj["ground_truth"] = candidate.ground_truth
            lines.append(json.dumps(obj, ensure_ascii=False, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def save_corpus(records: list[CorpusRecord], path: str | Path) -> None:
    Path(path).write_text(dump_corpus(records), encoding="utf-8")


def split_calibration(
    records: list[CorpusRecord], fraction: float, seed: int
) -> tuple[list[CorpusRecord], list[CorpusRecord]]:
    """Deterministically split records into (calibration, evaluation).

    Calibration size is round(fraction * len(records)), at least 1; the two
    sides are disjoint, exhaustive, and keep the original corpus order.
    """
    if not 0 < fraction < 1:
        raise InvalidFraction(f"fraction must be in (0, 1), got {fraction}")
    if not records:
        raise ValueError("records must be non-empty")
    indices = list(range(len(records)))
    random.Random(seed).shuffle(indices)
    n_cal = max(1, round(fraction * len(records)))
    chosen = set(indices[:n_cal])
    calibration = [rec for i, rec in enumerate(records) if i in chosen]
    evaluation = [rec for i, rec in enumerate(records) if i not in chosen]
    return calibration, evaluation


def strip_ground_truth(record: CorpusRecord) -> CorpusRecord:
    """Copy of a record with candidate labels removed (assessment-flow view)."""
    return CorpusRecord(
        task=record.task,
        candidates=[replace(c, ground_truth=None) for c in record.candidates],
    )
