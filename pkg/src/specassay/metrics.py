"""Binary-classifier analytics over labeled runs.

Positive class is a CORRECT prediction on CORRECT ground truth.  Degenerate
matrices (a zero marginal) report value 0 with a flag instead of raising, so
batch evaluation never aborts.  Stability and overlap follow the multi-run
semantics: a candidate counts as consistently labeled only when every run
agrees and matches the ground truth, and as reachable when at least one run
predicted the label.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .llm import TokenUsage

PREDICTION_LABELS = ("CORRECT", "INCORRECT")


class MismatchedRunSets(ValueError):
    pass


class WrongApproachCount(ValueError):
    pass


@dataclass(frozen=True)
class RunEntry:
    task_id: str
    candidate_id: str
    predicted: str
    ground_truth: str
    tokens: TokenUsage = field(default_factory=TokenUsage)

    @property
    def key(self) -> tuple[str, str]:
        return (self.task_id, self.candidate_id)


@dataclass
class RunRecord:
    approach: str
    run_index: int
    entries: list[RunEntry]


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricValue:
    value: float
    degenerate: bool = False


@dataclass(frozen=True)
class LabelStability:
    label: str
    consistent: int
    reachable: int

    @property
    def ratio(self) -> float | None:
        if self.reachable == 0:
            return None
        return self.consistent / self.reachable


@dataclass
class StabilityReport:
    per_label: dict[str, LabelStability]


@dataclass
class OverlapReport:
    """Exclusive Venn regions over three approaches' consistently-correct sets."""

    approaches: tuple[str, str, str]
    regions: dict[frozenset[str], int]

    def region(self, *approaches: str) -> int:
        return self.regions[frozenset(approaches)]

    @property
    def union_size(self) -> int:
        return sum(self.regions.values())


def confusion(run: RunRecord) -> ConfusionMatrix:
    tp = fp = fn = tn = 0
    for entry in run.entries:
        if entry.predicted == "CORRECT":
            if entry.ground_truth == "CORRECT":
                tp += 1
            else:
                fp += 1
        else:
            if entry.ground_truth == "CORRECT":
                fn += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def mcc(m: ConfusionMatrix) -> MetricValue:
    """Matthews correlation: (tp*tn - fp*fn) / sqrt of the marginal product."""
    denominator = (m.tp + m.fp) * (m.tp + m.fn) * (m.tn + m.fp) * (m.tn + m.fn)
    if denominator == 0:
        return MetricValue(0.0, degenerate=True)
    return MetricValue((m.tp * m.tn - m.fp * m.fn) / math.sqrt(denominator))


def p4(m: ConfusionMatrix) -> MetricValue:
    """Symmetric four-cell metric: 4*tp*tn / (4*tp*tn + (tp+tn)*(fp+fn))."""
    numerator = 4 * m.tp * m.tn
    denominator = numerator + (m.tp + m.tn) * (m.fp + m.fn)
    if denominator == 0:
        return MetricValue(0.0, degenerate=True)
    return MetricValue(numerator / denominator)


def _check_same_keys(runs: list[RunRecord]) -> list[tuple[str, str]]:
    if len(runs) < 2:
        raise ValueError("stability needs at least 2 runs")
    base = [entry.key for entry in runs[0].entries]
    base_set = set(base)
    if len(base_set) != len(base):
        raise MismatchedRunSets("duplicate (task_id, candidate_id) in a run")
    for run in runs[1:]:
        if {entry.key for entry in run.entries} != base_set:
            raise MismatchedRunSets(
                f"run {run.run_index} covers a different candidate set than run {runs[0].run_index}"
            )
    return base


def stability(
    runs: list[RunRecord], *, restrict_reachable_to_truth: bool = False
) -> StabilityReport:
    """Per-label consistency across reruns of one approach.

    consistent: every run predicted the label and the ground truth matches.
    reachable: at least one run predicted the label (optionally restricted to
    candidates whose ground truth is that label).
    """
    keys = _check_same_keys(runs)
    predictions: dict[tuple[str, str], list[str]] = {key: [] for key in keys}
    truths: dict[tuple[str, str], str] = {}
    for run in runs:
        for entry in run.entries:
            predictions[entry.key].append(entry.predicted)
            truths[entry.key] = entry.ground_truth

    per_label: dict[str, LabelStability] = {}
    for label in PREDICTION_LABELS:
        consistent = sum(
            1
            for key in keys
            if truths[key] == label and all(p == label for p in predictions[key])
        )
        reachable = sum(
            1
            for key in keys
            if any(p == label for p in predictions[key])
            and (not restrict_reachable_to_truth or truths[key] == label)
        )
        per_label[label] = LabelStability(label=label, consistent=consistent, reachable=reachable)
    return StabilityReport(per_label=per_label)


def consistent_correct_sets(runs: list[RunRecord]) -> dict[str, set[tuple[str, str]]]:
    """Per label, candidates every run labeled correctly (feeds overlap)."""
    keys = _check_same_keys(runs)
    predictions: dict[tuple[str, str], list[str]] = {key: [] for key in keys}
    truths: dict[tuple[str, str], str] = {}
    for run in runs:
        for entry in run.entries:
            predictions[entry.key].append(entry.predicted)
            truths[entry.key] = entry.ground_truth
    return {
        label: {
            key
            for key in keys
            if truths[key] == label and all(p == label for p in predictions[key])
        }
        for label in PREDICTION_LABELS
    }


def overlap(consistent_sets: dict[str, set[tuple[str, str]]]) -> OverlapReport:
    """Exclusive three-way Venn region counts over per-approach sets."""
    if len(consistent_sets) != 3:
        raise WrongApproachCount(f"need exactly 3 approaches, got {len(consistent_sets)}")
    names = tuple(consistent_sets)
    regions: dict[frozenset[str], int] = {}
    union = set().union(*consistent_sets.values())
    for element in union:
        membership = frozenset(n for n in names if element in consistent_sets[n])
        regions[membership] = regions.get(membership, 0) + 1
    # Materialize every region, including empty ones, for stable reporting.
    a, b, c = names
    for subset in (
        frozenset({a}),
        frozenset({b}),
        frozenset({c}),
        frozenset({a, b}),
        frozenset({a, c}),
        frozenset({b, c}),
        frozenset({a, b, c}),
    ):
        regions.setdefault(subset, 0)
    return OverlapReport(approaches=(a, b, c), regions=regions)


def token_summary(runs: list[RunRecord]) -> dict[str, float | None]:
    """Per-approach mean tokens per candidate, in thousands; None when empty."""
    totals: dict[str, list[int]] = {}
    for run in runs:
        bucket = totals.setdefault(run.approach, [])
        bucket.extend(entry.tokens.total for entry in run.entries)
    return {
        approach: (sum(values) / len(values) / 1000.0 if values else None)
        for approach, values in totals.items()
    }


# --------------------------------------------------------------------------
# RunRecord files: one JSON object per line, self-describing, importable from
# external tools.


def save_run_record(run: RunRecord, path: str | Path) -> None:
    lines = []
    for entry in run.entries:
        lines.append(
            json.dumps(
                {
                    "approach": run.approach,
                    "run_index": run.run_index,
                    "task_id": entry.task_id,
                    "candidate_id": entry.candidate_id,
                    "predicted": entry.predicted,
                    "ground_truth": entry.ground_truth,
                    "prompt_tokens": entry.tokens.prompt_tokens,
                    "completion_tokens": entry.tokens.completion_tokens,
                },
                ensure_ascii=False,
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_run_record(path: str | Path) -> RunRecord:
    """Load one run file; every line must agree on (approach, run_index)."""
    approach: str | None = None
    run_index: int | None = None
    entries: list[RunEntry] = []
    seen: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("predicted") not in PREDICTION_LABELS:
                raise ValueError(f"{path}:{lineno}: bad predicted label {obj.get('predicted')!r}")
            if obj.get("ground_truth") not in PREDICTION_LABELS:
                raise ValueError(
                    f"{path}:{lineno}: bad ground_truth label {obj.get('ground_truth')!r}"
                )
            if approach is None:
                approach = obj["approach"]
                run_index = int(obj["run_index"])
            elif obj["approach"] != approach or int(obj["run_index"]) != run_index:
                raise ValueError(f"{path}:{lineno}: mixed (approach, run_index) in one file")
            entry = RunEntry(
                task_id=obj["task_id"],
                candidate_id=obj["candidate_id"],
                predicted=obj["predicted"],
                ground_truth=obj["ground_truth"],
                tokens=TokenUsage(
                    int(obj.get("prompt_tokens", 0)), int(obj.get("completion_tokens", 0))
                ),
            )
            if entry.key in seen:
                raise ValueError(f"{path}:{lineno}: duplicate candidate {entry.key!r}")
            seen.add(entry.key)
            entries.append(entry)
    if approach is None:
        raise ValueError(f"{path}: empty run file")
    return RunRecord(approach=approach, run_index=run_index or 0, entries=entries)
