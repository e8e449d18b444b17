"""Phase-2 judgment: per-input triplet verdicts, score aggregation, threshold decision.

The triplet prompt carries the specification, the input, and the observed
output and never the candidate source; the judged score is the fraction of
CORRECT verdicts among the parseable ones, compared against the threshold
(boundary inclusive).  The single-call zero-shot baseline lives here too.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .config import PipelineConfig
from .corpus import Candidate, CorpusRecord, TaskSpec
from .executor import Executor, InputPayload, SerializedOutput
from .inputs import collect_inputs
from .llm import LlmGateway, LlmParams, TokenUsage, render
from .metrics import ConfusionMatrix, mcc
from .scenarios import (
    PropertiesParseError,
    ScenarioParseError,
    extract_code_properties,
    extract_scenarios,
)
from .templates import get_template

LABEL_CORRECT = "CORRECT"
LABEL_INCORRECT = "INCORRECT"
LABEL_UNPARSEABLE = "UNPARSEABLE"

REASON_SCORE = "SCORE"
REASON_EARLY_STOP = "EARLY_STOP"
REASON_NO_VALID_INPUTS = "NO_VALID_INPUTS"

_VERDICT_RETRIES = 1  # one retry on an unparseable reply

_TOKEN_RE = re.compile(r"\b(INCORRECT|CORRECT)\b", re.IGNORECASE)


class InvalidThreshold(ValueError):
    pass


@dataclass(frozen=True)
class Verdict:
    input_id: str
    label: str  # LABEL_CORRECT | LABEL_INCORRECT | LABEL_UNPARSEABLE
    rationale: str
    attempts: int


@dataclass
class Assessment:
    task_id: str
    candidate_id: str
    score: float | None
    threshold: float
    label: str
    reason: str  # REASON_SCORE | REASON_EARLY_STOP | REASON_NO_VALID_INPUTS
    verdicts: list[Verdict] = field(default_factory=list)
    skipped_scenarios: int = 0
    tokens: TokenUsage = field(default_factory=TokenUsage)
    error: str | None = None

    @property
    def unparseable_count(self) -> int:
        return sum(1 for v in self.verdicts if v.label == LABEL_UNPARSEABLE)

    def to_json(self) -> str:
        obj = {
            "task_id": self.task_id,
            "candidate_id": self.candidate_id,
            "label": self.label,
            "reason": self.reason,
            "score": self.score,
            "threshold": self.threshold,
            "skipped_scenarios": self.skipped_scenarios,
            "unparseable_verdicts": self.unparseable_count,
            "verdicts": [
                {
                    "input_id": v.input_id,
                    "label": v.label,
                    "attempts": v.attempts,
                    "rationale": v.rationale,
                }
                for v in self.verdicts
            ],
            "tokens": {
                "prompt_tokens": self.tokens.prompt_tokens,
                "completion_tokens": self.tokens.completion_tokens,
            },
            "error": self.error,
        }
        return json.dumps(obj, ensure_ascii=False, sort_keys=True)


@dataclass(frozen=True)
class BaselineVerdict:
    label: str
    unparseable: bool
    tokens: TokenUsage


def parse_verdict(text: str) -> str:
    """Label of the last standalone CORRECT/INCORRECT token, word-bounded.

    Word boundaries keep the CORRECT inside INCORRECT from matching; no token
    at all yields UNPARSEABLE.
    """
    matches = _TOKEN_RE.findall(text)
    if not matches:
        return LABEL_UNPARSEABLE
    return matches[-1].upper()


def score(verdicts: list[Verdict]) -> float | None:
    """Fraction of CORRECT among binary verdicts; None when none are binary."""
    correct = sum(1 for v in verdicts if v.label == LABEL_CORRECT)
    incorrect = sum(1 for v in verdicts if v.label == LABEL_INCORRECT)
    if correct + incorrect == 0:
        return None
    return correct / (correct + incorrect)


def decide(
    score_value: float | None,
    threshold: float,
    early_stopped: bool,
    had_valid_inputs: bool,
) -> tuple[str, str]:
    """Map (score, threshold, abort flags) to the final label and its reason."""
    if not 0 <= threshold <= 1:
        raise InvalidThreshold(f"threshold must be in [0, 1], got {threshold}")
    if early_stopped:
        return LABEL_INCORRECT, REASON_EARLY_STOP
    if not had_valid_inputs or score_value is None:
        return LABEL_INCORRECT, REASON_NO_VALID_INPUTS
    label = LABEL_CORRECT if score_value >= threshold else LABEL_INCORRECT
    return label, REASON_SCORE


def verify_triplet(
    spec: TaskSpec,
    payload: InputPayload,
    output: SerializedOutput,
    gateway: LlmGateway,
    params: LlmParams,
    *,
    candidate_id: str = "",
    input_id: str = "",
    template_dir: str | None = None,
) -> Verdict:
    """Judge one (input, output, specification) triplet without the code.

    The template has no code placeholder, so candidate source cannot reach
    the prompt by construction; rendering would fail if one were added.
    """
    tmpl = get_template("verify_triplet", template_dir)
    messages = render(
        tmpl,
        {
            "spec": spec.specification,
            "input": payload.as_text(),
            "output": output.text,
        },
    )
    attempts = 0
    rationale = ""
    for _ in range(_VERDICT_RETRIES + 1):
        attempts += 1
        response = gateway.complete(
            messages, params, stage="verify", task_id=spec.task_id, candidate_id=candidate_id
        )
        rationale = response.text
        label = parse_verdict(rationale)
        if label != LABEL_UNPARSEABLE:
            return Verdict(input_id=input_id, label=label, rationale=rationale, attempts=attempts)
    return Verdict(
        input_id=input_id, label=LABEL_UNPARSEABLE, rationale=rationale, attempts=attempts
    )


def zero_shot_cot(
    spec: TaskSpec,
    candidate: Candidate,
    gateway: LlmGateway,
    params: LlmParams,
    *,
    template_dir: str | None = None,
) -> BaselineVerdict:
    """One-call baseline: specification plus code, reason first, verdict last.

    An unparseable reply after one retry defaults to INCORRECT and is flagged.
    """
    tmpl = get_template("zero_shot_cot", template_dir)
    messages = render(tmpl, {"spec": spec.specification, "code": candidate.source_code})
    tokens = TokenUsage()
    for _ in range(_VERDICT_RETRIES + 1):
        response = gateway.complete(
            messages,
            params,
            stage="zero_shot_cot",
            task_id=spec.task_id,
            candidate_id=candidate.candidate_id,
        )
        tokens = tokens + response.usage
        label = parse_verdict(response.text)
        if label != LABEL_UNPARSEABLE:
            return BaselineVerdict(label=label, unparseable=False, tokens=tokens)
    return BaselineVerdict(label=LABEL_INCORRECT, unparseable=True, tokens=tokens)


def assess(
    spec: TaskSpec,
    candidate: Candidate,
    config: PipelineConfig,
    gateway: LlmGateway,
    executor: Executor,
    *,
    run_seed: int | None = None,
) -> Assessment:
    """Full pipeline for one candidate: scenarios, inputs, execution, verdicts.

    Stage parse failures never raise: they yield an INCORRECT assessment with
    reason NO_VALID_INPUTS and the error attached.
    """
    task_id, candidate_id = spec.task_id, candidate.candidate_id

    def finish(
        label: str,
        reason: str,
        score_value: float | None = None,
        verdicts: list[Verdict] | None = None,
        skipped: int = 0,
        error: str | None = None,
    ) -> Assessment:
        return Assessment(
            task_id=task_id,
            candidate_id=candidate_id,
            score=score_value,
            threshold=config.threshold,
            label=label,
            reason=reason,
            verdicts=verdicts or [],
            skipped_scenarios=skipped,
            tokens=gateway.usage_for(task_id, candidate_id),
            error=error,
        )

    try:
        scenario_list = extract_scenarios(
            spec,
            config.scenarios,
            gateway,
            config.params_for("scenarios", run_seed),
            candidate_id=candidate_id,
            template_dir=config.template_dir,
        )
        properties = extract_code_properties(
            spec,
            candidate,
            gateway,
            config.params_for("properties", run_seed),
            template_dir=config.template_dir,
        )
    except (ScenarioParseError, PropertiesParseError) as exc:
        return finish(LABEL_INCORRECT, REASON_NO_VALID_INPUTS, error=str(exc))

    collected = collect_inputs(
        spec,
        candidate,
        scenario_list,
        properties,
        config,
        gateway,
        executor,
        params=config.params_for("input_gen", run_seed),
    )
    skipped = sum(1 for batch in collected.batches if batch.skipped)
    if collected.early_stopped:
        return finish(LABEL_INCORRECT, REASON_EARLY_STOP, skipped=skipped)

    verdicts: list[Verdict] = []
    verify_params = config.params_for("verify", run_seed)
    for batch in collected.batches:
        for test_input in batch.reduced:
            output = collected.outputs[test_input.input_id]
            verdicts.append(
                verify_triplet(
                    spec,
                    test_input.payload,
                    output,
                    gateway,
                    verify_params,
                    candidate_id=candidate_id,
                    input_id=test_input.input_id,
                    template_dir=config.template_dir,
                )
            )

    had_valid = any(batch.reduced for batch in collected.batches)
    score_value = score(verdicts)
    label, reason = decide(score_value, config.threshold, False, had_valid)
    return finish(
        label,
        reason,
        score_value=score_value if reason == REASON_SCORE else None,
        verdicts=verdicts,
        skipped=skipped,
    )


def assess_many(
    records: list[CorpusRecord],
    config: PipelineConfig,
    gateway: LlmGateway,
    executor: Executor,
    *,
    run_seed: int | None = None,
) -> list[Assessment]:
    """Assess every candidate of every record, corpus order, bounded workers."""
    pairs = [(rec.task, cand) for rec in records for cand in rec.candidates]

    def one(pair: tuple[TaskSpec, Candidate]) -> Assessment:
        task, cand = pair
        return assess(task, cand, config, gateway, executor, run_seed=run_seed)

    if config.workers <= 1 or len(pairs) <= 1:
        return [one(p) for p in pairs]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(one, pairs))


@dataclass(frozen=True)
class CalibrationPoint:
    """Retained assess outcome for threshold sweeps: the score (None when the
    pipeline aborted) and the ground-truth label."""

    score: float | None
    ground_truth: str


@dataclass(frozen=True)
class CalibrationRow:
    threshold: float
    mcc: float
    degenerate: bool


def calibrate_threshold(
    points: list[CalibrationPoint], grid: list[float] | None = None
) -> tuple[float, list[CalibrationRow]]:
    """Sweep thresholds and pick the MCC argmax, ties toward the higher one."""
    if grid is None:
        grid = [round(0.05 * i, 2) for i in range(21)]
    if not points:
        raise ValueError("points must be non-empty")
    rows: list[CalibrationRow] = []
    for tau in grid:
        if not 0 <= tau <= 1:
            raise InvalidThreshold(f"grid threshold {tau} outside [0, 1]")
        tp = fp = fn = tn = 0
        for point in points:
            predicted = (
                LABEL_CORRECT
                if point.score is not None and point.score >= tau
                else LABEL_INCORRECT
            )
            if predicted == LABEL_CORRECT and point.ground_truth == LABEL_CORRECT:
                tp += 1
            elif predicted == LABEL_CORRECT:
                fp += 1
            elif point.ground_truth == LABEL_CORRECT:
                fn += 1
            else:
                tn += 1
        value = mcc(ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn))
        rows.append(CalibrationRow(threshold=tau, mcc=value.value, degenerate=value.degenerate))
    best = max(rows, key=lambda row: (row.mcc, row.threshold))
    return best.threshold, rows
