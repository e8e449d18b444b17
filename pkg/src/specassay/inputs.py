"""Phase-1 synthesis: generate, validate, repair, and deduplicate test inputs.

Per scenario the loop spends at most repair_budget generate+repair attempts
(a parse failure counts as an attempt), keeps every input whose execution
terminates normally, and finally collapses inputs with identical line
coverage, keeping at most inputs_per_scenario of them. Scenarios that yield
no valid input are skipped; enough consecutive skips abort the candidate
early.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .config import PipelineConfig
from .corpus import Candidate, TaskSpec
from .executor import (
    MODE_CALL,
    MODE_STDIN,
    STATUS_OK,
    ExecutionRequest,
    ExecutionResult,
    Executor,
    InputPayload,
    SerializedOutput,
)
from .llm import LlmGateway, LlmParams, PromptTemplate, render
from .scenarios import CodeProperties, Scenario
from .templates import get_template


class InputParseError(Exception):
    pass


@dataclass
class TestInput:
    input_id: str
    scenario_index: int
    payload: InputPayload
    repair_count: int = 0
    validated: bool = False


@dataclass
class InputBatch:
    """Outcome of one scenario: validated inputs before and after coverage dedup."""

    scenario_index: int
    generated_total: int  # validated inputs before dedup
    reduced: list[TestInput]
    skipped: bool
    attempts: int = 0  # generate + repair calls spent on this scenario


@dataclass
class CollectedInputs:
    batches: list[InputBatch]
    early_stopped: bool
    # Validation-run outputs, reused for verification instead of re-executing.
    outputs: dict[str, SerializedOutput] = field(default_factory=dict)


_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


def parse_payload(text: str, mode: str) -> InputPayload:
    """Extract the payload from the last fenced code block of an LLM reply."""
    blocks = _FENCE_RE.findall(text)
    if not blocks:
        raise InputParseError("no fenced payload block in reply")
    body = blocks[-1]
    if mode == MODE_STDIN:
        return InputPayload(mode=MODE_STDIN, stdin_text=body.rstrip("\n"))
    try:
        args = json.loads(body)
    except json.JSONDecodeError as exc:
        raise InputParseError(f"CALL payload is not valid JSON: {exc}") from exc
    if not isinstance(args, list):
        raise InputParseError("CALL payload must be a JSON array of arguments")
    return InputPayload(mode=MODE_CALL, call_args=tuple(args))


def generate_input(
    scenario: Scenario,
    properties: CodeProperties,
    spec: TaskSpec,
    gateway: LlmGateway,
    params: LlmParams,
    *,
    candidate_id: str = "",
    template: PromptTemplate | None = None,
    template_dir: str | None = None,
) -> InputPayload:
    """One concrete input for the scenario; re-prompts once on a bad payload."""
    tmpl = template or get_template("input_gen", template_dir)
    messages = render(
        tmpl,
        {
            "spec": spec.specification,
            "scenario": scenario.as_text(),
            "properties": properties.as_text(),
        },
    )
    last_error: InputParseError | None = None
    for _ in range(2):
        response = gateway.complete(
            messages, params, stage="input_gen", task_id=spec.task_id, candidate_id=candidate_id
        )
        try:
            return parse_payload(response.text, spec.input_mode)
        except InputParseError as exc:
            last_error = exc
    raise last_error  # type: ignore[misc]


def repair_input(
    payload: InputPayload,
    error_text: str,
    scenario: Scenario,
    properties: CodeProperties,
    spec: TaskSpec,
    gateway: LlmGateway,
    params: LlmParams,
    *,
    candidate_id: str = "",
    template: PromptTemplate | None = None,
    template_dir: str | None = None,
) -> InputPayload:
    """Ask for a corrected payload given the execution error, same mode."""
    if not error_text:
        raise ValueError("error_text must be non-empty")
    tmpl = template or get_template("input_repair", template_dir)
    messages = render(
        tmpl,
        {
            "spec": spec.specification,
            "scenario": scenario.as_text(),
            "properties": properties.as_text(),
            "input": payload.as_text(),
            "error": error_text,
        },
    )
    last_error: InputParseError | None = None
    for _ in range(2):
        response = gateway.complete(
            messages, params, stage="input_repair", task_id=spec.task_id, candidate_id=candidate_id
        )
        try:
            return parse_payload(response.text, spec.input_mode)
        except InputParseError as exc:
            last_error = exc
    raise last_error  # type: ignore[misc]


def validate_input(
    payload: InputPayload,
    task: TaskSpec,
    candidate: Candidate,
    executor: Executor,
    *,
    timeout_ms: int = 10_000,
    collect_coverage: bool = False,
) -> ExecutionResult:
    """Run the payload against the candidate; valid iff the run ends with OK.

    CRASH and TIMEOUT both mark the input invalid: a hang is
    indistinguishable from a crash at this stage.
    """
    request = ExecutionRequest(
        mode=task.input_mode,
        source_code=candidate.source_code,
        entry_point=task.entry_point,
        payload=payload,
        timeout_ms=timeout_ms,
        collect_coverage=collect_coverage,
    )
    return executor.run(request)


def dedup_by_coverage(
    inputs: list[tuple[TestInput, frozenset[int]]], cap: int
) -> list[TestInput]:
    """Keep the first input of each distinct coverage set, in order, up to cap.

    Identity is exact line-set equality, which makes the operation idempotent
    and order-preserving.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    seen: set[frozenset[int]] = set()
    kept: list[TestInput] = []
    for test_input, coverage in inputs:
        if coverage in seen:
            continue
        seen.add(coverage)
        kept.append(test_input)
        if len(kept) >= cap:
            break
    return kept


def _execution_error_text(result: ExecutionResult, timeout_ms: int) -> str:
    if result.error_text:
        return result.error_text
    if result.status == "TIMEOUT":
        return f"execution timed out after {timeout_ms} ms"
    return f"execution ended with status {result.status}"


def collect_inputs(
    spec: TaskSpec,
    candidate: Candidate,
    scenarios: list[Scenario],
    properties: CodeProperties,
    config: PipelineConfig,
    gateway: LlmGateway,
    executor: Executor,
    *,
    params: LlmParams | None = None,
) -> CollectedInputs:
    """Run the generate/validate/repair loop over every scenario in order.

    Per scenario, generate+repair attempts are capped at config.repair_budget;
    after config.early_stop_after consecutive scenarios without a single valid
    input, collection aborts and the remaining scenarios stay unprocessed.
    """
    if not scenarios:
        raise ValueError("scenarios must be non-empty")
    g = config.repair_budget
    cap = config.inputs_per_scenario
    gen_params = params or config.params_for("input_gen")
    repair_params = params or config.params_for("input_repair")

    batches: list[InputBatch] = []
    outputs: dict[str, SerializedOutput] = {}
    consecutive_skipped = 0
    early_stopped = False

    for scenario in scenarios:
        attempts = 0
        valid: list[tuple[TestInput, frozenset[int]]] = []
        while attempts < g and len(valid) < cap:
            attempts += 1
            try:
                payload = generate_input(
                    scenario,
                    properties,
                    spec,
                    gateway,
                    gen_params,
                    candidate_id=candidate.candidate_id,
                    template_dir=config.template_dir,
                )
            except InputParseError:
                continue  # one budget unit spent, no payload to validate
            result = validate_input(
                payload,
                spec,
                candidate,
                executor,
                timeout_ms=config.timeout_ms,
                collect_coverage=True,
            )
            repair_count = 0
            while result.status != STATUS_OK and attempts < g:
                attempts += 1
                try:
                    payload = repair_input(
                        payload,
                        _execution_error_text(result, config.timeout_ms),
                        scenario,
                        properties,
                        spec,
                        gateway,
                        repair_params,
                        candidate_id=candidate.candidate_id,
                        template_dir=config.template_dir,
                    )
                except InputParseError:
                    continue
                repair_count += 1
                result = validate_input(
                    payload,
                    spec,
                    candidate,
                    executor,
                    timeout_ms=config.timeout_ms,
                    collect_coverage=True,
                )
            if result.status == STATUS_OK:
                test_input = TestInput(
                    input_id=f"s{scenario.index}-i{len(valid)}",
                    scenario_index=scenario.index,
                    payload=payload,
                    repair_count=repair_count,
                    validated=True,
                )
                valid.append((test_input, result.coverage or frozenset()))
                if result.output is not None:
                    outputs[test_input.input_id] = result.output

        reduced = dedup_by_coverage(valid, cap)
        skipped = not valid
        batches.append(
            InputBatch(
                scenario_index=scenario.index,
                generated_total=len(valid),
                reduced=reduced,
                skipped=skipped,
                attempts=attempts,
            )
        )
        consecutive_skipped = consecutive_skipped + 1 if skipped else 0
        if consecutive_skipped >= config.early_stop_after:
            early_stopped = True
            break

    return CollectedInputs(batches=batches, early_stopped=early_stopped, outputs=outputs)
