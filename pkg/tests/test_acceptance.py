"""Acceptance suite for the primary component.

Each test implements one acceptance criterion at its stated tolerance and
prints one [PASS] line with the measured runtime; pytest -s shows the lines.
"""

import json
import os
import random
import time
from decimal import Decimal, getcontext
from fractions import Fraction

import pytest

from pipefix import EXPECTED_GROUNDED, build_fixture
from specassay.config import PipelineConfig
from specassay.corpus import Candidate, TaskSpec
from specassay.executor import InProcessExecutor
from specassay.inputs import collect_inputs
from specassay.llm import LiveBackend, LlmGateway, MockBackend
from specassay.metrics import ConfusionMatrix, RunEntry, RunRecord, mcc, overlap, p4, stability
from specassay.scenarios import extract_code_properties, extract_scenarios
from specassay.verdicts import Verdict, assess, assess_many, decide, parse_verdict, score

getcontext().prec = 60


def _report(name: str, started: float, limit_s: float) -> None:
    elapsed = time.monotonic() - started
    print(f"[PASS] {name} ({elapsed:.2f}s)")
    assert elapsed < limit_s, f"{name} exceeded its {limit_s}s runtime budget"


def _config(**overrides):
    base = dict(backend="mock", mock_script="unused", executor="inprocess")
    base.update(overrides)
    return PipelineConfig(**base)


def test_metric_oracle_equivalence():
    started = time.monotonic()
    hand = ConfusionMatrix(tp=3, fp=1, fn=2, tn=4)
    assert abs(mcc(hand).value - 0.4082) < 5e-5
    assert abs(p4(hand).value - 0.6957) < 5e-5

    rng = random.Random(99)
    for _ in range(1000):
        tp, fp, fn, tn = (rng.randint(0, 80) for _ in range(4))
        matrix = ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)
        denominator = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        got_mcc = mcc(matrix)
        if denominator == 0:
            assert got_mcc.degenerate and got_mcc.value == 0.0
        else:
            reference = Decimal(tp * tn - fp * fn) / Decimal(denominator).sqrt()
            assert abs(got_mcc.value - float(reference)) < 1e-12
        p4_denominator = 4 * tp * tn + (tp + tn) * (fp + fn)
        got_p4 = p4(matrix)
        if p4_denominator == 0:
            assert got_p4.degenerate and got_p4.value == 0.0
        else:
            reference = Fraction(4 * tp * tn, p4_denominator)
            assert abs(got_p4.value - float(reference)) < 1e-12
    _report("metric oracle equivalence (1000 matrices, 1e-12)", started, 1.0)


def test_scoring_and_decision_laws():
    started = time.monotonic()
    rng = random.Random(17)
    for _ in range(1000):
        c, i, u = rng.randint(0, 8), rng.randint(0, 8), rng.randint(0, 4)
        verdicts = (
            [Verdict(f"c{k}", "CORRECT", "", 1) for k in range(c)]
            + [Verdict(f"i{k}", "INCORRECT", "", 1) for k in range(i)]
            + [Verdict(f"u{k}", "UNPARSEABLE", "", 2) for k in range(u)]
        )
        rng.shuffle(verdicts)
        expected = None if c + i == 0 else c / (c + i)
        assert score(verdicts) == expected

        if expected is not None:
            t1, t2 = sorted((rng.random(), rng.random()))
            high_label, _ = decide(expected, t2, False, True)
            low_label, _ = decide(expected, t1, False, True)
            if high_label == "CORRECT":
                assert low_label == "CORRECT"

    assert decide(0.8, 0.8, False, True) == ("CORRECT", "SCORE")
    assert decide(1.0, 1.0, False, True) == ("CORRECT", "SCORE")
    _report("scoring ratio + threshold monotonicity + inclusive boundary", started, 1.0)


def test_verdict_parsing_fixture():
    started = time.monotonic()
    from test_verdicts import PARSE_CASES

    assert len(PARSE_CASES) == 50
    disagreements = [
        (text, expected, parse_verdict(text))
        for text, expected in PARSE_CASES
        if parse_verdict(text) != expected
    ]
    assert not disagreements, disagreements
    _report("verdict parsing: 50-case fixture, 100% agreement", started, 1.0)


def test_pipeline_determinism_and_budget_law():
    started = time.monotonic()
    records, grounded, zero_shot = build_fixture()
    assert len(records) >= 6

    serialized: dict[int, list[str]] = {}
    for workers in (1, 4):
        per_run = []
        for _ in range(3):
            gateway = LlmGateway(MockBackend(grounded + zero_shot))
            config = _config(workers=workers)
            assessments = assess_many(records, config, gateway, InProcessExecutor())
            per_run.append([a.to_json() for a in assessments])
        assert per_run[0] == per_run[1] == per_run[2], "assessments drifted across runs"
        serialized[workers] = per_run[0]
    assert serialized[1] == serialized[4], "assessments drifted across worker counts"

    for assessment, record in zip(
        (json.loads(x) for x in serialized[1]), records, strict=True
    ):
        expected = EXPECTED_GROUNDED[record.task.task_id]
        assert assessment["label"] == expected["label"]
        assert assessment["reason"] == expected["reason"]
        assert assessment["score"] == expected["score"]
        assert assessment["skipped_scenarios"] == expected["skipped"]

    # Budget and early-stop laws over every scripted per-scenario trace.
    config = _config(workers=1)
    for record in records:
        candidate = record.candidates[0]
        gateway = LlmGateway(MockBackend(grounded))
        try:
            scenario_list = extract_scenarios(
                record.task, config.scenarios, gateway, config.params_for("scenarios"),
                candidate_id=candidate.candidate_id,
            )
            properties = extract_code_properties(
                record.task, candidate, gateway, config.params_for("properties")
            )
        except Exception:
            continue
        collected = collect_inputs(
            record.task, candidate, scenario_list, properties, config, gateway,
            InProcessExecutor(),
        )
        for batch in collected.batches:
            assert batch.attempts <= config.repair_budget, (
                f"{record.task.task_id} scenario {batch.scenario_index} overspent"
            )
            assert all(t.validated for t in batch.reduced)
        if collected.early_stopped:
            trailing = collected.batches[-config.early_stop_after:]
            assert len(trailing) == config.early_stop_after
            assert all(b.skipped for b in trailing)
            if len(collected.batches) > config.early_stop_after:
                assert not collected.batches[-config.early_stop_after - 1].skipped
    _report(
        "pipeline determinism (3 runs, workers 1 vs 4) + budget/early-stop laws",
        started,
        10.0,
    )


def test_code_blindness_of_verification_prompts():
    started = time.monotonic()
    records, grounded, zero_shot = build_fixture()
    gateway = LlmGateway(MockBackend(grounded + zero_shot), record_prompts=True)
    assess_many(records, _config(workers=1), gateway, InProcessExecutor())

    source_by_candidate = {
        (rec.task.task_id, cand.candidate_id): cand.source_code
        for rec in records
        for cand in rec.candidates
    }
    verify_prompts = [p for p in gateway.recorded_prompts() if p.stage == "verify"]
    assert verify_prompts, "scripted suite produced no verification prompts"
    for prompt in verify_prompts:
        source = source_by_candidate[(prompt.task_id, prompt.candidate_id)]
        for line in source.splitlines():
            stripped = line.strip()
            if len(stripped) >= 4:
                assert stripped not in prompt.text, (
                    f"candidate source line {stripped!r} leaked into a verification prompt"
                )
    _report(
        f"code-blindness: {len(verify_prompts)} verification prompts free of source lines",
        started,
        1.0,
    )


def test_stability_and_overlap_semantics():
    started = time.monotonic()

    def run(index, preds, truths):
        return RunRecord(
            "a",
            index,
            [
                RunEntry(task_id=t, candidate_id="c", predicted=p, ground_truth=truths[t])
                for t, p in preds
            ],
        )

    truths = {"A": "CORRECT", "B": "CORRECT", "C": "INCORRECT"}
    runs = [
        run(0, [("A", "CORRECT"), ("B", "CORRECT"), ("C", "CORRECT")], truths),
        run(1, [("A", "CORRECT"), ("B", "INCORRECT"), ("C", "CORRECT")], truths),
        run(2, [("A", "CORRECT"), ("B", "CORRECT"), ("C", "CORRECT")], truths),
    ]
    correct = stability(runs).per_label["CORRECT"]
    assert correct.consistent == 1 and correct.reachable == 3
    assert abs(correct.ratio - 1 / 3) < 1e-12

    report = overlap({"A": {"a", "b"}, "B": {"b", "c"}, "C": {"b"}})
    assert report.region("A") == 1
    assert report.region("B") == 1
    assert report.region("A", "B", "C") == 1
    assert report.union_size == 3

    rng = random.Random(5)
    universe = [f"e{i}" for i in range(15)]
    for _ in range(100):
        sets = {name: {e for e in universe if rng.random() < 0.35} for name in ("A", "B", "C")}
        result = overlap(sets)
        assert sum(result.regions.values()) == len(sets["A"] | sets["B"] | sets["C"])
    _report("stability worked example (1/3) + overlap region sums", started, 1.0)


LIVE_ENDPOINT_VAR = "SPECASSAY_LIVE_ENDPOINT"
LIVE_MODEL_VAR = "SPECASSAY_LIVE_MODEL"


@pytest.mark.skipif(
    not os.environ.get(LIVE_ENDPOINT_VAR),
    reason=f"live smoke runs only with {LIVE_ENDPOINT_VAR} set",
)
def test_live_smoke():
    started = time.monotonic()
    endpoint = os.environ[LIVE_ENDPOINT_VAR]
    model = os.environ.get(LIVE_MODEL_VAR, "")
    config = PipelineConfig(
        backend="live",
        endpoint=endpoint,
        model=model,
        executor="inprocess",
        workers=1,
        inputs_per_scenario=1,
    )
    gateway = LlmGateway(
        LiveBackend(endpoint, api_key=os.environ.get(config.api_key_env)),
        record_prompts=True,
    )
    tasks = [
        ("add", "Read two integers a and b on one line and print a + b.",
         "a, b = map(int, input().split())\nprint(a + b)\n"),
        ("upper", "Read one line and print it upper-cased.", "print(input().upper())\n"),
        ("count", "Read one line and print the number of characters in it.",
         "print(len(input()))\n"),
    ]
    for task_id, spec_text, source in tasks:
        task = TaskSpec(task_id, spec_text, "STDIN")
        candidate = Candidate("c1", task_id, source)
        assessment = assess(task, candidate, config, gateway, InProcessExecutor())
        assert assessment.label in ("CORRECT", "INCORRECT")
        assert assessment.tokens.total > 0
    stages = {entry.stage for entry in gateway.ledger()}
    assert "scenarios" in stages and "verify" in stages
    _report("live smoke: 3 tasks assessed with stage-attributed tokens", started, 600.0)
