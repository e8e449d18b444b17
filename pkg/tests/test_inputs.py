import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specassay.config import PipelineConfig
from specassay.corpus import Candidate, TaskSpec
from specassay.executor import InProcessExecutor, InputPayload
from specassay.inputs import (
    InputParseError,
    collect_inputs,
    dedup_by_coverage,
    generate_input,
    parse_payload,
    repair_input,
    validate_input,
)
from specassay.inputs import TestInput as PipelineInput  # alias dodges pytest collection
from specassay.llm import LlmGateway, LlmParams, MockBackend
from specassay.scenarios import CodeProperties, Scenario

PARAMS = LlmParams(model_name="m")
PROPERTIES = CodeProperties(input_structure="one integer per line")
SCENARIO = Scenario(index=0, description="ordinary values")

STDIN_TASK = TaskSpec("t1", "Read integers and print something.", "STDIN")
CALL_TASK = TaskSpec("t2", "Call target with arguments.", "CALL", entry_point="solve")


def _gateway(*responses):
    return LlmGateway(MockBackend([("", text) for text in responses]))


def _config(**overrides):
    base = dict(backend="mock", mock_script="unused", executor="inprocess", workers=1)
    base.update(overrides)
    return PipelineConfig(**base)


class TestParsePayload:
    def test_stdin_fenced(self):
        payload = parse_payload("Here you go:\n```\n2 1\n```", "STDIN")
        assert payload.stdin_text == "2 1"

    def test_stdin_multiline(self):
        payload = parse_payload("```\n1\n2 1\n```", "STDIN")
        assert payload.stdin_text == "1\n2 1"

    def test_call_json_array(self):
        payload = parse_payload("```json\n[54, 2]\n```", "CALL")
        assert payload.call_args == (54, 2)

    def test_last_fence_wins(self):
        payload = parse_payload("```\nold\n```\nbetter:\n```\nnew\n```", "STDIN")
        assert payload.stdin_text == "new"

    def test_no_fence(self):
        with pytest.raises(InputParseError):
            parse_payload("2 1", "STDIN")

    def test_call_not_an_array(self):
        with pytest.raises(InputParseError):
            parse_payload('```\n{"a": 1}\n```', "CALL")

    def test_call_bad_json(self):
        with pytest.raises(InputParseError):
            parse_payload("```\n[1, 2\n```", "CALL")


class TestGenerateInput:
    def test_stdin_payload(self):
        gateway = _gateway("```\n2 1\n```")
        payload = generate_input(SCENARIO, PROPERTIES, STDIN_TASK, gateway, PARAMS)
        assert payload == InputPayload(mode="STDIN", stdin_text="2 1")

    def test_call_payload(self):
        gateway = _gateway("```\n[54, 2]\n```")
        payload = generate_input(SCENARIO, PROPERTIES, CALL_TASK, gateway, PARAMS)
        assert payload.call_args == (54, 2)

    def test_unfenced_twice_raises(self):
        gateway = _gateway("2 1", "2 1 again")
        with pytest.raises(InputParseError):
            generate_input(SCENARIO, PROPERTIES, STDIN_TASK, gateway, PARAMS)
        assert len(gateway.ledger()) == 2

    def test_reprompt_recovers(self):
        gateway = _gateway("no fence", "```\n7\n```")
        payload = generate_input(SCENARIO, PROPERTIES, STDIN_TASK, gateway, PARAMS)
        assert payload.stdin_text == "7"


class TestRepairInput:
    def test_stdin_repair(self):
        gateway = _gateway("```\n2 1\n```")
        repaired = repair_input(
            InputPayload(mode="STDIN", stdin_text="2"),
            "expected 2 values, got 1",
            SCENARIO,
            PROPERTIES,
            STDIN_TASK,
            gateway,
            PARAMS,
        )
        assert repaired.stdin_text == "2 1"

    def test_call_repair(self):
        gateway = _gateway("```\n[1]\n```")
        repaired = repair_input(
            InputPayload(mode="CALL", call_args=(0,)),
            "ZeroDivisionError: division by zero",
            SCENARIO,
            PROPERTIES,
            CALL_TASK,
            gateway,
            PARAMS,
        )
        assert repaired.call_args == (1,)

    def test_error_text_required(self):
        with pytest.raises(ValueError):
            repair_input(
                InputPayload(mode="STDIN", stdin_text="2"),
                "",
                SCENARIO,
                PROPERTIES,
                STDIN_TASK,
                _gateway("```\nx\n```"),
                PARAMS,
            )

    def test_error_reaches_prompt(self):
        gateway = LlmGateway(MockBackend([("division by zero", "```\n[1]\n```")]))
        repaired = repair_input(
            InputPayload(mode="CALL", call_args=(0,)),
            "ZeroDivisionError: division by zero",
            SCENARIO,
            PROPERTIES,
            CALL_TASK,
            gateway,
            PARAMS,
        )
        assert repaired.call_args == (1,)


class TestValidateInput:
    def test_ok(self):
        result = validate_input(
            InputPayload(mode="STDIN", stdin_text="3"),
            STDIN_TASK,
            Candidate("c", "t1", "print(int(input()) * 2)\n"),
            InProcessExecutor(),
        )
        assert result.status == "OK"
        assert result.output.text == "6"

    def test_crash_is_invalid(self):
        result = validate_input(
            InputPayload(mode="STDIN", stdin_text="5"),
            STDIN_TASK,
            Candidate("c", "t1", "a = int(input())\nb = int(input())\nprint(a + b)\n"),
            InProcessExecutor(),
        )
        assert result.status == "CRASH"
        assert "EOFError" in result.error_text

    def test_recursion_crash(self):
        source = "import sys\ndef f(n):\n    return f(n + 1)\nf(int(input()))\n"
        result = validate_input(
            InputPayload(mode="STDIN", stdin_text="1"),
            STDIN_TASK,
            Candidate("c", "t1", source),
            InProcessExecutor(),
        )
        assert result.status == "CRASH"
        assert "RecursionError" in result.error_text


def _ti(i, scenario=0):
    return PipelineInput(
        input_id=f"s{scenario}-i{i}",
        scenario_index=scenario,
        payload=InputPayload(mode="STDIN", stdin_text=str(i)),
        validated=True,
    )


class TestDedupByCoverage:
    def test_identical_sets_collapse(self):
        inputs = [(_ti(i), frozenset({1, 2})) for i in range(3)]
        kept = dedup_by_coverage(inputs, cap=3)
        assert [t.input_id for t in kept] == ["s0-i0"]

    def test_cap_with_distinct_sets(self):
        inputs = [
            (_ti(0), frozenset({1})),
            (_ti(1), frozenset({2})),
            (_ti(2), frozenset({3})),
            (_ti(3), frozenset({2})),
            (_ti(4), frozenset({4})),
        ]
        kept = dedup_by_coverage(inputs, cap=3)
        assert [t.input_id for t in kept] == ["s0-i0", "s0-i1", "s0-i2"]

    def test_empty(self):
        assert dedup_by_coverage([], cap=3) == []

    @given(
        st.lists(st.frozensets(st.integers(1, 6), max_size=4), max_size=12),
        st.integers(min_value=1, max_value=5),
    )
    @settings(max_examples=80, deadline=None)
    def test_idempotent_and_order_preserving(self, coverages, cap):
        inputs = [(_ti(i), cov) for i, cov in enumerate(coverages)]
        once = dedup_by_coverage(inputs, cap)
        cov_by_id = {t.input_id: coverages[i] for i, (t, _) in enumerate(inputs)}
        twice = dedup_by_coverage([(t, cov_by_id[t.input_id]) for t in once], cap)
        assert [t.input_id for t in twice] == [t.input_id for t in once]
        ids = [t.input_id for t in once]
        assert ids == sorted(ids, key=lambda x: int(x.split("-i")[1]))
        distinct = len(set(coverages))
        assert len(once) == min(cap, distinct)


DOUBLER_SRC = "print(int(input()) * 2)\n"
TWO_LINE_SUM_SRC = "a = int(input())\nb = int(input())\nprint(a + b)\n"
CRASHER_SRC = "raise RuntimeError('boom')\n"


def _scenarios(n):
    return [Scenario(index=i, description=f"case {i}") for i in range(n)]


def _fenced(text):
    return f"```\n{text}\n```"


class TestCollectInputs:
    def test_happy_path(self):
        gateway = _gateway(*[_fenced(str(v)) for v in (1, 2, 3, 4, 5, 6, 7, 8, 9)])
        collected = collect_inputs(
            STDIN_TASK,
            Candidate("c", "t1", DOUBLER_SRC),
            _scenarios(3),
            PROPERTIES,
            _config(),
            gateway,
            InProcessExecutor(),
        )
        assert not collected.early_stopped
        assert len(collected.batches) == 3
        for batch in collected.batches:
            assert batch.generated_total == 3
            assert not batch.skipped
            assert batch.attempts == 3
            # Straight-line program: identical coverage, one survivor.
            assert len(batch.reduced) == 1
            assert all(t.validated for t in batch.reduced)
        assert set(collected.outputs) >= {t.input_id for b in collected.batches for t in b.reduced}

    def test_repair_then_pass(self):
        gateway = _gateway(_fenced("5"), _fenced("5\n7"), _fenced("1\n2"))
        collected = collect_inputs(
            STDIN_TASK,
            Candidate("c", "t1", TWO_LINE_SUM_SRC),
            _scenarios(1),
            PROPERTIES,
            _config(),
            gateway,
            InProcessExecutor(),
        )
        batch = collected.batches[0]
        assert batch.generated_total == 2
        assert batch.attempts == 3
        assert len(batch.reduced) == 1
        survivor = batch.reduced[0]
        assert survivor.payload.stdin_text == "5\n7"
        assert survivor.repair_count == 1
        assert collected.outputs[survivor.input_id].text == "12"

    def test_early_stop(self):
        gateway = _gateway(*[_fenced(str(v)) for v in range(1, 7)])
        collected = collect_inputs(
            STDIN_TASK,
            Candidate("c", "t1", CRASHER_SRC),
            _scenarios(3),
            PROPERTIES,
            _config(),
            gateway,
            InProcessExecutor(),
        )
        assert collected.early_stopped
        assert len(collected.batches) == 2  # third scenario unprocessed
        assert all(b.skipped and b.attempts == 3 for b in collected.batches)

    def test_parse_failure_consumes_budget(self):
        # Three replies with no fence: the scenario burns its budget and skips
        # without any repair prompt (there is no payload to repair).
        gateway = _gateway("junk", "junk", "junk", "junk", "junk", "junk")
        collected = collect_inputs(
            STDIN_TASK,
            Candidate("c", "t1", DOUBLER_SRC),
            _scenarios(1),
            PROPERTIES,
            _config(),
            gateway,
            InProcessExecutor(),
        )
        batch = collected.batches[0]
        assert batch.skipped and batch.attempts == 3
        # generate_input re-prompts once internally, so 3 attempts = 6 calls.
        assert len(gateway.ledger()) == 6

    def test_budget_law_over_traces(self):
        # Mixed behaviors; every scenario trace must respect the attempt cap.
        gateway = _gateway(*[_fenced("5"), _fenced("5\n7"), _fenced("9\n9")])
        collected = collect_inputs(
            STDIN_TASK,
            Candidate("c", "t1", TWO_LINE_SUM_SRC),
            _scenarios(1),
            PROPERTIES,
            _config(repair_budget=3),
            gateway,
            InProcessExecutor(),
        )
        for batch in collected.batches:
            assert batch.attempts <= 3
        gen_calls = sum(1 for e in gateway.ledger() if e.stage == "input_gen")
        repair_calls = sum(1 for e in gateway.ledger() if e.stage == "input_repair")
        assert gen_calls + repair_calls == collected.batches[0].attempts

    def test_empty_scenarios_rejected(self):
        with pytest.raises(ValueError):
            collect_inputs(
                STDIN_TASK,
                Candidate("c", "t1", DOUBLER_SRC),
                [],
                PROPERTIES,
                _config(),
                _gateway(),
                InProcessExecutor(),
            )
