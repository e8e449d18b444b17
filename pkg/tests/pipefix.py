"""Scripted pipeline fixtures: a six-task synthetic corpus plus the mock
script that drives it end to end.

Matchers exploit two facts: every grounded-stage prompt embeds the
specification under a "Task description:" header while the zero-shot prompt
uses "Specification:", and calls for one candidate are strictly sequential,
so per-task entries are consumed in scripted order even under worker
parallelism.
"""

from __future__ import annotations

import json
from pathlib import Path

from specassay.corpus import Candidate, CorpusRecord, TaskSpec

GROUNDED_MATCH = "Task description:\nTask {tid}:"
ZERO_SHOT_MATCH = "Specification:\nTask {tid}:"

CLASSIFY_SIGN_SRC = (
    "n = int(input())\n"
    "if n == 0:\n"
    "    print('zero')\n"
    "elif n > 0:\n"
    "    print('positive')\n"
    "else:\n"
    "    print('negative')\n"
)

SUM_TWO_LINES_SRC = "a = int(input())\nb = int(input())\nprint(a + b)\n"

ALWAYS_RAISE_SRC = "raise RuntimeError('boom')\n"
ALWAYS_VALUEERROR_SRC = "raise ValueError('nope')\n"

PARITY_SRC = (
    "n = int(input())\n"
    "if n % 2 == 0:\n"
    "    print('even')\n"
    "else:\n"
    "    print('odd')\n"
)

LETTERS_SRC = (
    "n = int(input())\n"
    "if n == 0:\n"
    "    print('A')\n"
    "elif n == 1:\n"
    "    print('B')\n"
    "elif n == 2:\n"
    "    print('C')\n"
    "elif n == 3:\n"
    "    print('D')\n"
    "else:\n"
    "    print('E')\n"
)


def fenced(text: str) -> str:
    return f"Here is the input:\n```\n{text}\n```"


def scenario_reply(items: list[tuple[str, list[str]]]) -> str:
    lines = []
    for i, (description, preconditions) in enumerate(items, start=1):
        lines.append(f"{i}. {description}")
        lines.append("Preconditions:")
        lines.extend(f"- {p}" for p in preconditions)
    return "\n".join(lines)


def properties_reply(input_structure: str) -> str:
    return (
        f"Input structure: {input_structure}\n"
        "Exception handling:\n- none\n"
        "Mockable dependencies:\n- none\n"
        "Temporary resources:\n- none"
    )


def verdict_reply(label: str, reasoning: str = "Comparing with the task description.") -> str:
    return f"{reasoning}\n{label}"


def _task(tid: str, spec_body: str) -> TaskSpec:
    return TaskSpec(
        task_id=tid,
        specification=f"Task {tid}: {spec_body}",
        input_mode="STDIN",
    )


def _entries(tid: str, responses: list[str]) -> list[tuple[str, str]]:
    match = GROUNDED_MATCH.format(tid=tid)
    return [(match, response) for response in responses]


def build_fixture() -> tuple[list[CorpusRecord], list[tuple[str, str]], list[tuple[str, str]]]:
    """Returns (corpus records, grounded script entries, zero-shot entries)."""
    records: list[CorpusRecord] = []
    grounded: list[tuple[str, str]] = []

    # t-happy: three scenarios, inputs valid first try, dedup collapses each
    # scenario to one input, verdicts all CORRECT -> score 1.0.
    task = _task(
        "t-happy",
        "read one integer n from standard input and print exactly one word: "
        "positive if n > 0, negative if n < 0, zero if n == 0.",
    )
    records.append(
        CorpusRecord(task, [Candidate("c1", task.task_id, CLASSIFY_SIGN_SRC, "CORRECT")])
    )
    grounded += _entries(
        "t-happy",
        [
            scenario_reply(
                [
                    ("n is strictly positive", ["n > 0"]),
                    ("n is strictly negative", ["n < 0"]),
                    ("n is exactly zero", ["n == 0"]),
                ]
            ),
            properties_reply("a single integer on one line of standard input"),
            fenced("1"),
            fenced("2"),
            fenced("3"),
            fenced("-1"),
            fenced("-2"),
            fenced("-3"),
            fenced("0"),
            fenced("0"),
            fenced("0"),
            verdict_reply("CORRECT", "1 is positive and the program printed positive."),
            verdict_reply("CORRECT", "-1 is negative and the program printed negative."),
            verdict_reply("CORRECT", "0 maps to zero and the program printed zero."),
        ],
    )

    # t-repair: first input misses a line, the repaired one passes; the
    # deduplicated batch keeps the repaired input with repair_count = 1.
    task = _task("t-repair", "read two integers, one per line, and print their sum.")
    records.append(
        CorpusRecord(task, [Candidate("c1", task.task_id, SUM_TWO_LINES_SRC, "INCORRECT")])
    )
    grounded += _entries(
        "t-repair",
        [
            scenario_reply([("two positive integers", ["both values > 0"])]),
            properties_reply("two integers, each on its own line of standard input"),
            fenced("5"),
            fenced("5\n7"),
            fenced("1\n2"),
            verdict_reply("CORRECT", "5 plus 7 is 12 and the program printed 12."),
        ],
    )

    # t-earlystop: the candidate crashes on every input, so two consecutive
    # scenarios are skipped and the third is never processed.
    task = _task("t-earlystop", "read one integer and print its square.")
    records.append(
        CorpusRecord(task, [Candidate("c1", task.task_id, ALWAYS_RAISE_SRC, "INCORRECT")])
    )
    grounded += _entries(
        "t-earlystop",
        [
            scenario_reply(
                [
                    ("a small positive integer", ["n > 0"]),
                    ("zero", ["n == 0"]),
                    ("a negative integer", ["n < 0"]),
                ]
            ),
            properties_reply("a single integer on one line of standard input"),
            fenced("2"),
            fenced("3"),
            fenced("4"),
            fenced("0"),
            fenced("1"),
            fenced("5"),
        ],
    )

    # t-novalid: a single scenario that never yields a valid input; one skip
    # is below the early-stop threshold, so the reason is NO_VALID_INPUTS.
    task = _task("t-novalid", "read a decimal number on one line and print its double.")
    records.append(
        CorpusRecord(task, [Candidate("c1", task.task_id, ALWAYS_VALUEERROR_SRC, "CORRECT")])
    )
    grounded += _entries(
        "t-novalid",
        [
            scenario_reply([("an ordinary decimal number", ["value is finite"])]),
            properties_reply("one decimal number on one line of standard input"),
            fenced("1.5"),
            fenced("2.0"),
            fenced("3.25"),
        ],
    )

    # t-unparse: one verdict stays unparseable after the retry and is excluded
    # from the score, which stays 1.0 over the remaining verdict.
    task = _task(
        "t-unparse",
        "read one integer and print the word even if it is even, odd otherwise.",
    )
    records.append(CorpusRecord(task, [Candidate("c1", task.task_id, PARITY_SRC, "CORRECT")]))
    grounded += _entries(
        "t-unparse",
        [
            scenario_reply(
                [
                    ("an even integer", ["n % 2 == 0"]),
                    ("an odd integer", ["n % 2 == 1"]),
                ]
            ),
            properties_reply("a single integer on one line of standard input"),
            fenced("2"),
            fenced("4"),
            fenced("6"),
            fenced("1"),
            fenced("3"),
            fenced("5"),
            "The behaviour seems plausible either way.",
            "Still cannot commit to a judgment here.",
            verdict_reply("CORRECT", "1 is odd and the program printed odd."),
        ],
    )

    # t-boundary: five deduplicated inputs across two scenarios plus one
    # skipped scenario; verdicts 4xCORRECT / 1xINCORRECT give exactly 0.8.
    task = _task(
        "t-boundary",
        "read one integer n and print A if n == 0, B if n == 1, C if n == 2, "
        "D if n == 3, and E otherwise.",
    )
    records.append(CorpusRecord(task, [Candidate("c1", task.task_id, LETTERS_SRC, "CORRECT")]))
    grounded += _entries(
        "t-boundary",
        [
            scenario_reply(
                [
                    ("n is one of the named small values", ["0 <= n <= 2"]),
                    ("n is three or larger", ["n >= 3"]),
                    ("the line is not an integer", ["input is non-numeric"]),
                ]
            ),
            properties_reply("a single integer on one line of standard input"),
            fenced("0"),
            fenced("1"),
            fenced("2"),
            fenced("3"),
            fenced("4"),
            fenced("5"),
            fenced("x"),
            fenced("y"),
            fenced("z"),
            verdict_reply("CORRECT", "0 maps to A."),
            verdict_reply("CORRECT", "1 maps to B."),
            verdict_reply("CORRECT", "2 maps to C."),
            verdict_reply("CORRECT", "3 maps to D."),
            verdict_reply("INCORRECT", "4 should map to E but I doubt the output."),
        ],
    )

    zero_shot = [
        (ZERO_SHOT_MATCH.format(tid=tid), verdict_reply(label, "Reasoning about the program."))
        for tid, label in [
            ("t-happy", "CORRECT"),
            ("t-repair", "INCORRECT"),
            ("t-earlystop", "CORRECT"),
            ("t-novalid", "INCORRECT"),
            ("t-unparse", "CORRECT"),
            ("t-boundary", "INCORRECT"),
        ]
    ]
    return records, grounded, zero_shot


EXPECTED_GROUNDED = {
    "t-happy": {"label": "CORRECT", "reason": "SCORE", "score": 1.0, "skipped": 0, "verdicts": 3},
    "t-repair": {"label": "CORRECT", "reason": "SCORE", "score": 1.0, "skipped": 0, "verdicts": 1},
    "t-earlystop": {
        "label": "INCORRECT",
        "reason": "EARLY_STOP",
        "score": None,
        "skipped": 2,
        "verdicts": 0,
    },
    "t-novalid": {
        "label": "INCORRECT",
        "reason": "NO_VALID_INPUTS",
        "score": None,
        "skipped": 1,
        "verdicts": 0,
    },
    "t-unparse": {"label": "CORRECT", "reason": "SCORE", "score": 1.0, "skipped": 0, "verdicts": 2},
    "t-boundary": {
        "label": "CORRECT",
        "reason": "SCORE",
        "score": 0.8,
        "skipped": 1,
        "verdicts": 5,
    },
}


def write_fixture_files(directory: Path) -> tuple[Path, Path]:
    """Write corpus.jsonl and mock_script.jsonl; returns their paths."""
    from specassay.corpus import save_corpus

    records, grounded, zero_shot = build_fixture()
    corpus_path = directory / "corpus.jsonl"
    save_corpus(records, corpus_path)
    script_path = directory / "mock_script.jsonl"
    with open(script_path, "w", encoding="utf-8") as fh:
        for match, response in grounded + zero_shot:
            fh.write(json.dumps({"match": match, "response": response}) + "\n")
    return corpus_path, script_path
