"""Phase-1 extraction: behavior scenarios and execution-relevant code properties.

Both operations ask the LLM once, re-prompt once if the reply cannot be
parsed, and then fail hard; parsing itself is pure so a fixed reply always
yields the same structures.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .corpus import Candidate, TaskSpec
from .llm import LlmGateway, LlmParams, PromptTemplate, render
from .templates import get_template


class ScenarioParseError(Exception):
    pass


class PropertiesParseError(Exception):
    pass


@dataclass(frozen=True)
class Scenario:
    index: int
    description: str
    preconditions: tuple[str, ...] = ()

    def as_text(self) -> str:
        """Rendering used inside downstream prompts."""
        if not self.preconditions:
            return self.description
        lines = [self.description, "Preconditions:"]
        lines.extend(f"- {p}" for p in self.preconditions)
        return "\n".join(lines)


@dataclass(frozen=True)
class CodeProperties:
    input_structure: str
    exception_handling: tuple[str, ...] = ()
    mockable_dependencies: tuple[str, ...] = ()
    temporary_resources: tuple[str, ...] = ()

    def as_text(self) -> str:
        def section(title: str, items: tuple[str, ...]) -> str:
            body = "\n".join(f"- {item}" for item in items) if items else "- none"
            return f"{title}:\n{body}"

        return "\n".join(
            [
                f"Input structure: {self.input_structure}",
                section("Exception handling", self.exception_handling),
                section("Mockable dependencies", self.mockable_dependencies),
                section("Temporary resources", self.temporary_resources),
            ]
        )


_NUMBERED_RE = re.compile(r"^\s*\d+\s*[.)]\s+")
_SCENARIO_RE = re.compile(r"^\s*scenario\b[^:]*:\s*", re.IGNORECASE)
_BULLET_RE = re.compile(r"^\s*[-*]\s+")
_PRECONDITION_RE = re.compile(r"^\s*(?:[-*]\s*)?preconditions?\s*:\s*(.*)$", re.IGNORECASE)


def _split_blocks(text: str, marker: re.Pattern) -> list[str]:
    blocks: list[str] = []
    current: list[str] | None = None
    for line in text.splitlines():
        if marker.match(line):
            if current is not None:
                blocks.append("\n".join(current))
            current = [marker.sub("", line, count=1)]
        elif current is not None:
            current.append(line)
    if current is not None:
        blocks.append("\n".join(current))
    return blocks


def _parse_block(block: str) -> tuple[str, tuple[str, ...]]:
    description_lines: list[str] = []
    preconditions: list[str] = []
    in_preconditions = False
    for line in block.splitlines():
        match = _PRECONDITION_RE.match(line)
        if match:
            in_preconditions = True
            inline = match.group(1).strip()
            if inline:
                preconditions.append(inline)
            continue
        if in_preconditions:
            item = line.strip().lstrip("-*").strip()
            if item:
                preconditions.append(item)
        elif line.strip():
            description_lines.append(line.strip())
    return " ".join(description_lines), tuple(preconditions)


def parse_scenarios(text: str) -> list[Scenario]:
    """Tolerant list parser: numbered items, "Scenario:" blocks, or bullets.

    Returns scenarios indexed in order of appearance; an unparseable reply
    yields an empty list (the caller decides whether to re-prompt).
    """
    for marker in (_NUMBERED_RE, _SCENARIO_RE, _BULLET_RE):
        blocks = _split_blocks(text, marker)
        parsed = []
        for block in blocks:
            description, preconditions = _parse_block(block)
            if description:
                parsed.append((description, preconditions))
        if parsed:
            return [
                Scenario(index=i, description=d, preconditions=p)
                for i, (d, p) in enumerate(parsed)
            ]
    return []


def extract_scenarios(
    spec: TaskSpec,
    s: int,
    gateway: LlmGateway,
    params: LlmParams,
    *,
    candidate_id: str = "",
    template: PromptTemplate | None = None,
    template_dir: str | None = None,
) -> list[Scenario]:
    """Ask for behavior scenarios and keep at most the first s of them."""
    if s < 1:
        raise ValueError("s must be >= 1")
    tmpl = template or get_template("scenarios", template_dir)
    messages = render(tmpl, {"spec": spec.specification})
    for _ in range(2):  # one re-prompt on parse failure
        response = gateway.complete(
            messages, params, stage="scenarios", task_id=spec.task_id, candidate_id=candidate_id
        )
        scenarios = parse_scenarios(response.text)
        if scenarios:
            truncated = scenarios[:s]
            return [replace(sc, index=i) for i, sc in enumerate(truncated)]
    raise ScenarioParseError(f"no parseable scenarios for task {spec.task_id!r} after re-prompt")


_PROPERTY_HEADER_RE = re.compile(
    r"^\s*(?:[#*-]+\s*)?(input structure|exception handling|mockable dependencies|temporary resources)"
    r"\s*:\s*(.*)$",
    re.IGNORECASE,
)

_PROPERTY_FIELDS = {
    "input structure": "input_structure",
    "exception handling": "exception_handling",
    "mockable dependencies": "mockable_dependencies",
    "temporary resources": "temporary_resources",
}


def _clean_items(lines: list[str]) -> tuple[str, ...]:
    items = []
    for line in lines:
        item = line.strip().lstrip("-*").strip()
        if item and item.lower() not in ("none", "none."):
            items.append(item)
    return tuple(items)


def parse_code_properties(text: str) -> CodeProperties | None:
    """Parse the four labeled sections; None when input structure is missing."""
    sections: dict[str, list[str]] = {name: [] for name in _PROPERTY_FIELDS.values()}
    current: str | None = None
    for line in text.splitlines():
        match = _PROPERTY_HEADER_RE.match(line)
        if match:
            current = _PROPERTY_FIELDS[match.group(1).lower()]
            inline = match.group(2).strip()
            if inline:
                sections[current].append(inline)
            continue
        if current is not None and line.strip():
            sections[current].append(line)
    input_structure = " ".join(part.strip() for part in sections["input_structure"]).strip()
    if not input_structure:
        return None
    return CodeProperties(
        input_structure=input_structure,
        exception_handling=_clean_items(sections["exception_handling"]),
        mockable_dependencies=_clean_items(sections["mockable_dependencies"]),
        temporary_resources=_clean_items(sections["temporary_resources"]),
    )


def extract_code_properties(
    spec: TaskSpec,
    candidate: Candidate,
    gateway: LlmGateway,
    params: LlmParams,
    *,
    template: PromptTemplate | None = None,
    template_dir: str | None = None,
) -> CodeProperties:
    """Extract input structure plus handled exceptions, mocks, and resources."""
    tmpl = template or get_template("properties", template_dir)
    messages = render(tmpl, {"spec": spec.specification, "code": candidate.source_code})
    for _ in range(2):
        response = gateway.complete(
            messages,
            params,
            stage="properties",
            task_id=spec.task_id,
            candidate_id=candidate.candidate_id,
        )
        properties = parse_code_properties(response.text)
        if properties is not None:
            return properties
    raise PropertiesParseError(
        f"no parseable code properties for candidate {candidate.candidate_id!r} after re-prompt"
    )
