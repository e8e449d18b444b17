"""Access to the per-stage prompt template files.

Templates ship with the package under templates/ and can be overridden by
pointing template_dir at a directory holding files named <stage>.tmpl.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .llm import PromptTemplate, load_template, parse_template

STAGE_TEMPLATES = (
    "scenarios",
    "properties",
    "input_gen",
    "input_repair",
    "verify_triplet",
    "zero_shot_cot",
)


def get_template(name: str, template_dir: str | Path | None = None) -> PromptTemplate:
    """Load <name>.tmpl from template_dir, falling back to the packaged file."""
    if name not in STAGE_TEMPLATES:
        raise KeyError(f"unknown template {name!r}; expected one of {STAGE_TEMPLATES}")
    if template_dir is not None:
        override = Path(template_dir) / f"{name}.tmpl"
        if override.is_file():
            return load_template(override)
    raw = resources.files("specassay").joinpath("templates", f"{name}.tmpl").read_text(
        encoding="utf-8"
    )
    return parse_template(name, raw)
