"""Pipeline configuration: defaults, key=value config files, flag overrides.

Every hyperparameter is exposed both as a config key and a CLI flag; the
API key is never stored in the file, only read from the environment variable
named by api_key_env.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .llm import LiveBackend, LlmGateway, LlmParams, MockBackend

BACKEND_CHOICES = ("live", "mock")
EXECUTOR_CHOICES = ("harness", "inprocess")
THRESHOLD_PRESETS = (0.6, 0.7, 0.8)


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    scenarios: int = 3
    repair_budget: int = 3
    inputs_per_scenario: int = 3
    threshold: float = 0.8
    early_stop_after: int = 2
    timeout_ms: int = 10_000
    temperature: float = 0.5
    reruns: int = 3
    workers: int = 4
    base_seed: int = 0
    model: str = ""
    endpoint: str = ""
    api_key_env: str = "SPECASSAY_API_KEY"
    backend: str = "live"
    mock_script: str | None = None
    executor: str = "harness"
    harness_cmd: str | None = None
    grace_ms: int = 500
    retries: int = 3
    max_output_tokens: int = 1024
    stage_max_tokens: dict[str, int] = field(default_factory=dict)
    template_dir: str | None = None

    def validate(self) -> None:
        positives = (
            "scenarios",
            "repair_budget",
            "inputs_per_scenario",
            "early_stop_after",
            "timeout_ms",
            "reruns",
            "workers",
            "retries",
            "max_output_tokens",
        )
        for name in positives:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.threshold <= 1:
            raise ConfigError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        if self.backend not in BACKEND_CHOICES:
            raise ConfigError(f"backend must be one of {BACKEND_CHOICES}, got {self.backend!r}")
        if self.executor not in EXECUTOR_CHOICES:
            raise ConfigError(f"executor must be one of {EXECUTOR_CHOICES}, got {self.executor!r}")
        if self.backend == "mock" and not self.mock_script:
            raise ConfigError("backend 'mock' requires mock_script")

    def params_for(self, stage: str, run_seed: int | None = None) -> LlmParams:
        return LlmParams(
            model_name=self.model,
            temperature=self.temperature,
            seed=run_seed,
            max_output_tokens=self.stage_max_tokens.get(stage, self.max_output_tokens),
        )


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}
_INT_KEYS = {
    "scenarios",
    "repair_budget",
    "inputs_per_scenario",
    "early_stop_after",
    "timeout_ms",
    "reruns",
    "workers",
    "base_seed",
    "grace_ms",
    "retries",
    "max_output_tokens",
}
_FLOAT_KEYS = {"threshold", "temperature"}


def parse_config_text(text: str, source: str = "<config>") -> PipelineConfig:
    """Parse `key = value` lines; '#' starts a comment; unknown keys fail."""
    config = PipelineConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key.startswith("max_output_tokens."):
            stage = key.split(".", 1)[1]
            config.stage_max_tokens[stage] = _coerce_int(key, value, source, lineno)
            continue
        if key not in _FIELD_TYPES or key == "stage_max_tokens":
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in _INT_KEYS:
            setattr(config, key, _coerce_int(key, value, source, lineno))
        elif key in _FLOAT_KEYS:
            setattr(config, key, _coerce_float(key, value, source, lineno))
        else:
            setattr(config, key, value)
    return config


def _coerce_int(key: str, value: str, source: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"{source}:{lineno}: {key} expects an integer, got {value!r}") from exc


def _coerce_float(key: str, value: str, source: str, lineno: int) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"{source}:{lineno}: {key} expects a number, got {value!r}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def build_gateway(config: PipelineConfig, record_prompts: bool = False) -> LlmGateway:
    """Construct the gateway for the configured backend; mock scripts are
    re-read on every call so each run consumes a fresh script."""
    if config.backend == "mock":
        backend = MockBackend.from_file(config.mock_script)  # type: ignore[arg-type]
    else:
        if not config.endpoint:
            raise ConfigError("backend 'live' requires endpoint")
        backend = LiveBackend(
            endpoint=config.endpoint,
            api_key=os.environ.get(config.api_key_env),
            retries=config.retries,
        )
    return LlmGateway(backend, record_prompts=record_prompts)


def build_executor(config: PipelineConfig):
    from .executor import InProcessExecutor, SubprocessExecutor

    if config.executor == "inprocess":
        return InProcessExecutor()
    if not config.harness_cmd:
        raise ConfigError("executor 'harness' requires harness_cmd")
    return SubprocessExecutor(
        config.harness_cmd, pool_size=config.workers, grace_ms=config.grace_ms
    )
