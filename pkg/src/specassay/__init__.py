"""specassay: infer program correctness against a natural-language specification.

The pipeline partitions the specification into behavior scenarios, generates
and repairs concrete test inputs under a budget, executes them against the
candidate, asks an LLM to judge each (input, output, specification) triplet
without ever seeing the code, and compares the agreement score to a
threshold.
"""

from .config import ConfigError, PipelineConfig, build_executor, build_gateway, load_config
from .corpus import (
    Candidate,
    CorpusRecord,
    FormatError,
    InvalidFraction,
    TaskSpec,
    dump_corpus,
    load_corpus,
    save_corpus,
    split_calibration,
)
from .executor import (
    ExecutionRequest,
    ExecutionResult,
    Executor,
    ExecutorUnavailable,
    HarnessProtocolError,
    HarnessSpawnError,
    InProcessExecutor,
    InputPayload,
    SerializedOutput,
    SubprocessExecutor,
)
from .inputs import (
    CollectedInputs,
    InputBatch,
    InputParseError,
    TestInput,
    collect_inputs,
    dedup_by_coverage,
    generate_input,
    repair_input,
    validate_input,
)
from .llm import (
    AuthError,
    LiveBackend,
    LlmGateway,
    LlmParams,
    LlmResponse,
    MissingPlaceholder,
    MockBackend,
    MockExhausted,
    PromptTemplate,
    TokenUsage,
    TransportError,
    load_template,
    render,
    usage_total,
)
from .metrics import (
    ConfusionMatrix,
    MetricValue,
    MismatchedRunSets,
    OverlapReport,
    RunEntry,
    RunRecord,
    StabilityReport,
    WrongApproachCount,
    confusion,
    consistent_correct_sets,
    load_run_record,
    mcc,
    overlap,
    p4,
    save_run_record,
    stability,
    token_summary,
)
from .scenarios import (
    CodeProperties,
    PropertiesParseError,
    Scenario,
    ScenarioParseError,
    extract_code_properties,
    extract_scenarios,
)
from .verdicts import (
    Assessment,
    BaselineVerdict,
    CalibrationPoint,
    InvalidThreshold,
    Verdict,
    assess,
    assess_many,
    calibrate_threshold,
    decide,
    parse_verdict,
    score,
    verify_triplet,
    zero_shot_cot,
)

__version__ = "0.1.0"
