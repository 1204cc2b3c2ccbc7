"""Zero-shot batch-level anomaly detection for numeric tables with LLM prompting."""

from llmad.core import (
    AnomalyScores,
    BatchError,
    DataBatch,
    DetectorConfig,
    Naming,
    validate_batch,
)
from llmad.serializer import PromptBundle, build_prompt, format_value, serialize_column
from llmad.parser import ParsedPrediction, parse_response, render_response

__all__ = [
    "AnomalyScores",
    "BatchError",
    "DataBatch",
    "DetectorConfig",
    "Naming",
    "PromptBundle",
    "ParsedPrediction",
    "build_prompt",
    "format_value",
    "parse_response",
    "render_response",
    "serialize_column",
    "validate_batch",
]

__version__ = "0.1.0"
