"""Python access to the benchmark engine."""

import json

from . import _core
from ._core import Error, augrc, normalize_answer_text, parse_answer, pearson, semantic_entropy

__version__ = _core.engine_version


def relevance(trace: dict) -> dict:
    """R_I, R_Q, R_C and raw span masses for a trace's greedy record."""
    return json.loads(_core.relevance_json(json.dumps(trace)))


def validate_trace(trace: dict) -> dict:
    """Raises Error when the trace breaks an invariant; returns the canonical form."""
    return json.loads(_core.validate_trace_json(json.dumps(trace)))


def write_synthetic_dataset(directory, n: int = 10) -> None:
    _core.write_synthetic_dataset(str(directory), n)


def run_benchmark(spec_path, output_dir=None) -> dict:
    """Runs a benchmark spec and returns the report document."""
    return json.loads(_core.run_benchmark_json(str(spec_path), "" if output_dir is None else str(output_dir)))


__all__ = [
    "Error",
    "augrc",
    "normalize_answer_text",
    "parse_answer",
    "pearson",
    "relevance",
    "run_benchmark",
    "semantic_entropy",
    "validate_trace",
    "write_synthetic_dataset",
]
