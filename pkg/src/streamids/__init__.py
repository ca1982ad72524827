"""Streaming four-stage network flow classifier."""

from importlib import resources
from pathlib import Path

from .config import PipelineConfig, load_config
from .flow_model import FlowRecord, LabelSpace, MetricReport, Verdict
from .ingest import SchemaConfig, SyntheticSpec, generate_synthetic, read_csv_stream
from .pipeline import Pipeline, RunResult, run

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Location of a bundled sample file (``sample_flows.csv``, ``desk_spec.txt``, ...)."""
    return Path(str(resources.files(__name__).joinpath("data", name)))


__all__ = [
    "FlowRecord", "LabelSpace", "MetricReport", "Verdict", "PipelineConfig", "load_config",
    "SchemaConfig", "SyntheticSpec", "generate_synthetic", "read_csv_stream",
    "Pipeline", "RunResult", "run", "data_path",
]
