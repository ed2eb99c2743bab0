from .base import (
    ConstantModel,
    LatencyModel,
    ModelBackend,
    TemperatureModel,
    check_shared_vocab,
    temperature_family,
    temperature_wrap,
    with_latency,
)
from .ngram import NGramModel, ngram_fit
from .remote import RemoteModel, ServiceHandle, remote_backend, serve_backend
from .specs import build_backend, parse_spec
from .table import TableModel
from .trace import TraceFormatError, TraceModel, enumerate_contexts, read_trace, trace_record, trace_replay_open

__all__ = [
    "ConstantModel",
    "LatencyModel",
    "ModelBackend",
    "NGramModel",
    "RemoteModel",
    "ServiceHandle",
    "TableModel",
    "TemperatureModel",
    "TraceFormatError",
    "TraceModel",
    "build_backend",
    "check_shared_vocab",
    "enumerate_contexts",
    "ngram_fit",
    "parse_spec",
    "read_trace",
    "remote_backend",
    "serve_backend",
    "temperature_family",
    "temperature_wrap",
    "trace_record",
    "trace_replay_open",
    "with_latency",
]
