"""Backend spec mini-grammar: ``kind:param=value,param=value``.

Kinds and their parameters::

    table   vocab, seed=0, window=2, scale=4.0
    ngram   corpus=<path>, order=2, k=1.0, vocab=<size, for id corpora>
    const   probs=0.5/0.3/0.2
    trace   path=<trace file>
    remote  url=<http://host:port>, model=<name>, vocab=<size>

Every kind also accepts ``temperature`` (re-sharpening wrapper), ``latency``
(simulated seconds per call), ``name`` and ``params`` (advisory size).
"""

from __future__ import annotations

from ..errors import InvalidArgument
from .base import ConstantModel, LatencyModel, ModelBackend, TemperatureModel
from .ngram import ngram_fit
from .remote import RemoteModel
from .table import TableModel
from .trace import trace_replay_open

COMMON = {"temperature", "latency", "name", "params"}
KINDS = {
    "table": {"vocab", "seed", "window", "scale"},
    "ngram": {"corpus", "order", "k", "vocab"},
    "const": {"probs"},
    "trace": {"path"},
    "remote": {"url", "model", "vocab"},
}


def parse_spec(text: str) -> tuple:
    kind, _, rest = text.strip().partition(":")
    if kind not in KINDS:
        raise InvalidArgument(f"unknown backend kind {kind!r} in {text!r}; expected one of {sorted(KINDS)}")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise InvalidArgument(f"backend parameter {item!r} must look like key=value")
        if key not in KINDS[kind] | COMMON:
            raise InvalidArgument(f"unknown parameter {key!r} for backend kind {kind!r}")
        params[key] = value
    return kind, params


def _need(params, key, kind):
    if key not in params:
        raise InvalidArgument(f"backend kind {kind!r} requires {key}=...")
    return params[key]


def _load_corpus(path):
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise InvalidArgument(f"cannot read corpus {path}: {exc}") from exc
    try:
        return [[int(t) for t in ln.split()] for ln in lines]
    except ValueError:
        return lines


def build_backend(text: str) -> ModelBackend:
    kind, p = parse_spec(text)
    try:
        if kind == "table":
            m: ModelBackend = TableModel(int(_need(p, "vocab", kind)), seed=int(p.get("seed", 0)),
                                         window=int(p.get("window", 2)), logit_scale=float(p.get("scale", 4.0)))
        elif kind == "ngram":
            corpus = _load_corpus(_need(p, "corpus", kind))
            m = ngram_fit(corpus, order=int(p.get("order", 2)), k=float(p.get("k", 1.0)),
                          vocab_size=int(p["vocab"]) if "vocab" in p else None)
        elif kind == "const":
            m = ConstantModel([float(x) for x in _need(p, "probs", kind).split("/")])
        elif kind == "trace":
            m = trace_replay_open(_need(p, "path", kind))
        else:
            m = RemoteModel(_need(p, "url", kind), p.get("model", "remote"),
                            vocab_size=int(p["vocab"]) if "vocab" in p else None)
    except ValueError as exc:
        if isinstance(exc, InvalidArgument):
            raise
        raise InvalidArgument(f"bad parameter value in backend spec {text!r}: {exc}") from exc

    if "name" in p:
        m.name = p["name"]
    if "params" in p:
        m.param_size = int(float(p["params"]))
    if "temperature" in p:
        m = TemperatureModel(m, float(p["temperature"]), name=p.get("name"))
    if "latency" in p:
        m = LatencyModel(m, float(p["latency"]))
    return m
