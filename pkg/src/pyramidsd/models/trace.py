"""Newline-delimited JSON logit traces.

Line 1 is a header ``{"version": 1, "vocab_size": N, "model": name}``;
each later line is ``{"ctx": [ids...], "probs": [N floats]}``. Floats are
written with ``repr`` precision so a record/replay round trip is exact.
"""

from __future__ import annotations

import json
import os
from typing import Iterable

import numpy as np

from ..errors import InvalidArgument, PyramidError, TraceMiss
from .base import ModelBackend

TRACE_VERSION = 1
LOAD_TOL = 1e-6


class TraceFormatError(PyramidError, ValueError):
    pass


def trace_record(backend: ModelBackend, contexts: Iterable, path) -> int:
    n = 0
    try:
        with open(path, "w", encoding="utf-8") as fh:
            header = {"version": TRACE_VERSION, "vocab_size": backend.vocab_size, "model": backend.name}
            fh.write(json.dumps(header) + "\n")
            for ctx in contexts:
                ctx = [int(t) for t in ctx]
                probs = np.asarray(backend.next_distribution(tuple(ctx)), dtype=np.float64)
                fh.write(json.dumps({"ctx": ctx, "probs": probs.tolist()}) + "\n")
                n += 1
    except OSError as exc:
        raise PyramidError(f"cannot write trace {os.fspath(path)}: {exc}") from exc
    return n


def read_trace(path) -> tuple:
    """Parse and validate a trace file; returns (header, {ctx: probs})."""
    path = os.fspath(path)
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise PyramidError(f"cannot open trace {path}: {exc}") from exc
    with fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TraceFormatError(f"{path}: empty trace file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"{path}:1: bad header: {exc}") from exc
    if not isinstance(header, dict) or header.get("version") != TRACE_VERSION:
        raise TraceFormatError(f"{path}:1: unsupported header {header!r}")
    vocab = header.get("vocab_size")
    if not isinstance(vocab, int) or vocab < 2:
        raise TraceFormatError(f"{path}:1: vocab_size must be an integer >= 2")

    table = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            ctx = tuple(int(t) for t in rec["ctx"])
            probs = np.asarray(rec["probs"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise TraceFormatError(f"{path}:{lineno}: malformed record: {exc}") from exc
        if probs.shape != (vocab,):
            raise TraceFormatError(f"{path}:{lineno}: expected {vocab} probabilities, got {probs.shape}")
        if any(not 0 <= t < vocab for t in ctx):
            raise TraceFormatError(f"{path}:{lineno}: context token outside vocabulary")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise TraceFormatError(f"{path}:{lineno}: probabilities must be finite and nonnegative")
        s = float(probs.sum())
        if abs(s - 1.0) > LOAD_TOL:
            raise TraceFormatError(f"{path}:{lineno}: probabilities sum to {s!r}")
        probs.setflags(write=False)
        table[ctx] = probs
    return header, table


class TraceModel(ModelBackend):
    """Replays recorded distributions; unrecorded contexts raise :class:`TraceMiss`."""

    def __init__(self, table: dict, vocab_size: int, name: str = "trace", path=None):
        self.table = table
        self.vocab_size = vocab_size
        self.name = name
        self.path = path

    def next_distribution(self, ctx):
        try:
            return self.table[tuple(ctx)]
        except KeyError:
            raise TraceMiss(ctx, self.path) from None


def trace_replay_open(path) -> TraceModel:
    header, table = read_trace(path)
    return TraceModel(table, header["vocab_size"], name=str(header.get("model", "trace")), path=os.fspath(path))


def enumerate_contexts(prompt, vocab_size: int, depth: int) -> list:
    """Every continuation of ``prompt`` by 0..depth tokens, breadth first."""
    if vocab_size ** depth > 1_000_000:
        raise InvalidArgument("context enumeration too large; lower depth")
    out = [tuple(prompt)]
    frontier = [tuple(prompt)]
    for _ in range(depth):
        frontier = [c + (t,) for c in frontier for t in range(vocab_size)]
        out.extend(frontier)
    return out
