"""Closed-form throughput model, acceptance-rate estimation, behaviour summaries."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import argmax
from .divergence import confidence, entropy
from .errors import InvalidArgument, UndefinedRate
from .models.base import ModelBackend, check_shared_vocab


@dataclass(frozen=True)
class ThroughputInputs:
    beta: float
    ell: int
    v_proposer: float
    v_verifier: float

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidArgument(f"beta must lie in [0, 1], got {self.beta}")
        if self.ell < 1:
            raise InvalidArgument(f"speculative length must be >= 1, got {self.ell}")
        if not (self.v_proposer > 0 and self.v_verifier > 0):
            raise InvalidArgument("model speeds must be positive")


def _speculative_speed(beta, ell, v_proposer, v_verifier) -> float:
    if not (v_proposer > 0 and v_verifier > 0):
        raise InvalidArgument(f"model speeds must be positive, got {v_proposer}, {v_verifier}")
    if ell < 1:
        raise InvalidArgument(f"speculative length must be >= 1, got {ell}")
    return beta * (ell + 1) / (ell / v_proposer + 1 / v_verifier)


def v_sd(inp: ThroughputInputs) -> float:
    """Draft/target speculative throughput: beta (l + 1) / (l / V_D + 1 / V_T)."""
    return _speculative_speed(inp.beta, inp.ell, inp.v_proposer, inp.v_verifier)


def v_fsd_qd(inp: ThroughputInputs) -> float:
    """Effective draft->qualifier speed; same form with (beta_QD, l_D, V_D, V_Q)."""
    return _speculative_speed(inp.beta, inp.ell, inp.v_proposer, inp.v_verifier)


def v_psd(beta_tq: float, ell_q: int, v_fsd: float, v_t: float) -> float:
    """Pyramid throughput with the inner stage acting as a proposer of speed ``v_fsd``."""
    if not 0.0 <= beta_tq <= 1.0:
        raise InvalidArgument(f"beta must lie in [0, 1], got {beta_tq}")
    return _speculative_speed(beta_tq, ell_q, v_fsd, v_t)


def estimate_beta(outcome, stage: str) -> float:
    """Per-token acceptance: accepted / proposed at ``stage`` ("qd" or "tq")."""
    if stage not in ("qd", "tq"):
        raise InvalidArgument(f"stage must be 'qd' or 'tq', got {stage!r}")
    c = outcome.counters.get(stage)
    if c is None or c.proposed == 0:
        raise UndefinedRate(f"no proposals at stage {stage!r}")
    return c.accepted / c.proposed


def estimate_round_beta(outcome, stage: str, ell: int | None = None) -> float:
    """Mean tokens yielded per round over (ell + 1), the multiplier the formulas expect."""
    return outcome.round_beta(stage, ell)


def speeds_of(outcome) -> dict:
    return {role: 1.0 / lat for role, lat in outcome.latency.items() if lat > 0}


def analytical_speed(method: str, params: dict, betas: dict, speeds: dict) -> float:
    """Predicted tokens/s for ``method`` given per-round betas and per-role speeds."""
    if method == "ar":
        return speeds["target"]
    if method in ("sd", "fsd"):
        return _speculative_speed(betas["tq"], params["l_d"], speeds["draft"], speeds["target"])
    if method in ("psd_f", "psd_a"):
        inner = _speculative_speed(betas["qd"], params["l_d"], speeds["draft"], speeds["qualifier"])
        return _speculative_speed(betas["tq"], params["l_q"], inner, speeds["target"])
    raise InvalidArgument(f"unknown method {method!r}")


def predicted_speed(outcome) -> float:
    """Composed closed-form prediction for one decode, using its measured per-round betas."""
    betas = {s: outcome.round_beta(s) for s in outcome.rounds if outcome.rounds[s]}
    return analytical_speed(outcome.method, outcome.params, betas, speeds_of(outcome))


N_BINS = 32


@dataclass
class ModelBehavior:
    model: str
    entropies: list = field(default_factory=list)
    confidences: list = field(default_factory=list)
    entropy_hist: np.ndarray = None
    confidence_hist: np.ndarray = None

    @property
    def mean_entropy(self) -> float:
        return float(np.mean(self.entropies))

    @property
    def mean_confidence(self) -> float:
        return float(np.mean(self.confidences))


@dataclass
class BehaviorSummary:
    vocab_size: int
    models: list

    @property
    def entropy_edges(self) -> np.ndarray:
        return np.linspace(0.0, math.log(self.vocab_size), N_BINS + 1)

    @property
    def confidence_edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, N_BINS + 1)

    def rows(self):
        for m in self.models:
            for metric, hist, edges in (("entropy", m.entropy_hist, self.entropy_edges),
                                        ("confidence", m.confidence_hist, self.confidence_edges)):
                for i, count in enumerate(hist):
                    yield m.model, metric, float(edges[i]), float(edges[i + 1]), int(count)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "metric", "bin_lo", "bin_hi", "count"])
        for model, metric, lo, hi, count in self.rows():
            w.writerow([model, metric, repr(lo), repr(hi), count])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "vocab_size": self.vocab_size,
            "bins": N_BINS,
            "models": [{
                "model": m.model,
                "steps": len(m.entropies),
                "mean_entropy": m.mean_entropy,
                "mean_confidence": m.mean_confidence,
                "entropy_hist": [int(c) for c in m.entropy_hist],
                "confidence_hist": [int(c) for c in m.confidence_hist],
            } for m in self.models],
        }, indent=2)


def _histogram(values, edges) -> np.ndarray:
    # clip so boundary values (entropy == ln V, confidence == 1) land in the last bin
    v = np.clip(np.asarray(values, dtype=float), edges[0], edges[-1])
    hist, _ = np.histogram(v, bins=edges)
    return hist


def behavior_summary(models: Sequence[ModelBackend], prompts: Sequence, steps: int) -> BehaviorSummary:
    """Greedy-decode ``steps`` tokens per prompt with each model, logging entropy and confidence."""
    if steps < 1:
        raise InvalidArgument("steps must be >= 1")
    if not prompts:
        raise InvalidArgument("need at least one prompt")
    vocab = check_shared_vocab(*models)
    summary = BehaviorSummary(vocab, [])
    for model in models:
        mb = ModelBehavior(model.name)
        for prompt in prompts:
            ctx = list(prompt)
            for _ in range(steps):
                p = np.asarray(model.next_distribution(tuple(ctx)))
                mb.entropies.append(entropy(p))
                mb.confidences.append(confidence(p))
                ctx.append(argmax(p))
        mb.entropy_hist = _histogram(mb.entropies, summary.entropy_edges)
        mb.confidence_hist = _histogram(mb.confidences, summary.confidence_edges)
        summary.models.append(mb)
    return summary
