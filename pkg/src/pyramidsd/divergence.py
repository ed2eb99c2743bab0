"""Divergences between next-token distributions, plus entropy and confidence."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument


class Kind(str, enum.Enum):
    TOP1_MISMATCH = "top1_mismatch"
    TOTAL_VARIATION = "total_variation"
    KL = "kl"


@dataclass(frozen=True)
class DivergenceKind:
    kind: Kind = Kind.TOTAL_VARIATION
    eps: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not self.eps > 0:
            raise InvalidArgument("KL epsilon floor must be > 0")

    @classmethod
    def parse(cls, text) -> "DivergenceKind":
        if isinstance(text, DivergenceKind):
            return text
        aliases = {"tvd": "total_variation", "tv": "total_variation", "top1": "top1_mismatch"}
        name, _, eps = str(text).partition(":")
        name = aliases.get(name, name)
        try:
            return cls(Kind(name), float(eps) if eps else 1e-10)
        except ValueError as exc:
            raise InvalidArgument(f"unknown divergence kind {text!r}") from exc

    def __str__(self):
        if self.kind is Kind.KL and self.eps != 1e-10:
            return f"kl:{self.eps:g}"
        return self.kind.value

    def __call__(self, p, q) -> float:
        return divergence(self, p, q)


TOP1 = DivergenceKind(Kind.TOP1_MISMATCH)
TVD = DivergenceKind(Kind.TOTAL_VARIATION)
KL = DivergenceKind(Kind.KL)


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.subtract(p, q)).sum())


def kl(p, q, eps: float = 1e-10) -> float:
    """sum p ln(p / max(q, eps)), with 0 ln 0 = 0.

    Evaluated as the sum of pointwise-nonnegative terms
    q' (r ln r - r + 1), r = p / q', which equals the plain sum when p and q
    each sum to one but cannot go negative through rounding.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    mask = p > 0
    pm = p[mask]
    qm = np.maximum(q[mask], eps)
    r = pm / qm
    terms = qm * (r * np.log(r) - r + 1.0)
    return float(np.sum(np.maximum(terms, 0.0)) + np.sum(q[~mask]))


def divergence(kind: DivergenceKind, p, q) -> float:
    """Div(p, q), where ``p`` is the verifier and ``q`` the proposer."""
    if len(p) != len(q):
        raise InvalidArgument(f"vocabulary size mismatch: {len(p)} vs {len(q)}")
    k = kind.kind
    if k is Kind.TOTAL_VARIATION:
        return total_variation(p, q)
    if k is Kind.TOP1_MISMATCH:
        return 0.0 if int(np.argmax(p)) == int(np.argmax(q)) else 1.0
    return kl(p, q, kind.eps)


def entropy(p) -> float:
    p = np.asarray(p)
    nz = p[p > 0]
    return float(max(0.0, -np.sum(nz * np.log(nz))))


def confidence(p) -> float:
    return float(np.max(p))
