"""Shared value types: vocabularies, distributions, decode configuration, step records."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument

PROB_TOL = 1e-9

Context = tuple  # tuple[int, ...]; prompt plus committed tokens
Distribution = np.ndarray  # 1-D float64, nonnegative, sums to 1


@dataclass(frozen=True)
class Vocabulary:
    size: int
    tokens: Optional[tuple] = None

    def __post_init__(self):
        if int(self.size) < 2:
            raise InvalidArgument(f"vocabulary size must be >= 2, got {self.size}")
        if self.tokens is not None and len(self.tokens) != self.size:
            raise InvalidArgument("display strings must cover every token id")

    @classmethod
    def from_words(cls, words: Sequence[str]) -> "Vocabulary":
        seen = list(dict.fromkeys(words))
        return cls(len(seen), tuple(seen))

    def index(self, word: str) -> int:
        if self.tokens is None:
            raise InvalidArgument("vocabulary has no display strings")
        return self.tokens.index(word)

    def encode(self, text: str) -> tuple:
        return tuple(self.index(w) for w in text.split())

    def decode(self, ids: Sequence[int]) -> str:
        if self.tokens is None:
            return " ".join(str(i) for i in ids)
        return " ".join(self.tokens[i] for i in ids)

    def check_context(self, ctx: Sequence[int]) -> None:
        for t in ctx:
            if not 0 <= int(t) < self.size:
                raise InvalidArgument(f"token id {t} outside vocabulary of size {self.size}")


def as_distribution(probs, vocab_size: Optional[int] = None, tol: float = PROB_TOL) -> Distribution:
    """Validate ``probs`` and return it as a float64 array."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1:
        raise InvalidArgument("distribution must be a 1-D vector")
    if vocab_size is not None and p.shape[0] != vocab_size:
        raise InvalidArgument(f"distribution length {p.shape[0]} != vocabulary size {vocab_size}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidArgument("distribution entries must be finite and nonnegative")
    s = float(p.sum())
    if abs(s - 1.0) > tol:
        raise InvalidArgument(f"distribution sums to {s!r}, not 1 (tol {tol})")
    return p


def normalize(logits, temperature: float = 1.0, vocab_size: Optional[int] = None) -> Distribution:
    """Temperature softmax, overflow-safe via max subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise InvalidArgument("logits must be a 1-D vector")
    if vocab_size is not None and z.shape[0] != vocab_size:
        raise InvalidArgument(f"logit length {z.shape[0]} != vocabulary size {vocab_size}")
    if not np.all(np.isfinite(z)):
        raise InvalidArgument("logits must be finite")
    if not temperature > 0 or not np.isfinite(temperature):
        raise InvalidArgument(f"temperature must be positive, got {temperature}")
    z = z / temperature
    e = np.exp(z - z.max())
    return e / e.sum()


def rescale(p: Distribution, temperature: float) -> Distribution:
    """Re-sharpen probabilities: normalize(ln p, T), treating zero mass as -inf."""
    if temperature == 1.0:
        return p
    if not temperature > 0:
        raise InvalidArgument(f"temperature must be positive, got {temperature}")
    support = p > 0
    out = np.zeros_like(p)
    logp = np.log(p[support]) / temperature
    e = np.exp(logp - logp.max())
    out[support] = e / e.sum()
    return out


def argmax(p: Distribution) -> int:
    # np.argmax returns the first maximal index: ties go to the lowest id
    return int(np.argmax(p))


def sample(p: Distribution, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; consumes exactly one uniform from ``rng``."""
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    i = int(np.searchsorted(cdf, u, side="right"))
    n = len(p) - 1
    if i > n:
        i = n
    # never land on a zero-mass entry because of rounding at the top of the cdf
    while p[i] == 0 and i > 0:
        i -= 1
    return i


class StageStreams:
    """Independent per-stage random streams derived from one run seed."""

    NAMES = ("draft", "qualifier", "target")

    def __init__(self, seed: int):
        children = np.random.SeedSequence(int(seed) & (2**64 - 1)).spawn(len(self.NAMES))
        self._gens = {n: np.random.Generator(np.random.PCG64(s)) for n, s in zip(self.NAMES, children)}

    def __getitem__(self, name: str) -> np.random.Generator:
        return self._gens[name]


@dataclass(frozen=True)
class DecodeConfig:
    max_new_tokens: int = 2048
    temperature: float = 0.7
    seed: int = 0
    eos_token: Optional[int] = None
    greedy: bool = False
    max_context: int = 1 << 20

    def __post_init__(self):
        # 0 is allowed as a no-op edge case
        if int(self.max_new_tokens) < 0:
            raise InvalidArgument("max_new_tokens must be >= 0")
        if not self.temperature > 0:
            raise InvalidArgument("temperature must be > 0")
        if self.max_context < 1:
            raise InvalidArgument("max_context must be >= 1")


class Stage(str, enum.Enum):
    DRAFT = "draft"
    QUALIFIER = "qualifier"
    TARGET = "target"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class StepRecord:
    position: int
    token: int
    stage: Stage
    div_q: Optional[float] = None
    div_t: Optional[float] = None
    accepted: bool = False
    sim_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "position": self.position,
            "token": self.token,
            "stage": self.stage.value,
            "div_q": self.div_q,
            "div_t": self.div_t,
            "accepted": self.accepted,
            "sim_time": self.sim_time,
        }


@dataclass
class SimClock:
    """Simulated seconds, charged per model invocation.

    Charges are tallied per (model, cost) so that ``now`` is a deterministic
    function of the invocation counts, independent of charge order.
    """

    _tally: dict = field(default_factory=dict)

    def charge(self, seconds: float, who: str = "") -> None:
        if seconds < 0:
            raise InvalidArgument("cannot charge negative time")
        key = (who, float(seconds))
        self._tally[key] = self._tally.get(key, 0) + 1

    @property
    def now(self) -> float:
        return elapsed_for(self._tally)

    def calls(self) -> dict:
        out: dict = {}
        for (who, _), n in self._tally.items():
            out[who] = out.get(who, 0) + n
        return out


def elapsed_for(tally: dict) -> float:
    """Elapsed time for a {(who, seconds): count} tally; summed in sorted key order."""
    import math

    return math.fsum(n * s for (_, s), n in sorted(tally.items()))
