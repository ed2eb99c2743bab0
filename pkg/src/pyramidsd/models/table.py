from __future__ import annotations

import numpy as np

from ..core import normalize
from ..errors import InvalidArgument
from .base import ModelBackend


class TableModel(ModelBackend):
    """Synthetic backend with hash-derived logits.

    Logits for a context depend only on ``seed`` and the last ``window``
    tokens: each (seed, window) pair seeds a counter-based stream that
    yields uniform values in [-1, 1], scaled by ``logit_scale``. Models
    sharing a seed but differing in ``logit_scale`` agree on the ranking
    of every context and differ only in sharpness.
    """

    def __init__(self, vocab_size: int, seed: int = 0, window: int = 2,
                 logit_scale: float = 4.0, name: str = "table", param_size: int = 0):
        if vocab_size < 2:
            raise InvalidArgument("vocab_size must be >= 2")
        if window < 0:
            raise InvalidArgument("window must be >= 0")
        if not logit_scale > 0:
            raise InvalidArgument("logit_scale must be > 0")
        self.vocab_size = int(vocab_size)
        self.seed = int(seed)
        self.window = int(window)
        self.logit_scale = float(logit_scale)
        self.name = name
        self.param_size = param_size
        self._cache: dict = {}

    def logits(self, ctx) -> np.ndarray:
        key = tuple(ctx[-self.window:]) if self.window else ()
        # length marker keeps short prompts from colliding with padded windows
        ss = np.random.SeedSequence([self.seed & (2**63 - 1), len(key), *key])
        u = np.random.Generator(np.random.Philox(ss)).random(self.vocab_size)
        return (2.0 * u - 1.0) * self.logit_scale

    def next_distribution(self, ctx):
        key = tuple(ctx[-self.window:]) if self.window else ()
        p = self._cache.get(key)
        if p is None:
            p = normalize(self.logits(key), 1.0)
            p.setflags(write=False)
            self._cache[key] = p
        return p

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state
