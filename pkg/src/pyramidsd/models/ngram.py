from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..core import Vocabulary
from ..errors import InvalidArgument
from .base import ModelBackend


class NGramModel(ModelBackend):
    """Add-k smoothed n-gram model over integer token ids.

    ``P(t | ctx) = (count(ctx, t) + k) / (count(ctx, .) + k * V)`` where
    ``ctx`` is the last ``order - 1`` tokens. Near the start of a sequence
    the context is the (shorter) prefix seen so far.
    """

    def __init__(self, order: int, counts: dict, vocab_size: int, k: float = 1.0,
                 name: str = "ngram", vocab: Optional[Vocabulary] = None):
        if order < 1:
            raise InvalidArgument("order must be >= 1")
        if not k > 0:
            raise InvalidArgument("smoothing constant k must be > 0")
        self.order = order
        self.counts = counts
        self.k = float(k)
        self.vocab_size = vocab_size
        self.vocab = vocab
        self.name = name
        self.param_size = sum(int(np.count_nonzero(c)) for c in counts.values())
        self._uniform = np.full(vocab_size, 1.0 / vocab_size)
        self._uniform.setflags(write=False)
        self._cache: dict = {}

    def window(self, ctx: Sequence[int]) -> tuple:
        w = self.order - 1
        return tuple(ctx[-w:]) if w else ()

    def next_distribution(self, ctx):
        key = self.window(ctx)
        p = self._cache.get(key)
        if p is None:
            c = self.counts.get(key)
            if c is None:
                p = self._uniform
            else:
                p = (c + self.k) / (c.sum() + self.k * self.vocab_size)
                p.setflags(write=False)
            self._cache[key] = p
        return p

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state


def ngram_fit(corpus, order: int, k: float = 1.0, vocab: Optional[Vocabulary] = None,
              vocab_size: Optional[int] = None, name: str = "ngram") -> NGramModel:
    """Count n-grams in ``corpus``.

    ``corpus`` is a sequence of token-id sequences, or of strings that are
    split on whitespace (building a vocabulary unless one is given).
    """
    corpus = list(corpus)
    if not corpus or all(len(s) == 0 for s in corpus):
        raise InvalidArgument("corpus is empty")
    if order < 1:
        raise InvalidArgument("order must be >= 1")
    if not k > 0:
        raise InvalidArgument("smoothing constant k must be > 0")

    if isinstance(corpus[0], str):
        if vocab is None:
            vocab = Vocabulary.from_words([w for line in corpus for w in line.split()])
        seqs = [vocab.encode(line) for line in corpus]
    else:
        seqs = [tuple(int(t) for t in s) for s in corpus]

    if vocab is not None:
        vocab_size = vocab.size
    if vocab_size is None:
        vocab_size = max(2, max(max(s) for s in seqs if s) + 1)

    w = order - 1
    counts: dict = {}
    for seq in seqs:
        for i, t in enumerate(seq):
            if not 0 <= t < vocab_size:
                raise InvalidArgument(f"token id {t} outside vocabulary of size {vocab_size}")
            key = tuple(seq[max(0, i - w):i]) if w else ()
            row = counts.get(key)
            if row is None:
                row = counts[key] = np.zeros(vocab_size)
            row[t] += 1
    return NGramModel(order, counts, vocab_size, k, name=name, vocab=vocab)
