import numpy as np
import pytest

from pyramidsd.models import ModelBackend, TableModel, ngram_fit, temperature_family


class RolledModel(ModelBackend):
    """Shifts another model's distribution by one token id, so argmaxes never agree."""

    def __init__(self, inner, shift=1):
        self.inner = inner
        self.shift = shift
        self.vocab_size = inner.vocab_size
        self.name = f"rolled({inner.name})"

    def next_distribution(self, ctx):
        return np.roll(self.inner.next_distribution(ctx), self.shift)


def random_ngram(rng, vocab=6, order=2, n_seqs=4, length=20, k=0.5):
    corpus = [list(rng.integers(0, vocab, size=length)) for _ in range(n_seqs)]
    return ngram_fit(corpus, order, k, vocab_size=vocab)


@pytest.fixture
def family():
    base = TableModel(16, seed=5, window=2, logit_scale=3.0)
    return temperature_family(base, (1.5, 1.0, 0.6), latencies=(1 / 8, 1 / 4, 1.0))


@pytest.fixture
def hierarchy():
    """Aligned synthetic hierarchy with 8:4:1 speeds."""
    base = TableModel(32, seed=11, window=2, logit_scale=4.0)
    return temperature_family(base, (1.5, 1.0, 0.6), latencies=(1 / 8, 1 / 4, 1.0))
