import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pyramidsd.core import normalize
from pyramidsd.divergence import KL, TOP1, TVD, DivergenceKind, confidence, divergence, entropy
from pyramidsd.errors import InvalidArgument


@st.composite
def dist_pairs(draw, max_size=12):
    n = draw(st.integers(2, max_size))
    logits = st.lists(st.floats(-20, 20), min_size=n, max_size=n)
    return normalize(draw(logits)), normalize(draw(logits))


def test_tvd_examples():
    p = np.array([0.2, 0.5, 0.3])
    assert divergence(TVD, p, p) == 0.0
    assert divergence(TVD, np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0
    assert divergence(TVD, np.array([0.6, 0.4]), np.array([0.4, 0.6])) == pytest.approx(0.2, abs=1e-15)


def test_kl_examples():
    assert divergence(KL, np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(math.log(2))
    p = np.array([0.3, 0.0, 0.7])
    assert divergence(KL, p, p) == 0.0
    # zero in q is floored, not infinite
    assert math.isfinite(divergence(KL, np.array([0.5, 0.5]), np.array([1.0, 0.0])))


def test_top1_examples():
    assert divergence(TOP1, np.array([0.7, 0.3]), np.array([0.6, 0.4])) == 0.0
    assert divergence(TOP1, np.array([0.7, 0.3]), np.array([0.4, 0.6])) == 1.0


def test_size_mismatch():
    with pytest.raises(InvalidArgument):
        divergence(TVD, np.array([0.5, 0.5]), np.array([0.2, 0.3, 0.5]))


def test_kind_parsing():
    assert DivergenceKind.parse("tvd") == TVD
    assert DivergenceKind.parse("top1_mismatch") == TOP1
    assert DivergenceKind.parse("kl:1e-6").eps == 1e-6
    with pytest.raises(InvalidArgument):
        DivergenceKind.parse("wasserstein")
    with pytest.raises(InvalidArgument):
        DivergenceKind("kl", eps=0.0)


@settings(max_examples=200, deadline=None)
@given(dist_pairs())
def test_bounds_and_symmetry(pq):
    p, q = pq
    t = divergence(TVD, p, q)
    assert 0.0 <= t <= 1.0 + 1e-12
    assert t == pytest.approx(divergence(TVD, q, p), abs=1e-15)
    assert divergence(TOP1, p, q) in (0.0, 1.0)
    assert divergence(KL, p, q) >= -1e-12
    assert 0.0 <= entropy(p) <= math.log(len(p)) + 1e-12


@settings(max_examples=100, deadline=None)
@given(dist_pairs(), st.floats(0, 1), st.floats(0, 1))
def test_acceptance_predicate_monotone_in_tau(pq, a, b):
    p, q = pq
    lo, hi = min(a, b), max(a, b)
    for kind in (TVD, KL, TOP1):
        d = divergence(kind, p, q)
        assert (d <= lo) <= (d <= hi)


def test_kl_argument_order_matters():
    verifier = np.array([0.9, 0.1])
    proposer = np.array([0.5, 0.5])
    assert divergence(KL, verifier, proposer) != pytest.approx(divergence(KL, proposer, verifier))
    # Div(verifier, proposer): sum over the verifier's mass
    expected = 0.9 * math.log(0.9 / 0.5) + 0.1 * math.log(0.1 / 0.5)
    assert divergence(KL, verifier, proposer) == pytest.approx(expected)


def test_entropy_examples():
    assert entropy(np.array([0.0, 1.0, 0.0])) == 0.0
    assert entropy(np.full(4, 0.25)) == pytest.approx(math.log(4))
    # 0.5 ln 2 + 2 * 0.25 ln 4 = 1.5 ln 2
    assert entropy(np.array([0.5, 0.25, 0.25])) == pytest.approx(1.0397, abs=1e-4)


def test_confidence_examples():
    assert confidence(np.array([0.0, 1.0])) == 1.0
    assert confidence(np.full(8, 0.125)) == 0.125
    assert confidence(np.array([0.6, 0.3, 0.1])) == 0.6
