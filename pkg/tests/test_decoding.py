import math

import numpy as np
import pytest

from conftest import RolledModel, random_ngram
from pyramidsd.core import DecodeConfig, Stage
from pyramidsd.decoding import (
    Mode,
    PyramidConfig,
    decode_autoregressive,
    decode_fsd,
    decode_pyramid,
    decode_sd,
    verify_block,
)
from pyramidsd.divergence import TOP1, TVD, total_variation
from pyramidsd.errors import ContextOverflow, InvalidArgument, TraceMiss
from pyramidsd.models import ConstantModel, ModelBackend, TableModel, temperature_family, trace_record, trace_replay_open

GREEDY = DecodeConfig(max_new_tokens=40, greedy=True, temperature=1.0)


class Successor(ModelBackend):
    """One-hot on (last token + 1) mod V."""

    def __init__(self, vocab=5):
        self.vocab_size = vocab
        self.name = "succ"

    def next_distribution(self, ctx):
        p = np.zeros(self.vocab_size)
        p[(ctx[-1] + 1) % self.vocab_size if ctx else 0] = 1.0
        return p


def first_token_oracle(pd, pt):
    """Exact first-committed-token law of the min(1, pt/pd) rule, by enumeration."""
    pd, pt = np.asarray(pd, float), np.asarray(pt, float)
    out = np.zeros_like(pt)
    reject = 0.0
    for x in range(len(pd)):
        if pd[x] == 0:
            continue
        a = min(1.0, pt[x] / pd[x])
        out[x] += pd[x] * a
        reject += pd[x] * (1 - a)
    resid = np.maximum(pt - pd, 0)
    if reject > 0:
        out += reject * resid / resid.sum()
    return out


class TestVerifyBlock:
    def test_tau_one_accepts_everything(self):
        rng = np.random.default_rng(0)
        pv = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        pp = [np.array([0.0, 1.0]), np.array([1.0, 0.0])]
        res = verify_block([1, 0], pp, pv, 1.0, TVD, "sample", rng)
        assert res.accepted == 2 and res.token is None

    def test_exact_match(self):
        pv = [np.array([0.2, 0.8]), np.array([0.9, 0.1])]
        res = verify_block([1, 0], pv, pv, 0.0, TOP1, "argmax", bonus_dist=np.array([0.3, 0.7]))
        assert res.accepted == 2 and res.token == 1

    def test_first_rejection(self):
        pv = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        pp = [np.array([1.0, 0.0]), np.array([1.0, 0.0])]
        res = verify_block([0, 0], pp, pv, 0.5, TVD, "argmax")
        assert res.accepted == 1 and res.token == 1
        assert res.divergences == [0.0, 1.0]

    def test_length_mismatch(self):
        p = np.array([0.5, 0.5])
        with pytest.raises(InvalidArgument):
            verify_block([0, 1], [p], [p, p], 0.1, TVD)
        with pytest.raises(InvalidArgument):
            verify_block([], [], [], 0.1, TVD)


class TestAutoregressive:
    def test_forced_chain(self):
        out = decode_autoregressive(Successor(5), (2,), DecodeConfig(max_new_tokens=7))
        assert out.tokens == [3, 4, 0, 1, 2, 3, 4]

    def test_greedy_is_seed_independent(self):
        m = TableModel(12, seed=3)
        runs = {tuple(decode_autoregressive(m, (1,), DecodeConfig(max_new_tokens=20, greedy=True, seed=s)).tokens)
                for s in range(10)}
        assert len(runs) == 1

    def test_zero_budget(self):
        out = decode_autoregressive(TableModel(4), (1,), DecodeConfig(max_new_tokens=0))
        assert out.tokens == [] and out.calls["target"] == 0

    def test_eos_stops(self):
        out = decode_autoregressive(Successor(5), (0,), DecodeConfig(max_new_tokens=20, eos_token=3))
        assert out.tokens == [1, 2, 3]

    def test_context_overflow(self):
        with pytest.raises(ContextOverflow):
            decode_autoregressive(TableModel(4), (1, 2, 3), DecodeConfig(max_new_tokens=10, max_context=8))

    def test_bad_prompt(self):
        with pytest.raises(InvalidArgument):
            decode_autoregressive(TableModel(4), (7,), DecodeConfig(max_new_tokens=1))


class TestSD:
    def test_identical_models_greedy(self):
        m = TableModel(16, seed=4)
        out = decode_sd(m, m, (1, 2), 4, "greedy_match", GREEDY)
        assert out.beta("tq") == 1.0
        assert out.tokens == decode_autoregressive(m, (1, 2), GREEDY).tokens

    def test_stochastic_two_branch_enumeration(self):
        # proposal 0 is always kept, proposal 1 always rejected and resampled from [1, 0]
        np.testing.assert_allclose(first_token_oracle([0.5, 0.5], [1.0, 0.0]), [1.0, 0.0])
        d, t = ConstantModel([0.5, 0.5]), ConstantModel([1.0, 0.0])
        firsts = {decode_sd(d, t, (), 3, "stochastic", DecodeConfig(max_new_tokens=1, temperature=1.0, seed=s)).tokens[0]
                  for s in range(300)}
        assert firsts == {0}

    def test_stochastic_matches_exact_oracle(self):
        pd = np.array([0.4, 0.1, 0.3, 0.2, 0.0])
        pt = np.array([0.1, 0.35, 0.05, 0.3, 0.2])
        exact = first_token_oracle(pd, pt)
        np.testing.assert_allclose(exact, pt, atol=1e-12)
        counts = np.zeros(5)
        for s in range(20_000):
            out = decode_sd(ConstantModel(pd), ConstantModel(pt), (), 2, "stochastic",
                            DecodeConfig(max_new_tokens=1, temperature=1.0, seed=s))
            counts[out.tokens[0]] += 1
        # 4 sigma on 2e4 draws is ~0.014 per cell; TVD sums half the cells
        assert total_variation(counts / counts.sum(), pt) < 0.02

    def test_rounds_and_calls(self):
        m = TableModel(8, seed=1)
        out = decode_sd(m, m, (0,), 3, "greedy_match", DecodeConfig(max_new_tokens=12, greedy=True))
        assert out.rounds["tq"] == [(3, 4)] * 3
        assert out.calls == {"draft": 9, "target": 3}


class TestFSD:
    def test_zero_threshold_equals_greedy_sd(self, family):
        d, _, t = family
        a = decode_fsd(d, t, (3, 4), 3, 0.0, TOP1, GREEDY)
        b = decode_sd(d, t, (3, 4), 3, "greedy_match", GREEDY)
        assert a.tokens == b.tokens

    def test_vacuous_threshold_gives_draft_sequence(self):
        d, t = TableModel(10, seed=1), TableModel(10, seed=2)
        out = decode_fsd(d, t, (1,), 4, 1.0, TVD, GREEDY)
        assert out.beta("tq") == 1.0
        # every proposal survives; only the per-round bonus comes from the target
        assert out.tokens[:4] == decode_autoregressive(d, (1,), GREEDY).tokens[:4]
        for r in out.records:
            if r.stage is Stage.DRAFT:
                assert r.token == int(np.argmax(d.next_distribution((1, *out.tokens[:r.position]))))
            else:
                assert r.stage is Stage.TARGET and r.position % 5 == 4

    @pytest.mark.parametrize("tvd,expect_beta", [(0.25, 1.0), (0.35, 0.0)])
    def test_constant_divergence(self, tvd, expect_beta):
        pt = np.array([0.6, 0.4])
        pd = np.array([0.6 - tvd, 0.4 + tvd])
        assert total_variation(pt, pd) == pytest.approx(tvd)
        out = decode_fsd(ConstantModel(pd), ConstantModel(pt), (), 3, 0.3, TVD,
                         DecodeConfig(max_new_tokens=30, temperature=1.0, seed=2))
        assert out.beta("tq") == expect_beta
        assert all(c.divergence == pytest.approx(tvd) for c in out.checks)


class TestPyramid:
    def test_degenerate_thresholds_reproduce_greedy_target(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            d, q, t = (random_ngram(rng) for _ in range(3))
            pc = PyramidConfig(2, 5, 0.0, 0.0, TOP1, Mode.PSD_F)
            out = decode_pyramid(d, q, t, (1,), pc, GREEDY)
            assert out.tokens == decode_autoregressive(t, (1,), GREEDY).tokens

    def test_identical_models(self):
        m = TableModel(16, seed=9)
        out = decode_pyramid(m, m, m, (1, 2), PyramidConfig(2, 4, 0.0, 0.0, TOP1), GREEDY)
        assert out.beta("qd") == 1.0 and out.beta("tq") == 1.0
        assert out.tokens == decode_autoregressive(m, (1, 2), GREEDY).tokens

    def test_assisted_fallback_when_qualifier_disagrees(self):
        q = TableModel(12, seed=3)
        d = RolledModel(q)
        t = TableModel(12, seed=3, logit_scale=5.0)
        pc = PyramidConfig(2, 4, tau_t=1.0, mode=Mode.PSD_A)
        out = decode_pyramid(d, q, t, (0,), pc, DecodeConfig(max_new_tokens=40, greedy=True))
        assert out.beta("qd") == 0.0
        blocks = [r for r in out.records if r.stage is not Stage.TARGET]
        assert blocks and all(r.stage is Stage.FALLBACK for r in blocks)
        for r in blocks:
            ctx = (0, *out.tokens[:r.position])
            assert r.token == int(np.argmax(q.next_distribution(ctx)))
        assert out.counters["tq"].proposed > 0

    def test_trace_miss_propagates(self, tmp_path):
        m = TableModel(4, seed=1)
        path = tmp_path / "t.jsonl"
        trace_record(m, [(0,)], path)
        tr = trace_replay_open(path)
        with pytest.raises(TraceMiss):
            decode_pyramid(m, m, tr, (0,), PyramidConfig(), DecodeConfig(max_new_tokens=8))

    def test_vocab_mismatch(self):
        with pytest.raises(InvalidArgument):
            decode_pyramid(TableModel(4), TableModel(5), TableModel(4), (), PyramidConfig(), GREEDY)

    @pytest.mark.parametrize("kw", [dict(l_d=0), dict(l_q=0), dict(tau_t=-0.1), dict(tau_q=-0.1)])
    def test_config_validation(self, kw):
        with pytest.raises(InvalidArgument):
            PyramidConfig(**kw)

    def test_assisted_ignores_tau_q(self, family):
        d, q, t = family
        a = decode_pyramid(d, q, t, (1,), PyramidConfig(2, 4, -5.0, 0.3, mode="psd_a"), DecodeConfig(max_new_tokens=30))
        b = decode_pyramid(d, q, t, (1,), PyramidConfig(2, 4, 0.9, 0.3, mode="psd_a"), DecodeConfig(max_new_tokens=30))
        assert a.tokens == b.tokens

    def test_block_never_exceeds_lq(self, family):
        d, q, t = family
        pc = PyramidConfig(4, 5, 0.5, 0.5)
        out = decode_pyramid(d, q, t, (1,), pc, DecodeConfig(max_new_tokens=200, seed=3))
        assert all(b <= 5 for b, _ in out.rounds["tq"])
        assert all(b == 5 for b, _ in out.rounds["tq"][:-1])


def _all_outcomes(family):
    d, q, t = family
    cfg = DecodeConfig(max_new_tokens=60, seed=4)
    yield decode_autoregressive(t, (1,), cfg)
    yield decode_sd(d, t, (1,), 3, "stochastic", cfg)
    yield decode_sd(d, t, (1,), 3, "greedy_match", cfg)
    yield decode_fsd(d, t, (1,), 3, 0.3, TVD, cfg)
    for mode in ("psd_f", "psd_a"):
        for taus in ((0.1, 0.2), (0.3, 0.4), (0.5, 0.5)):
            yield decode_pyramid(d, q, t, (1,), PyramidConfig(2, 5, *taus, mode=mode), cfg)


def test_bookkeeping_invariants(family):
    for out in _all_outcomes(family):
        assert [r.position for r in out.records] == list(range(len(out.tokens)))
        assert [r.token for r in out.records] == out.tokens
        assert len(out.tokens) <= 60
        for stage, c in out.counters.items():
            checks = [x for x in out.checks if x.stage == stage]
            assert c.accepted == sum(x.accepted for x in checks)
            assert c.proposed == sum(p for p, _ in out.rounds[stage])
        for r in out.records:
            if r.accepted:
                assert r.stage in (Stage.DRAFT, Stage.QUALIFIER)
            if r.stage in (Stage.TARGET, Stage.FALLBACK):
                assert not r.accepted
        times = [r.sim_time for r in out.records]
        assert times == sorted(times)


def test_clock_conservation(family):
    for out in _all_outcomes(family):
        expected = math.fsum(n * out.latency[r] for r, n in sorted(out.calls.items()))
        assert out.sim_elapsed == pytest.approx(expected, rel=1e-15)


def test_replay_is_bit_identical(family):
    a = list(_all_outcomes(family))
    b = list(_all_outcomes(family))
    for x, y in zip(a, b):
        assert x.records == y.records
        assert x.checks == y.checks


def test_acceptance_monotone_in_tau(family):
    d, q, t = family
    out = decode_pyramid(d, q, t, (1,), PyramidConfig(2, 5, 0.3, 0.4), DecodeConfig(max_new_tokens=200, seed=1))
    for stage in ("qd", "tq"):
        divs = [c.divergence for c in out.checks if c.stage == stage]
        counts = [sum(x <= tau for x in divs) for tau in np.linspace(0, 1, 11)]
        assert counts == sorted(counts)
