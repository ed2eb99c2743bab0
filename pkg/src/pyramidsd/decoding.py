"""Autoregressive, speculative, fuzzy-speculative and pyramid decoders.

All decoders share one bookkeeping scheme:

* ``records`` holds exactly one :class:`StepRecord` per committed token.
* ``checks`` holds one :class:`Check` per proposal a verifier examined,
  including the rejected one that ends a round.
* ``counters`` and ``rounds`` are keyed by verification stage: ``"qd"``
  (qualifier checks draft) and ``"tq"`` (target checks its proposer; for the
  two-model decoders the proposer is the draft, i.e. the draft-target rate).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .core import DecodeConfig, SimClock, StageStreams, Stage, StepRecord, argmax, rescale, sample
from .divergence import TOP1, DivergenceKind, divergence
from .errors import ContextOverflow, InvalidArgument, UndefinedRate
from .models.base import ModelBackend, check_shared_vocab


class Mode(str, enum.Enum):
    PSD_F = "psd_f"
    PSD_A = "psd_a"


class SDVariant(str, enum.Enum):
    GREEDY_MATCH = "greedy_match"
    STOCHASTIC = "stochastic"


@dataclass(frozen=True)
class PyramidConfig:
    l_d: int = 2
    l_q: int = 4
    tau_q: float = 0.3
    tau_t: float = 0.4
    div_kind: DivergenceKind = DivergenceKind()
    mode: Mode = Mode.PSD_F

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "div_kind", DivergenceKind.parse(self.div_kind))
        if self.l_d < 1 or self.l_q < 1:
            raise InvalidArgument(f"speculative lengths must be >= 1 (l_d={self.l_d}, l_q={self.l_q})")
        if not self.tau_t >= 0:
            raise InvalidArgument(f"tau_t must be >= 0, got {self.tau_t}")
        if self.mode is Mode.PSD_F and not self.tau_q >= 0:
            raise InvalidArgument(f"tau_q must be >= 0, got {self.tau_q}")


class Check(NamedTuple):
    stage: str
    position: int
    token: int
    divergence: Optional[float]
    accepted: bool


@dataclass
class StageCounter:
    proposed: int = 0
    accepted: int = 0

    @property
    def rate(self) -> float:
        if self.proposed == 0:
            raise UndefinedRate("no proposals at this stage")
        return self.accepted / self.proposed


@dataclass
class DecodeOutcome:
    method: str
    prompt: tuple
    tokens: list = field(default_factory=list)
    records: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    rounds: dict = field(default_factory=dict)  # stage -> [(proposed, committed)]
    calls: dict = field(default_factory=dict)
    latency: dict = field(default_factory=dict)
    sim_elapsed: float = 0.0
    params: dict = field(default_factory=dict)

    def beta(self, stage: str) -> float:
        """Per-token acceptance rate: accepted / proposed."""
        c = self.counters.get(stage)
        if c is None or c.proposed == 0:
            raise UndefinedRate(f"no proposals recorded for stage {stage!r}")
        return c.accepted / c.proposed

    def round_beta(self, stage: str, ell: Optional[int] = None) -> float:
        """Mean tokens yielded per round divided by (ell + 1)."""
        rs = self.rounds.get(stage)
        if not rs:
            raise UndefinedRate(f"no rounds recorded for stage {stage!r}")
        if ell is None:
            ell = self.params["l_q" if stage == "tq" and "l_q" in self.params else "l_d"]
        return sum(y for _, y in rs) / (len(rs) * (ell + 1))

    def text(self, vocab=None) -> str:
        return vocab.decode(self.tokens) if vocab is not None else " ".join(map(str, self.tokens))


class VerifyResult(NamedTuple):
    accepted: int
    token: Optional[int]
    divergences: list


def verify_block(proposed: Sequence[int], proposer_dists: Sequence, verifier_dists: Sequence,
                 tau: float, kind: DivergenceKind, correction: str = "argmax",
                 rng: Optional[np.random.Generator] = None, bonus_dist=None) -> VerifyResult:
    """Scan proposals left to right; accept while Div(verifier, proposer) <= tau.

    On the first rejection the correction token comes from that position's
    verifier distribution. If every proposal passes and ``bonus_dist`` is
    given, the extra token is drawn from it instead.
    """
    n = len(proposed)
    if n < 1 or len(proposer_dists) != n or len(verifier_dists) != n:
        raise InvalidArgument(
            f"verify_block needs equal nonempty lists, got {n}/{len(proposer_dists)}/{len(verifier_dists)}")
    if correction not in ("argmax", "sample"):
        raise InvalidArgument(f"correction must be 'argmax' or 'sample', got {correction!r}")

    def pick(p):
        if correction == "argmax":
            return argmax(p)
        if rng is None:
            raise InvalidArgument("sampled corrections need an rng")
        return sample(p, rng)

    divs = []
    for i in range(n):
        d = divergence(kind, verifier_dists[i], proposer_dists[i])
        divs.append(d)
        if not d <= tau:
            return VerifyResult(i, pick(verifier_dists[i]), divs)
    return VerifyResult(n, None if bonus_dist is None else pick(bonus_dist), divs)


def verify_block_stochastic(proposed: Sequence[int], proposer_dists: Sequence, verifier_dists: Sequence,
                            rng: np.random.Generator, bonus_dist=None) -> VerifyResult:
    """Lossless rule: accept x with prob min(1, p_v(x)/p_p(x)), else resample the residual."""
    n = len(proposed)
    if n < 1 or len(proposer_dists) != n or len(verifier_dists) != n:
        raise InvalidArgument("verify_block_stochastic needs equal nonempty lists")
    for i, x in enumerate(proposed):
        pv, pp = verifier_dists[i], proposer_dists[i]
        u = rng.random()
        if u * pp[x] < pv[x]:  # u < pv/pp without dividing by zero
            continue
        resid = np.maximum(pv - pp, 0.0)
        s = resid.sum()
        tok = sample(resid / s, rng) if s > 0 else sample(pv, rng)
        return VerifyResult(i, tok, [None] * (i + 1))
    tok = None if bonus_dist is None else sample(bonus_dist, rng)
    return VerifyResult(n, tok, [None] * n)


class _Run:
    """Per-decode state: budget, clock charging, random streams, output."""

    def __init__(self, method: str, roles: dict, prompt, cfg: DecodeConfig, clock: Optional[SimClock], params=None):
        self.cfg = cfg
        self.roles = roles
        check_shared_vocab(*roles.values())
        vocab = next(iter(roles.values())).vocab_size
        prompt = tuple(int(t) for t in prompt)
        for t in prompt:
            if not 0 <= t < vocab:
                raise InvalidArgument(f"prompt token {t} outside vocabulary of size {vocab}")
        if len(prompt) + cfg.max_new_tokens > cfg.max_context:
            raise ContextOverflow(
                f"prompt length {len(prompt)} + max_new_tokens {cfg.max_new_tokens} exceeds max_context {cfg.max_context}")
        self.clock = clock if clock is not None else SimClock()
        self._t0 = self.clock.now
        self.streams = StageStreams(cfg.seed)
        self.out = DecodeOutcome(method, prompt, params=dict(params or {}))
        self.out.calls = {r: 0 for r in roles}
        self.out.latency = {r: m.latency_per_call for r, m in roles.items()}
        self.ctx = list(prompt)
        self.done = cfg.max_new_tokens == 0

    @property
    def remaining(self) -> int:
        return self.cfg.max_new_tokens - len(self.out.tokens)

    def dists(self, role: str, contexts) -> list:
        """One model invocation covering ``contexts``."""
        m = self.roles[role]
        self.out.calls[role] += 1
        self.clock.charge(m.latency_per_call, role)
        t = self.cfg.temperature
        return [rescale(np.asarray(p), t) for p in m.forward(contexts)]

    def pick(self, p, role: str) -> int:
        return argmax(p) if self.cfg.greedy else sample(p, self.streams[role])

    @property
    def correction(self) -> str:
        return "argmax" if self.cfg.greedy else "sample"

    def counter(self, stage: str) -> StageCounter:
        return self.out.counters.setdefault(stage, StageCounter())

    def check(self, stage, position, token, div, accepted):
        self.out.checks.append(Check(stage, position, int(token), div, accepted))
        c = self.counter(stage)
        if accepted:
            c.accepted += 1

    def commit(self, token: int, stage: Stage, accepted: bool, div_q=None, div_t=None) -> bool:
        """Append a token; returns False once the run is finished."""
        if self.done:
            return False
        pos = len(self.out.tokens)
        self.out.tokens.append(int(token))
        self.ctx.append(int(token))
        self.out.records.append(StepRecord(pos, int(token), stage, div_q, div_t, accepted,
                                           self.clock.now - self._t0))
        if self.remaining <= 0 or (self.cfg.eos_token is not None and token == self.cfg.eos_token):
            self.done = True
        return not self.done

    def finish(self) -> DecodeOutcome:
        self.out.sim_elapsed = self.clock.now - self._t0
        return self.out


def decode_autoregressive(model: ModelBackend, prompt, cfg: DecodeConfig,
                          clock: Optional[SimClock] = None) -> DecodeOutcome:
    run = _Run("ar", {"target": model}, prompt, cfg, clock)
    while not run.done:
        p = run.dists("target", [tuple(run.ctx)])[0]
        run.commit(run.pick(p, "target"), Stage.TARGET, False)
    return run.finish()


def _draft(run: _Run, base: list, k: int) -> tuple:
    props, dists = [], []
    for _ in range(k):
        p = run.dists("draft", [tuple(base + props)])[0]
        props.append(run.pick(p, "draft"))
        dists.append(p)
    return props, dists


def _speculate(run: _Run, l_d: int, verify) -> None:
    """Rounds of ``l_d`` draft proposals, each closed by one target pass."""
    counter = run.counter("tq")
    rounds = run.out.rounds.setdefault("tq", [])
    while not run.done:
        k = min(l_d, run.remaining)
        base = list(run.ctx)
        pos0 = len(run.out.tokens)
        props, pds = _draft(run, base, k)
        pts = run.dists("target", [tuple(base + props[:j]) for j in range(k + 1)])
        res = verify(props, pds, pts[:k], pts[k])
        counter.proposed += k
        for i in range(len(res.divergences)):
            run.check("tq", pos0 + i, props[i], res.divergences[i], i < res.accepted)
        for i in range(res.accepted):
            if not run.commit(props[i], Stage.DRAFT, True, div_t=res.divergences[i]):
                break
        if res.token is not None:
            rejected = res.accepted < k
            run.commit(res.token, Stage.TARGET, False,
                       div_t=res.divergences[res.accepted] if rejected else None)
        rounds.append((k, len(run.out.tokens) - pos0))


def decode_sd(draft: ModelBackend, target: ModelBackend, prompt, l_d: int,
              variant: SDVariant | str = SDVariant.STOCHASTIC, cfg: DecodeConfig = DecodeConfig(),
              clock: Optional[SimClock] = None) -> DecodeOutcome:
    """Standard speculative decoding.

    ``greedy_match`` accepts while the draft's top prediction matches the
    target's; ``stochastic`` uses the min(1, p_T/p_D) rule with residual
    resampling, which leaves the committed-token distribution equal to the
    target's.
    """
    variant = SDVariant(variant)
    if l_d < 1:
        raise InvalidArgument(f"l_d must be >= 1, got {l_d}")
    run = _Run("sd", {"draft": draft, "target": target}, prompt, cfg, clock,
               params={"l_d": l_d, "variant": variant.value})
    rng = run.streams["target"]
    if variant is SDVariant.STOCHASTIC:
        def verify(props, pds, pts, bonus):
            return verify_block_stochastic(props, pds, pts, rng, bonus)
    else:
        corr = run.correction

        def verify(props, pds, pts, bonus):
            return verify_block(props, pds, pts, 0.0, TOP1, corr, rng, bonus)
    _speculate(run, l_d, verify)
    return run.finish()


def decode_fsd(draft: ModelBackend, target: ModelBackend, prompt, l_d: int, tau_t: float,
               kind: DivergenceKind | str = "total_variation", cfg: DecodeConfig = DecodeConfig(),
               clock: Optional[SimClock] = None) -> DecodeOutcome:
    """Fuzzy speculative decoding: accept while Div(target, draft) <= tau_t."""
    kind = DivergenceKind.parse(kind)
    if l_d < 1:
        raise InvalidArgument(f"l_d must be >= 1, got {l_d}")
    if not tau_t >= 0:
        raise InvalidArgument(f"tau_t must be >= 0, got {tau_t}")
    run = _Run("fsd", {"draft": draft, "target": target}, prompt, cfg, clock,
               params={"l_d": l_d, "tau_t": tau_t, "div_kind": str(kind)})
    rng, corr = run.streams["target"], run.correction

    def verify(props, pds, pts, bonus):
        return verify_block(props, pds, pts, tau_t, kind, corr, rng, bonus)
    _speculate(run, l_d, verify)
    return run.finish()


def decode_pyramid(draft: ModelBackend, qualifier: ModelBackend, target: ModelBackend, prompt,
                   pc: PyramidConfig = PyramidConfig(), cfg: DecodeConfig = DecodeConfig(),
                   clock: Optional[SimClock] = None) -> DecodeOutcome:
    """Three-model pyramid decoding (fuzzy ``psd_f`` or assisted ``psd_a``).

    Inner rounds: the draft proposes ``l_d`` tokens and the qualifier checks
    them in one pass, adding its correction or bonus token. Rounds repeat
    until the block holds ``l_q`` tokens (overflow from the last round is
    dropped). The target then checks the block against the qualifier's
    distributions in one pass. After a target rejection the rest of the
    block is discarded and drafting restarts from the corrected context.
    """
    assisted = pc.mode is Mode.PSD_A
    run = _Run(pc.mode.value, {"draft": draft, "qualifier": qualifier, "target": target}, prompt, cfg, clock,
               params={"l_d": pc.l_d, "l_q": pc.l_q, "tau_q": None if assisted else pc.tau_q,
                       "tau_t": pc.tau_t, "div_kind": str(pc.div_kind)})
    q_kind, q_tau = (TOP1, 0.0) if assisted else (pc.div_kind, pc.tau_q)
    q_rng, t_rng, corr = run.streams["qualifier"], run.streams["target"], run.correction
    qd, tq = run.counter("qd"), run.counter("tq")
    qd_rounds = run.out.rounds.setdefault("qd", [])
    tq_rounds = run.out.rounds.setdefault("tq", [])
    l_d = pc.l_d

    while not run.done:
        cap = min(pc.l_q, run.remaining)
        base = list(run.ctx)
        pos0 = len(run.out.tokens)
        block: list = []
        meta: list = []  # (stage, div_q, accepted by qualifier stage)
        qdists: list = []

        while len(block) < cap:
            props, pds = _draft(run, base + block, l_d)
            pqs = run.dists("qualifier", [tuple(base + block + props[:j]) for j in range(l_d + 1)])
            res = verify_block(props, pds, pqs[:l_d], q_tau, q_kind, corr, q_rng, pqs[l_d])
            qd.proposed += l_d
            for i, d in enumerate(res.divergences):
                run.check("qd", pos0 + len(block) + i, props[i], d, i < res.accepted)
            new = [(props[i], pqs[i], Stage.DRAFT, res.divergences[i]) for i in range(res.accepted)]
            if res.accepted < l_d:
                stage = Stage.FALLBACK if assisted else Stage.QUALIFIER
                new.append((res.token, pqs[res.accepted], stage, res.divergences[res.accepted]))
            else:
                new.append((res.token, pqs[l_d], Stage.QUALIFIER, None))
            new = new[:cap - len(block)]
            qd_rounds.append((l_d, len(new)))
            for tok, pq, stage, dq in new:
                block.append(tok)
                qdists.append(pq)
                meta.append((stage, dq))

        b = len(block)
        pts = run.dists("target", [tuple(base + block[:j]) for j in range(b + 1)])
        res = verify_block(block, qdists, pts[:b], pc.tau_t, pc.div_kind, corr, t_rng, pts[b])
        tq.proposed += b
        for i, d in enumerate(res.divergences):
            run.check("tq", pos0 + i, block[i], d, i < res.accepted)
        for i in range(res.accepted):
            stage, dq = meta[i]
            if not run.commit(block[i], stage, stage is not Stage.FALLBACK, div_q=dq, div_t=res.divergences[i]):
                break
        rejected = res.accepted < b
        run.commit(res.token, Stage.TARGET, False, div_t=res.divergences[res.accepted] if rejected else None)
        tq_rounds.append((b, len(run.out.tokens) - pos0))
    return run.finish()


METHODS = ("ar", "sd", "fsd", "psd_f", "psd_a")
