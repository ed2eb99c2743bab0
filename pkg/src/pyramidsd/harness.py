"""Simulated-clock runs, grid sweeps and CSV/JSON reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Sequence

from .analytics import analytical_speed
from .core import DecodeConfig, SimClock, elapsed_for
from .decoding import (
    DecodeOutcome,
    Mode,
    PyramidConfig,
    SDVariant,
    decode_autoregressive,
    decode_fsd,
    decode_pyramid,
    decode_sd,
)
from .divergence import DivergenceKind
from .errors import InvalidArgument, PyramidError, UndefinedRate
from .models.base import ModelBackend
from .models.specs import build_backend

__all__ = [
    "CSV_COLUMNS",
    "SimClock",
    "SweepGrid",
    "SweepResult",
    "SweepRow",
    "emit_report",
    "load_grid",
    "load_report",
    "run_sweep",
    "simulate_run",
]

SWEEP_METHODS = ("ar", "sd", "fsd", "psd_a", "psd_f")
ROLES_FOR = {
    "ar": ("target",),
    "sd": ("draft", "target"),
    "fsd": ("draft", "target"),
    "psd_a": ("draft", "qualifier", "target"),
    "psd_f": ("draft", "qualifier", "target"),
}
CSV_COLUMNS = ("method", "tau_q", "tau_t", "l_d", "l_q", "seed", "tokens", "sim_tok_s",
               "analytical_tok_s", "beta_qd", "beta_tq", "calls_d", "calls_q", "calls_t")


def run_decoder(method: str, backends: dict, prompt, params: dict, cfg: DecodeConfig,
                clock: Optional[SimClock] = None) -> DecodeOutcome:
    kind = DivergenceKind.parse(params.get("div_kind", "total_variation"))
    if method == "ar":
        return decode_autoregressive(backends["target"], prompt, cfg, clock)
    if method == "sd":
        variant = params.get("variant") or (SDVariant.GREEDY_MATCH if cfg.greedy else SDVariant.STOCHASTIC)
        return decode_sd(backends["draft"], backends["target"], prompt, params["l_d"], variant, cfg, clock)
    if method == "fsd":
        return decode_fsd(backends["draft"], backends["target"], prompt, params["l_d"], params["tau_t"],
                          kind, cfg, clock)
    if method in ("psd_f", "psd_a"):
        pc = PyramidConfig(params["l_d"], params["l_q"], params.get("tau_q") or 0.0, params["tau_t"], kind,
                           Mode(method))
        return decode_pyramid(backends["draft"], backends["qualifier"], backends["target"], prompt, pc, cfg, clock)
    raise InvalidArgument(f"unknown method {method!r}; expected one of {SWEEP_METHODS}")


def simulate_run(method: str, backends: dict, params: dict, cfg: DecodeConfig,
                 clock: Optional[SimClock] = None, prompt: Sequence[int] = ()) -> tuple:
    """Decode once on the simulated clock; returns (outcome, committed tokens per simulated second)."""
    for role in ROLES_FOR.get(method, ()):
        if role not in backends:
            raise InvalidArgument(f"method {method!r} needs a {role} backend")
    out = run_decoder(method, backends, prompt, params, cfg, clock)
    if out.sim_elapsed <= 0:
        raise UndefinedRate("no simulated time elapsed; are the backends latency-wrapped?")
    return out, len(out.tokens) / out.sim_elapsed


@dataclass(frozen=True)
class SweepConfig:
    method: str
    tau_q: Optional[float] = None
    tau_t: Optional[float] = None
    l_d: Optional[int] = None
    l_q: Optional[int] = None

    def params(self, div_kind: str) -> dict:
        p = {k: v for k, v in asdict(self).items() if k != "method" and v is not None}
        p["div_kind"] = div_kind
        return p

    def sort_key(self):
        def k(v):
            return (0, -1.0) if v is None else (1, v)
        return (self.method, k(self.tau_t), k(self.tau_q), k(self.l_q), k(self.l_d))


@dataclass
class SweepGrid:
    methods: Sequence[str]
    tau_q_values: Sequence[float]
    tau_t_values: Sequence[float]
    l_d_values: Sequence[int]
    l_q_values: Sequence[int]
    seeds: Sequence[int]
    prompts: Sequence[Sequence[int]]
    backends: dict  # role -> ModelBackend or spec string
    decode: DecodeConfig = DecodeConfig(max_new_tokens=128)
    div_kind: str = "total_variation"
    nested_tau: bool = True  # psd_f: only tau_q <= tau_t
    ld_le_lq: bool = True

    def __post_init__(self):
        for name in ("methods", "seeds", "prompts"):
            if not getattr(self, name):
                raise InvalidArgument(f"sweep grid needs a nonempty {name} list")
        bad = set(self.methods) - set(SWEEP_METHODS)
        if bad:
            raise InvalidArgument(f"unknown sweep methods {sorted(bad)}")
        needs = {"fsd": ("tau_t_values", "l_d_values"), "sd": ("l_d_values",),
                 "psd_f": ("tau_q_values", "tau_t_values", "l_d_values", "l_q_values"),
                 "psd_a": ("tau_t_values", "l_d_values", "l_q_values")}
        for m in self.methods:
            for name in needs.get(m, ()):
                if not getattr(self, name):
                    raise InvalidArgument(f"method {m!r} needs a nonempty {name} list")
        self.div_kind = str(DivergenceKind.parse(self.div_kind))

    def ell_pairs(self) -> list:
        return [(d, q) for d in self.l_d_values for q in self.l_q_values if not self.ld_le_lq or d <= q]

    def tau_pairs(self) -> list:
        return [(q, t) for t in self.tau_t_values for q in self.tau_q_values if not self.nested_tau or q <= t]

    def configs(self) -> list:
        out = []
        for m in self.methods:
            if m == "ar":
                out.append(SweepConfig("ar"))
            elif m == "sd":
                out += [SweepConfig("sd", l_d=d) for d in self.l_d_values]
            elif m == "fsd":
                out += [SweepConfig("fsd", tau_t=t, l_d=d) for t in self.tau_t_values for d in self.l_d_values]
            elif m == "psd_a":
                out += [SweepConfig("psd_a", tau_t=t, l_d=d, l_q=q)
                        for t in self.tau_t_values for d, q in self.ell_pairs()]
            else:
                out += [SweepConfig("psd_f", tau_q=tq, tau_t=tt, l_d=d, l_q=q)
                        for tq, tt in self.tau_pairs() for d, q in self.ell_pairs()]
        return sorted(set(out), key=SweepConfig.sort_key)

    def resolved_backends(self) -> dict:
        return {role: build_backend(b) if isinstance(b, str) else b for role, b in self.backends.items()}


@dataclass
class SweepRow:
    method: str
    tau_q: Optional[float]
    tau_t: Optional[float]
    l_d: Optional[int]
    l_q: Optional[int]
    seed: int
    tokens: Optional[int] = None
    sim_tok_s: Optional[float] = None
    analytical_tok_s: Optional[float] = None
    beta_qd: Optional[float] = None
    beta_tq: Optional[float] = None
    calls_d: Optional[int] = None
    calls_q: Optional[int] = None
    calls_t: Optional[int] = None
    round_beta_qd: Optional[float] = None
    round_beta_tq: Optional[float] = None
    sim_seconds: Optional[float] = None
    error: Optional[str] = None

    @property
    def config(self) -> SweepConfig:
        return SweepConfig(self.method, self.tau_q, self.tau_t, self.l_d, self.l_q)

    def sort_key(self):
        return (*self.config.sort_key(), self.seed)


def cell_seed(cfg: SweepConfig, seed: int, prompt_index: int) -> int:
    """Stable 64-bit seed for one (config, seed, prompt) cell."""
    key = repr((cfg.method, cfg.tau_q, cfg.tau_t, cfg.l_d, cfg.l_q, int(seed), prompt_index)).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def _pooled_beta(outcomes, stage, ell) -> Optional[float]:
    rounds = [r for o in outcomes for r in o.rounds.get(stage, ())]
    if not rounds or ell is None:
        return None
    return sum(y for _, y in rounds) / (len(rounds) * (ell + 1))


def _token_beta(outcomes, stage) -> Optional[float]:
    prop = sum(o.counters[stage].proposed for o in outcomes if stage in o.counters)
    acc = sum(o.counters[stage].accepted for o in outcomes if stage in o.counters)
    return acc / prop if prop else None


def run_cell(grid: SweepGrid, backends: dict, cfg: SweepConfig, seed: int) -> SweepRow:
    row = SweepRow(cfg.method, cfg.tau_q, cfg.tau_t, cfg.l_d, cfg.l_q, int(seed))
    try:
        params = cfg.params(grid.div_kind)
        outcomes = []
        for i, prompt in enumerate(grid.prompts):
            dc = replace(grid.decode, seed=cell_seed(cfg, seed, i))
            out, _ = simulate_run(cfg.method, backends, params, dc, SimClock(), prompt)
            outcomes.append(out)
        tally: dict = {}
        calls = {"draft": 0, "qualifier": 0, "target": 0}
        for o in outcomes:
            for role, n in o.calls.items():
                calls[role] += n
                key = (role, o.latency[role])
                tally[key] = tally.get(key, 0) + n
        elapsed = elapsed_for(tally)
        row.tokens = sum(len(o.tokens) for o in outcomes)
        row.sim_seconds = elapsed
        row.sim_tok_s = row.tokens / elapsed
        row.calls_d, row.calls_q, row.calls_t = calls["draft"], calls["qualifier"], calls["target"]
        row.beta_qd = _token_beta(outcomes, "qd")
        row.beta_tq = _token_beta(outcomes, "tq")
        row.round_beta_qd = _pooled_beta(outcomes, "qd", cfg.l_d)
        row.round_beta_tq = _pooled_beta(outcomes, "tq", cfg.l_q if cfg.l_q is not None else cfg.l_d)
        speeds = {r: 1.0 / backends[r].latency_per_call for r in ROLES_FOR[cfg.method]}
        row.analytical_tok_s = analytical_speed(
            cfg.method, params, {"qd": row.round_beta_qd, "tq": row.round_beta_tq}, speeds)
    except (PyramidError, ValueError, KeyError, ZeroDivisionError) as exc:
        row = SweepRow(cfg.method, cfg.tau_q, cfg.tau_t, cfg.l_d, cfg.l_q, int(seed),
                       error=f"{type(exc).__name__}: {exc}")
    return row


_WORKER: dict = {}


def _init_worker(grid):
    _WORKER["grid"] = grid
    _WORKER["backends"] = grid.resolved_backends()


def _run_task(task):
    cfg, seed = task
    return run_cell(_WORKER["grid"], _WORKER["backends"], cfg, seed)


def default_workers() -> int:
    return int(os.environ.get("PYRAMIDSD_WORKERS", "1"))


@dataclass
class SweepResult:
    rows: list
    meta: dict = field(default_factory=dict)

    def ok_rows(self) -> list:
        return [r for r in self.rows if r.error is None]

    def aggregates(self) -> list:
        groups: dict = {}
        for r in self.rows:
            groups.setdefault(r.config, []).append(r)
        out = []
        for cfg in sorted(groups, key=SweepConfig.sort_key):
            rows = groups[cfg]
            ok = [r for r in rows if r.error is None]
            agg = {**asdict(cfg), "n": len(ok), "skipped": len(rows) - len(ok)}
            for name in ("sim_tok_s", "analytical_tok_s", "beta_qd", "beta_tq"):
                vals = [getattr(r, name) for r in ok if getattr(r, name) is not None]
                agg[f"{name}_mean"] = _mean(vals)
                agg[f"{name}_std"] = _std(vals)
            out.append(agg)
        return out

    def best(self) -> dict:
        """Fastest configuration per method, by seed-mean and by single row."""
        out = {}
        for agg in self.aggregates():
            m = agg["method"]
            if agg["sim_tok_s_mean"] is None:
                continue
            cur = out.setdefault(m, {"best_mean": None, "best_row": None})
            if cur["best_mean"] is None or agg["sim_tok_s_mean"] > cur["best_mean"]["sim_tok_s_mean"]:
                cur["best_mean"] = agg
        for r in self.ok_rows():
            cur = out.get(r.method)
            if cur is not None and (cur["best_row"] is None or r.sim_tok_s > cur["best_row"]["sim_tok_s"]):
                cur["best_row"] = asdict(r)
        return out

    def best_over_ell(self) -> list:
        """Per (method, tau_q, tau_t): the fastest (l_d, l_q) by seed-mean."""
        best: dict = {}
        for agg in self.aggregates():
            if agg["sim_tok_s_mean"] is None:
                continue
            key = (agg["method"], agg["tau_q"], agg["tau_t"])
            if key not in best or agg["sim_tok_s_mean"] > best[key]["sim_tok_s_mean"]:
                best[key] = agg
        return list(best.values())

    def to_json(self) -> str:
        return json.dumps({
            "meta": self.meta,
            "columns": list(CSV_COLUMNS),
            "rows": [asdict(r) for r in self.rows],
            "aggregates": self.aggregates(),
            "best_over_ell": self.best_over_ell(),
        }, indent=1, sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "SweepResult":
        data = json.loads(text)
        names = {f.name for f in fields(SweepRow)}
        rows = [SweepRow(**{k: v for k, v in r.items() if k in names}) for r in data["rows"]]
        return cls(rows, data.get("meta", {}))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(c, getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()


def _mean(vals):
    return math.fsum(vals) / len(vals) if vals else None


def _std(vals):
    if not vals:
        return None
    if len(vals) == 1:
        return 0.0
    m = _mean(vals)
    return math.sqrt(math.fsum((v - m) ** 2 for v in vals) / (len(vals) - 1))


def _fmt(col: str, v) -> str:
    if v is None:
        return ""
    if col in ("sim_tok_s", "analytical_tok_s"):
        return f"{v:.2f}"
    if col in ("beta_qd", "beta_tq"):
        return f"{v:.4f}"
    if col in ("tau_q", "tau_t"):
        return f"{v:g}"
    return str(v)


def run_sweep(grid: SweepGrid, worker_count: Optional[int] = None) -> SweepResult:
    """Run every (config, seed) cell once; row order is independent of ``worker_count``."""
    workers = default_workers() if worker_count is None else int(worker_count)
    if workers < 1:
        raise InvalidArgument("worker_count must be >= 1")
    tasks = [(cfg, s) for cfg in grid.configs() for s in grid.seeds]
    if workers == 1 or len(tasks) == 1:
        backends = grid.resolved_backends()
        rows = [run_cell(grid, backends, cfg, s) for cfg, s in tasks]
    else:
        chunk = max(1, len(tasks) // (workers * 4))
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(grid,)) as ex:
            rows = list(ex.map(_run_task, tasks, chunksize=chunk))
    rows.sort(key=SweepRow.sort_key)
    meta = {
        "div_kind": grid.div_kind,
        "decode": asdict(grid.decode),
        "nested_tau": grid.nested_tau,
        "ld_le_lq": grid.ld_le_lq,
        "backends": {r: (b if isinstance(b, str) else repr(b)) for r, b in grid.backends.items()},
        "prompts": len(grid.prompts),
    }
    return SweepResult(rows, meta)


def emit_report(res: SweepResult, fmt: str, path) -> int:
    if not res.rows:
        raise InvalidArgument("cannot write an empty sweep result")
    if fmt == "csv":
        text = res.to_csv()
    elif fmt == "json":
        text = res.to_json()
    else:
        raise InvalidArgument(f"report format must be csv or json, got {fmt!r}")
    data = text.encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise PyramidError(f"cannot write report {os.fspath(path)}: {exc}") from exc
    return len(data)


def load_report(path) -> SweepResult:
    with open(path, encoding="utf-8") as fh:
        return SweepResult.from_json(fh.read())


def _read_prompts(path) -> list:
    try:
        with open(path, encoding="utf-8") as fh:
            return [tuple(int(t) for t in ln.split()) for ln in fh if ln.strip()]
    except (OSError, ValueError) as exc:
        raise InvalidArgument(f"cannot read prompt file {path}: {exc}") from exc


GRID_KEYS = {"methods", "tau_q", "tau_t", "l_d", "l_q", "seeds", "prompts", "prompt_file",
             "backends", "decode", "div_kind", "nested_tau", "ld_le_lq"}


def load_grid(path) -> SweepGrid:
    """Read a JSON grid description.

    Keys: ``methods``, ``tau_q``, ``tau_t``, ``l_d``, ``l_q``, ``seeds``,
    ``prompts`` (list of id lists) or ``prompt_file`` (one prompt per line,
    relative to the config), ``backends`` (role -> backend spec string),
    optional ``decode`` (DecodeConfig fields), ``div_kind``, ``nested_tau``
    and ``ld_le_lq``.
    """
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InvalidArgument(f"cannot read grid config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"grid config {path} is not valid JSON: {exc}") from exc
    unknown = set(raw) - GRID_KEYS
    if unknown:
        raise InvalidArgument(f"unknown keys in grid config {path}: {sorted(unknown)}")
    if "prompt_file" in raw:
        pf = raw["prompt_file"]
        if not os.path.isabs(pf):
            pf = os.path.join(os.path.dirname(os.path.abspath(path)), pf)
        prompts = _read_prompts(pf)
    else:
        prompts = [tuple(p) for p in raw.get("prompts", [])]
    try:
        decode = DecodeConfig(**raw.get("decode", {}))
    except TypeError as exc:
        raise InvalidArgument(f"bad decode section in {path}: {exc}") from exc
    backends = raw.get("backends", {})
    if not isinstance(backends, dict) or not backends:
        raise InvalidArgument(f"grid config {path} needs a backends mapping")
    return SweepGrid(
        methods=list(raw.get("methods", [])),
        tau_q_values=[float(x) for x in raw.get("tau_q", [])],
        tau_t_values=[float(x) for x in raw.get("tau_t", [])],
        l_d_values=[int(x) for x in raw.get("l_d", [])],
        l_q_values=[int(x) for x in raw.get("l_q", [])],
        seeds=[int(x) for x in raw.get("seeds", [0])],
        prompts=prompts,
        backends=dict(backends),
        decode=decode,
        div_kind=raw.get("div_kind", "total_variation"),
        nested_tau=bool(raw.get("nested_tau", True)),
        ld_le_lq=bool(raw.get("ld_le_lq", True)),
    )
