"""Command-line driver.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
Standard output is ``key=value`` lines or tab-separated tables unless
``--pretty`` is given.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from typing import Optional, Sequence

from .analytics import behavior_summary, predicted_speed
from .core import DecodeConfig
from .errors import InvalidArgument, PyramidError
from .harness import default_workers, emit_report, load_grid, run_decoder, run_sweep
from .models.remote import serve_backend
from .models.specs import build_backend
from .models.trace import enumerate_contexts, read_trace, trace_record

log = logging.getLogger("pyramidsd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _tokens(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected whitespace-separated token ids, got {text!r}") from None


def _fmt(v) -> str:
    if v is None:
        return "na"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def _emit(out, pairs) -> None:
    for k, v in pairs:
        print(f"{k}={_fmt(v)}", file=out)


def _decode_config(a) -> DecodeConfig:
    return DecodeConfig(max_new_tokens=a.max_new_tokens, temperature=a.temperature, seed=a.seed,
                        eos_token=a.eos, greedy=a.greedy)


def cmd_run(a, out) -> int:
    if a.method in ("sd", "fsd", "psd_f", "psd_a") and a.draft is None:
        raise InvalidArgument(f"--draft is required for method {a.method}")
    if a.method in ("psd_f", "psd_a") and a.qualifier is None:
        raise InvalidArgument(f"--qualifier is required for method {a.method}")
    for flag in ("tau_q", "tau_t"):
        if getattr(a, flag) < 0:
            raise InvalidArgument(f"--{flag.replace('_', '-')} must be >= 0")
    for flag in ("ld", "lq"):
        if getattr(a, flag) < 1:
            raise InvalidArgument(f"--{flag} must be >= 1")
    cfg = _decode_config(a)
    backends = {"target": build_backend(a.target)}
    if a.draft:
        backends["draft"] = build_backend(a.draft)
    if a.qualifier:
        backends["qualifier"] = build_backend(a.qualifier)
    params = {"l_d": a.ld, "l_q": a.lq, "tau_q": a.tau_q, "tau_t": a.tau_t, "div_kind": a.div_kind}
    if a.method == "sd":
        params["variant"] = a.sd_variant or ("greedy_match" if a.greedy else "stochastic")

    o = run_decoder(a.method, backends, a.prompt, params, cfg)
    timed = o.sim_elapsed > 0
    pairs = [("method", o.method), ("prompt", " ".join(map(str, o.prompt))),
             ("tokens", " ".join(map(str, o.tokens))), ("n_tokens", len(o.tokens))]
    for stage in ("qd", "tq"):
        if stage in o.counters:
            pairs.append((f"beta_{stage}", o.beta(stage)))
            pairs.append((f"round_beta_{stage}", o.round_beta(stage)))
    pairs += [(f"calls_{r}", n) for r, n in o.calls.items()]
    pairs += [("sim_seconds", o.sim_elapsed if timed else None),
              ("sim_tok_s", len(o.tokens) / o.sim_elapsed if timed and o.tokens else None),
              ("analytical_tok_s", predicted_speed(o) if timed and o.tokens else None)]
    _emit(out, pairs)
    if a.steps_table:
        cols = ("position", "token", "stage", "div_q", "div_t", "accepted", "sim_time")
        if a.pretty:
            print("  ".join(f"{c:>9}" for c in cols), file=out)
        else:
            print("\t".join(cols), file=out)
        for r in o.records:
            vals = [r.position, r.token, r.stage.value, r.div_q, r.div_t, int(r.accepted), r.sim_time]
            cells = [_fmt(v) for v in vals]
            print(("  ".join(f"{c:>9}" for c in cells)) if a.pretty else "\t".join(cells), file=out)
    return 0


def cmd_sweep(a, out) -> int:
    grid = load_grid(a.config)
    res = run_sweep(grid, a.workers)
    fmt = a.format or ("json" if a.out.endswith(".json") else "csv")
    n = emit_report(res, fmt, a.out)
    errors = [r for r in res.rows if r.error]
    for r in errors:
        print(f"error: {r.method} tau_q={r.tau_q} tau_t={r.tau_t} l_d={r.l_d} l_q={r.l_q} "
              f"seed={r.seed}: {r.error}", file=sys.stderr)
    _emit(out, [("rows", len(res.rows)), ("errors", len(errors)), ("bytes", n), ("report", a.out)])
    print("method\tbest_tok_s\ttau_q\ttau_t\tl_d\tl_q\tbest_row_tok_s", file=out)
    for method, b in sorted(res.best().items()):
        m = b["best_mean"]
        print("\t".join([method, f"{m['sim_tok_s_mean']:.2f}", _fmt(m["tau_q"]), _fmt(m["tau_t"]),
                         _fmt(m["l_d"]), _fmt(m["l_q"]), f"{b['best_row']['sim_tok_s']:.2f}"]), file=out)
    return 0


def cmd_analyze(a, out) -> int:
    models = [build_backend(s) for s in a.model]
    prompts = list(a.prompt or [])
    if a.prompt_file:
        try:
            with open(a.prompt_file, encoding="utf-8") as fh:
                prompts += [_tokens(ln) for ln in fh if ln.strip()]
        except OSError as exc:
            raise InvalidArgument(f"cannot read prompt file {a.prompt_file}: {exc}") from exc
    if not prompts:
        raise InvalidArgument("give at least one --prompt or a --prompt-file")
    summary = behavior_summary(models, prompts, a.steps)
    if a.out:
        fmt = a.format or ("json" if a.out.endswith(".json") else "csv")
        text = summary.to_json() if fmt == "json" else summary.to_csv()
        with open(a.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print("model\tmean_entropy\tmean_confidence\tsteps", file=out)
    for m in summary.models:
        print(f"{m.model}\t{m.mean_entropy:.6f}\t{m.mean_confidence:.6f}\t{len(m.entropies)}", file=out)
    return 0


def cmd_trace_record(a, out) -> int:
    backend = build_backend(a.backend)
    prompts = a.prompt or [()]
    contexts = []
    for p in prompts:
        for c in enumerate_contexts(p, backend.vocab_size, a.depth):
            if c not in contexts:
                contexts.append(c)
    n = trace_record(backend, contexts, a.out)
    _emit(out, [("written", n), ("trace", a.out), ("model", backend.name), ("vocab_size", backend.vocab_size)])
    return 0


def cmd_trace_replay_check(a, out) -> int:
    try:
        header, table = read_trace(a.trace)
    except PyramidError as exc:
        _emit(out, [("valid", 0), ("trace", a.trace)])
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(out, [("valid", 1), ("trace", a.trace), ("model", header.get("model")),
                ("vocab_size", header["vocab_size"]), ("records", len(table))])
    return 0


def cmd_serve(a, out) -> int:
    backend = build_backend(a.backend)
    handle = serve_backend(backend, a.bind)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    _emit(out, [("serving", handle.url), ("model", backend.name), ("vocab_size", backend.vocab_size)])
    out.flush()
    try:
        handle.thread.join()
    except KeyboardInterrupt:
        pass
    finally:
        handle.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pyramidsd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="decode one prompt and print a summary")
    r.add_argument("--method", required=True, choices=("ar", "sd", "fsd", "psd_f", "psd_a"))
    r.add_argument("--target", required=True, help="backend spec, e.g. table:vocab=32,seed=1,latency=0.1")
    r.add_argument("--draft")
    r.add_argument("--qualifier")
    r.add_argument("--prompt", type=_tokens, default=())
    r.add_argument("--max-new-tokens", type=int, default=32)
    r.add_argument("--temperature", type=float, default=0.7)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--eos", type=int)
    r.add_argument("--greedy", action="store_true")
    r.add_argument("--ld", type=int, default=2)
    r.add_argument("--lq", type=int, default=4)
    r.add_argument("--tau-q", type=float, default=0.3)
    r.add_argument("--tau-t", type=float, default=0.4)
    r.add_argument("--div-kind", default="total_variation")
    r.add_argument("--sd-variant", choices=("greedy_match", "stochastic"))
    r.add_argument("--steps-table", action="store_true", help="print one row per committed token")
    r.add_argument("--pretty", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a grid sweep from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("csv", "json"))
    s.set_defaults(func=cmd_sweep)

    an = sub.add_parser("analyze", help="entropy/confidence behaviour summary")
    an.add_argument("--model", action="append", required=True, help="backend spec; repeat per model")
    an.add_argument("--prompt", type=_tokens, action="append")
    an.add_argument("--prompt-file")
    an.add_argument("--steps", type=int, default=16)
    an.add_argument("--out")
    an.add_argument("--format", choices=("csv", "json"))
    an.set_defaults(func=cmd_analyze)

    tr = sub.add_parser("trace-record", help="record a backend's distributions to a trace file")
    tr.add_argument("--backend", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--prompt", type=_tokens, action="append")
    tr.add_argument("--depth", type=int, default=1, help="also record every continuation up to this length")
    tr.set_defaults(func=cmd_trace_record)

    tc = sub.add_parser("trace-replay-check", help="validate a trace file")
    tc.add_argument("--trace", required=True)
    tc.set_defaults(func=cmd_trace_replay_check)

    sv = sub.add_parser("serve", help="serve a backend over HTTP")
    sv.add_argument("--backend", required=True)
    sv.add_argument("--bind", default="127.0.0.1:8765")
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    try:
        a = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    if getattr(a, "workers", None) is None and a.command == "sweep":
        a.workers = default_workers()
    try:
        return a.func(a, out)
    except InvalidArgument as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (PyramidError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
