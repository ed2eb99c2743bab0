"""
Sweeping thresholds and speculative lengths
============================================

A small version of the threshold/length ablation. Results are deterministic
for a given grid, whatever the worker count.
"""

import os
import tempfile

from pyramidsd import DecodeConfig
from pyramidsd.harness import SweepGrid, emit_report, run_sweep

grid = SweepGrid(
    methods=["sd", "fsd", "psd_f"],
    tau_q_values=[0.2, 0.3, 0.4, 0.5],
    tau_t_values=[0.2, 0.3, 0.4, 0.5],
    l_d_values=[2, 4],
    l_q_values=[4, 10, 20],
    seeds=[0],
    prompts=[(1, 2), (3, 4)],
    # backends may be spec strings; each worker builds its own copy
    backends={
        "draft": "table:vocab=32,seed=11,scale=4,temperature=1.5,latency=0.125",
        "qualifier": "table:vocab=32,seed=11,scale=4,latency=0.25",
        "target": "table:vocab=32,seed=11,scale=4,temperature=0.6,latency=1",
    },
    decode=DecodeConfig(max_new_tokens=150),
)
print(len(grid.configs()), "configurations")

res = run_sweep(grid, worker_count=2)

# %%
# Best configuration per method, by mean simulated throughput.
for method, b in sorted(res.best().items()):
    m = b["best_mean"]
    print(f"{method:6s} {m['sim_tok_s_mean']:.3f} tok/s  tau_q={m['tau_q']} tau_t={m['tau_t']} "
          f"l_d={m['l_d']} l_q={m['l_q']}")

# %%
# For each threshold pair, the lengths that served the pyramid best.
for row in res.best_over_ell():
    if row["method"] == "psd_f":
        print(f"tau_q={row['tau_q']} tau_t={row['tau_t']}  best l_d={row['l_d']} l_q={row['l_q']}"
              f"  {row['sim_tok_s_mean']:.3f} tok/s")

out_dir = tempfile.mkdtemp()
path = os.path.join(out_dir, "sweep.csv")
print("\nwrote", emit_report(res, "csv", path), "bytes to", path)
with open(path) as fh:
    print("".join(fh.readlines()[:4]))
