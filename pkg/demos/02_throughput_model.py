"""
Closed-form throughput against the simulated clock
===================================================

Each backend charges a fixed latency per call to a simulated clock. The
closed-form throughput expressions should predict the measured rate once we
feed them the per-round acceptance measured during the run.
"""

from pyramidsd import DecodeConfig, ThroughputInputs, predicted_speed, v_fsd_qd, v_psd, v_sd
from pyramidsd.harness import simulate_run
from pyramidsd.models import TableModel, temperature_family

# %%
# The formulas on their own. A draft 10x faster than the target with 80%
# acceptance over 4-token rounds:
print("v_sd     ", v_sd(ThroughputInputs(beta=0.8, ell=4, v_proposer=100, v_verifier=10)))

# A pyramid whose inner stage runs at 48.6 tok/s feeding a 10 tok/s target:
inner = v_fsd_qd(ThroughputInputs(beta=0.9, ell=2, v_proposer=90, v_verifier=30))
print("v_fsd_qd ", inner)
print("v_psd    ", v_psd(0.8, 4, inner, 10))

# %%
# Now measure. Speeds 8:4:1, so the target costs one simulated second per call.
base = TableModel(32, seed=11, window=2, logit_scale=4.0)
d, q, t = temperature_family(base, (1.5, 1.0, 0.6), latencies=(1 / 8, 1 / 4, 1.0))
backends = {"draft": d, "qualifier": q, "target": t}
cfg = DecodeConfig(max_new_tokens=2000, seed=3)

points = [
    ("sd", {"l_d": 4}),
    ("fsd", {"l_d": 4, "tau_t": 0.4}),
    ("psd_f", {"l_d": 2, "l_q": 10, "tau_q": 0.2, "tau_t": 0.5}),
]
print(f"\n{'method':8s}{'simulated':>11s}{'predicted':>11s}{'rel err':>10s}")
for method, params in points:
    out, measured = simulate_run(method, backends, params, cfg, prompt=(1, 2))
    pred = predicted_speed(out)
    print(f"{method:8s}{measured:11.4f}{pred:11.4f}{abs(measured - pred) / pred:10.2e}")

# %%
# The two acceptance estimates differ: per token counts only draft proposals,
# per round also credits the correction or bonus token every round yields.
print("\nper-token beta", round(out.beta("tq"), 4), " per-round beta", round(out.round_beta("tq"), 4))
