"""
Decoding with a draft, a qualifier and a target
================================================

Three views of one synthetic model at different temperatures stand in for a
small, medium and large language model. We decode the same prompt four ways
and compare what each method commits and how many calls it spends.
"""

from collections import Counter

from pyramidsd import DecodeConfig, PyramidConfig, decode_autoregressive, decode_fsd, decode_pyramid, decode_sd
from pyramidsd.models import TableModel, temperature_family

base = TableModel(32, seed=11, window=2, logit_scale=4.0)
draft, qualifier, target = temperature_family(base, (1.5, 1.0, 0.6), latencies=(1 / 8, 1 / 4, 1.0))
prompt = (1, 2)
cfg = DecodeConfig(max_new_tokens=24, seed=0)

# %%
# Plain autoregressive decoding: one target call per token.
ar = decode_autoregressive(target, prompt, cfg)
print("ar     ", ar.tokens)
print("        calls", ar.calls)

# %%
# Speculative decoding. The stochastic variant keeps the target's output
# distribution exactly, so its tokens differ from ``ar`` only through the RNG.
sd = decode_sd(draft, target, prompt, 4, "stochastic", cfg)
print("sd     ", sd.tokens)
print("        calls", sd.calls, "beta", round(sd.beta("tq"), 3))

# %%
# Fuzzy speculation accepts a draft token while the total variation between
# the two next-token distributions stays under tau.
fsd = decode_fsd(draft, target, prompt, 4, 0.4, "total_variation", cfg)
print("fsd    ", fsd.tokens)
print("        calls", fsd.calls, "beta", round(fsd.beta("tq"), 3))

# %%
# The pyramid inserts the qualifier between them. Draft rounds of l_d tokens
# pass through the qualifier until a block of l_q tokens is ready for the target.
pc = PyramidConfig(l_d=2, l_q=6, tau_q=0.3, tau_t=0.5)
psd = decode_pyramid(draft, qualifier, target, prompt, pc, cfg)
print("psd_f  ", psd.tokens)
print("        calls", psd.calls, "beta_qd", round(psd.beta("qd"), 3), "beta_tq", round(psd.beta("tq"), 3))

# %%
# Every committed token carries the stage that produced it.
print(Counter(r.stage.value for r in psd.records))

for name, out in [("ar", ar), ("sd", sd), ("fsd", fsd), ("psd_f", psd)]:
    print(f"{name:6s} simulated tok/s = {len(out.tokens) / out.sim_elapsed:6.3f}")
