"""
Recorded traces and served models
==================================

Any backend can be frozen into a JSON-lines trace and replayed later, or
served over HTTP and queried as a remote backend. Both paths reproduce the
original distributions, so decodes driven by them match.
"""

import os
import tempfile

import numpy as np

from pyramidsd import DecodeConfig, decode_autoregressive
from pyramidsd.models import (TableModel, enumerate_contexts, remote_backend, serve_backend,
                              trace_record, trace_replay_open)

model = TableModel(8, seed=99, window=3, logit_scale=5.0, name="toy")

# %%
# Record every context reachable from the prompt within three tokens.
path = os.path.join(tempfile.mkdtemp(), "toy.jsonl")
contexts = enumerate_contexts((1,), model.vocab_size, 3)
print("recorded", trace_record(model, contexts, path), "contexts")
with open(path) as fh:
    print(fh.readline().strip())
    print(fh.readline().strip()[:90], "...")

replay = trace_replay_open(path)
cfg = DecodeConfig(max_new_tokens=3, seed=1)
print("live   ", decode_autoregressive(model, (1,), cfg).tokens)
print("replay ", decode_autoregressive(replay, (1,), cfg).tokens)

# %%
# Leaving the recorded region is an error, not a silent fallback.
try:
    replay.next_distribution((1, 2, 3, 4, 5))
except KeyError as exc:
    print("miss:", exc)

# %%
# Serve the model on a free local port and query it.
with serve_backend(model, "127.0.0.1:0") as handle:
    remote = remote_backend(handle.url, "toy")
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        ctx = tuple(rng.integers(0, 8, size=4).tolist())
        worst = max(worst, float(np.abs(remote.next_distribution(ctx) - model.next_distribution(ctx)).max()))
    print(handle.url, "max abs difference over 20 contexts:", worst)
