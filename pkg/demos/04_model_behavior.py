"""
Entropy and confidence across a model family
=============================================

Sharper models are more confident and less uncertain. A temperature family
of one base model reproduces that ordering in miniature.
"""

import numpy as np

from pyramidsd import behavior_summary
from pyramidsd.models import TableModel, ngram_fit, temperature_family

base = TableModel(32, seed=11, window=2, logit_scale=4.0)
family = temperature_family(base, (1.5, 1.0, 0.6))
prompts = [(i, (3 * i + 1) % 32) for i in range(8)]

summary = behavior_summary(family, prompts, steps=32)
for m in summary.models:
    print(f"{m.model:16s} entropy {m.mean_entropy:.3f} nats   confidence {m.mean_confidence:.3f}")

# %%
# Histograms use 32 fixed bins, so they line up across models.
edges = summary.confidence_edges
for m in summary.models:
    peak = int(np.argmax(m.confidence_hist))
    print(f"{m.model:16s} modal confidence bin [{edges[peak]:.3f}, {edges[peak + 1]:.3f})")

# %%
# The same summary for n-gram models fitted on a toy corpus. Higher order
# means more context, which usually means lower entropy.
corpus = ["the cat sat on the mat", "the dog sat on the log", "a cat saw a dog on the mat"] * 3
models = [ngram_fit(corpus, order, k=0.1, name=f"{order}-gram") for order in (1, 2, 3)]
words = models[0].vocab
s = behavior_summary(models, [words.encode("the"), words.encode("a cat")], steps=6)
for m in s.models:
    print(f"{m.model:8s} entropy {m.mean_entropy:.3f}   confidence {m.mean_confidence:.3f}")

print()
print(s.to_csv().splitlines()[0])
