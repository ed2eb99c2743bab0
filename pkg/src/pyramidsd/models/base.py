from __future__ import annotations

from typing import Iterable, Sequence

from ..core import Distribution, as_distribution, rescale
from ..errors import InvalidArgument


class ModelBackend:
    """Maps a token context to a next-token distribution.

    Subclasses implement :meth:`next_distribution`. One call to
    :meth:`forward` is one model invocation no matter how many contexts it
    covers; decoders use it for batched verification passes.
    """

    name: str = "model"
    param_size: int = 0
    latency_per_call: float = 0.0
    vocab_size: int

    def next_distribution(self, ctx: Sequence[int]) -> Distribution:
        raise NotImplementedError

    def forward(self, contexts: Iterable[Sequence[int]]) -> list:
        return [self.next_distribution(c) for c in contexts]

    def __repr__(self):
        return f"<{type(self).__name__} {self.name!r} V={self.vocab_size}>"


class ConstantModel(ModelBackend):
    """Context-free backend returning one fixed distribution."""

    def __init__(self, probs, name: str = "const", param_size: int = 0):
        self.probs = as_distribution(probs)
        self.probs.setflags(write=False)
        self.vocab_size = len(self.probs)
        self.name = name
        self.param_size = param_size

    def next_distribution(self, ctx):
        return self.probs


class TemperatureModel(ModelBackend):
    def __init__(self, inner: ModelBackend, temperature: float, name: str | None = None):
        if not temperature > 0:
            raise InvalidArgument(f"temperature must be > 0, got {temperature}")
        self.inner = inner
        self.temperature = float(temperature)
        self.vocab_size = inner.vocab_size
        self.name = name or f"{inner.name}@T{temperature:g}"
        self.param_size = inner.param_size
        self.latency_per_call = inner.latency_per_call

    def next_distribution(self, ctx):
        return rescale(self.inner.next_distribution(ctx), self.temperature)

    def forward(self, contexts):
        return [rescale(p, self.temperature) for p in self.inner.forward(contexts)]


class LatencyModel(ModelBackend):
    """Transparent wrapper that declares a simulated cost per invocation."""

    def __init__(self, inner: ModelBackend, seconds_per_call: float):
        if not seconds_per_call > 0:
            raise InvalidArgument(f"seconds_per_call must be > 0, got {seconds_per_call}")
        self.inner = inner
        self.latency_per_call = float(seconds_per_call)
        self.vocab_size = inner.vocab_size
        self.name = inner.name
        self.param_size = inner.param_size

    @property
    def speed(self) -> float:
        """Autoregressive tokens per simulated second."""
        return 1.0 / self.latency_per_call

    def next_distribution(self, ctx):
        return self.inner.next_distribution(ctx)

    def forward(self, contexts):
        return self.inner.forward(contexts)


def temperature_wrap(inner: ModelBackend, temperature: float) -> ModelBackend:
    return TemperatureModel(inner, temperature)


def with_latency(inner: ModelBackend, seconds_per_call: float) -> LatencyModel:
    return LatencyModel(inner, seconds_per_call)


def temperature_family(base: ModelBackend, temperatures=(1.5, 1.0, 0.6), latencies=None) -> list:
    """Draft/qualifier/target stand-ins sharing one base model.

    Higher temperature gives higher entropy, so ordering ``temperatures``
    from hot to cold yields a small-to-large style entropy gradient.
    """
    names = ("draft", "qualifier", "target")
    out = []
    for i, t in enumerate(temperatures):
        m: ModelBackend = TemperatureModel(base, t, name=f"{names[i] if i < 3 else 'm' + str(i)}@T{t:g}")
        if latencies is not None:
            m = LatencyModel(m, latencies[i])
        out.append(m)
    return out


def check_shared_vocab(*models: ModelBackend) -> int:
    sizes = {m.vocab_size for m in models}
    if len(sizes) != 1:
        detail = ", ".join(f"{m.name}={m.vocab_size}" for m in models)
        raise InvalidArgument(f"models do not share a vocabulary: {detail}")
    return sizes.pop()

