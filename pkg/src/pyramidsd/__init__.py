"""Three-model (draft / qualifier / target) speculative decoding with fuzzy acceptance."""

from .analytics import (
    BehaviorSummary,
    ThroughputInputs,
    behavior_summary,
    estimate_beta,
    estimate_round_beta,
    predicted_speed,
    v_fsd_qd,
    v_psd,
    v_sd,
)
from .core import DecodeConfig, SimClock, Stage, StepRecord, Vocabulary, argmax, as_distribution, normalize, sample
from .decoding import (
    DecodeOutcome,
    Mode,
    PyramidConfig,
    SDVariant,
    decode_autoregressive,
    decode_fsd,
    decode_pyramid,
    decode_sd,
    verify_block,
)
from .divergence import KL, TOP1, TVD, DivergenceKind, confidence, divergence, entropy
from .errors import (
    ContextOverflow,
    InvalidArgument,
    PyramidError,
    RemoteBackendError,
    TraceMiss,
    UndefinedRate,
)

__version__ = "0.1.0"
