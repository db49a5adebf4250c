"""Averaged vs. non-averaged power sampling for correlation power analysis."""

from .cpa import CpaResult, SuccessStats, cpa_attack, downsample_average, pearson, success_rate
from .errors import (
    AttackInconclusive,
    AvgScaError,
    ConfigError,
    DomainError,
    LibraryError,
    ResolutionError,
    TraceFormatError,
    VCDParseError,
    WindowError,
)
from .leakage import LeakageModel, aes_sbox, evaluate, hamming_weight
from .synth import (
    ContinuousTrace,
    NoiseProfile,
    SynthConfig,
    add_noise,
    compose_windows,
    gen_sawtooth,
    sample_averaged,
    sample_nonaveraged,
)
from .traceset import SamplingKind, TraceSet

__version__ = "0.1.0"
