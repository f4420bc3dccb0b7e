"""TARNet speaker identification: log-Mel frontend, multi-scale dilated-TCN
encoder with attentive statistics pooling, and the evaluation metric suite.

The heavy lifting lives in the C++ extension module; this package re-exports
its public surface.
"""

from ._core import (
    ConfigError,
    DataError,
    Model,
    NumericError,
    UsageError,
    approx_randomization,
    gradcheck,
    hz_to_mel,
    log_mel,
    mel_to_hz,
    receptive_field,
    synth_utterance,
    topk_accuracy,
    weighted_prf,
)

__all__ = [
    "Model",
    "approx_randomization",
    "gradcheck",
    "hz_to_mel",
    "log_mel",
    "mel_to_hz",
    "receptive_field",
    "synth_utterance",
    "topk_accuracy",
    "weighted_prf",
    "UsageError",
    "ConfigError",
    "DataError",
    "NumericError",
]

__version__ = "0.1.0"
