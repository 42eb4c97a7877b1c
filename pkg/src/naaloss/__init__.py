"""Noise- and artifact-aware training for masking speech enhancers.

The toolkit is numpy only: STFT with exact adjoints, a context-window MLP
mask model with hand-written reverse mode, the NAaLoss objective and its
artifact decompositions, Adam, evaluation metrics (SI-SNR, STOI, WERR) and a
command line experiment harness.
"""

from .exceptions import (
    CheckpointError,
    ConfigError,
    DegenerateWerrError,
    DivergenceError,
    InvalidClipError,
    MissingMomentumError,
    NAaLossError,
    NonFiniteError,
    ShapeMismatchError,
    TripleMismatchError,
    WavFormatError,
    ZeroPowerError,
)
from .signal_core import (
    AudioClip,
    ComplexSpectrogram,
    StftConfig,
    istft,
    mix_at_snr,
    read_wav,
    stft,
    write_wav,
)
from .mask_model import MaskModelParams, ModelConfig, forward, init_params, load_params, save_params, vjp
from .loss import (
    ArtifactDecomposition,
    DistanceSpec,
    LossConfig,
    LossWeights,
    decompose,
    distance,
    naaloss_value,
    naaloss_value_and_grad,
)
from .optim import AdamState, adam_init, adam_step
from .metrics import observation_add, si_snr, signal_energy_db, stoi, werr
from .trainer import TrainConfig, TrainTriple, evaluate_model, generate_synthetic_clip, synthesize_dataset, train
from .estimator import NAaLossEnhancer

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ArtifactDecomposition",
    "AudioClip",
    "CheckpointError",
    "ComplexSpectrogram",
    "ConfigError",
    "DegenerateWerrError",
    "DistanceSpec",
    "DivergenceError",
    "InvalidClipError",
    "LossConfig",
    "LossWeights",
    "MaskModelParams",
    "MissingMomentumError",
    "ModelConfig",
    "NAaLossEnhancer",
    "NAaLossError",
    "NonFiniteError",
    "ShapeMismatchError",
    "StftConfig",
    "TrainConfig",
    "TrainTriple",
    "TripleMismatchError",
    "WavFormatError",
    "ZeroPowerError",
    "adam_init",
    "adam_step",
    "decompose",
    "distance",
    "evaluate_model",
    "forward",
    "generate_synthetic_clip",
    "init_params",
    "istft",
    "load_params",
    "mix_at_snr",
    "naaloss_value",
    "naaloss_value_and_grad",
    "observation_add",
    "read_wav",
    "save_params",
    "si_snr",
    "signal_energy_db",
    "stoi",
    "synthesize_dataset",
    "train",
    "vjp",
    "stft",
    "werr",
    "write_wav",
]
