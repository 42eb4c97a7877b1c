"""Exception types raised across the toolkit.

Every error subclasses :class:`NAaLossError` so the command line can turn any
failure into a single ``<ClassName>: message`` line.
"""


class NAaLossError(Exception):
    """Base class for toolkit errors."""


class InvalidClipError(NAaLossError, ValueError):
    """A signal violates the clip invariants (empty, non-finite, bad rate)."""


class ConfigError(NAaLossError, ValueError):
    """An STFT, model, loss or training configuration is inconsistent."""


class WavFormatError(NAaLossError, ValueError):
    """A WAV file is malformed, truncated or uses an unsupported encoding."""


class ShapeMismatchError(NAaLossError, ValueError):
    """Signals or arrays that must agree in length, rate or shape do not."""


class ZeroPowerError(NAaLossError, ValueError):
    """A signal whose power is used as a reference is identically zero."""


class TripleMismatchError(NAaLossError, ValueError):
    """A training triple does not satisfy z = x + y."""


class NonFiniteError(NAaLossError, FloatingPointError):
    """A NaN or Inf appeared in activations, losses or gradients."""


class CheckpointError(NAaLossError, ValueError):
    """A checkpoint file is corrupt or carries an unknown format version."""


class MissingMomentumError(CheckpointError):
    """Fine-tuning was requested from a checkpoint without optimizer state."""


class DivergenceError(NonFiniteError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DegenerateWerrError(NAaLossError, ZeroDivisionError):
    """WERR is undefined because the original and clean WERs coincide."""
