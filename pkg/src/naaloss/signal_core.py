"""Signal primitives: audio clips, WAV I/O, SNR mixing and a invertible STFT.

All arithmetic is float64.  The STFT pads the signal symmetrically by half a
frame on the left and far enough on the right that every sample is covered by
interior frames; the ISTFT is weighted overlap-add normalised by the summed
squared window, so ``istft(stft(x))`` reconstructs ``x`` to rounding error for
any window/hop pair whose squared-window envelope is positive.

The adjoint operators :func:`stft_adjoint` and :func:`istft_adjoint` are the
exact transposes of the (real-linear) maps implemented by :func:`stft` and
:func:`istft`; the model's backward pass is built on them.
"""

from __future__ import annotations

import functools
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile
from scipy.signal import check_COLA, get_window

from .exceptions import (
    ConfigError,
    InvalidClipError,
    ShapeMismatchError,
    WavFormatError,
    ZeroPowerError,
)

__all__ = [
    "AudioClip",
    "StftConfig",
    "ComplexSpectrogram",
    "read_wav",
    "write_wav",
    "mix_at_snr",
    "fit_length",
    "stft",
    "istft",
    "stft_adjoint",
    "istft_adjoint",
    "DEFAULT_SAMPLE_RATE",
]

DEFAULT_SAMPLE_RATE = 16000

_WINDOW_ALIASES = {"rect": "boxcar", "rectangular": "boxcar", "hanning": "hann"}


@dataclass(frozen=True, eq=False)
class AudioClip:
    """A mono float64 signal and its sample rate.

    ``samples`` is stored as a read-only copy, so clips can be shared freely.
    """

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        data = np.array(self.samples, dtype=np.float64, copy=True)
        if data.ndim != 1:
            raise InvalidClipError(f"clip must be 1-D, got shape {data.shape}")
        if data.size < 1:
            raise InvalidClipError("clip must contain at least one sample")
        if not np.all(np.isfinite(data)):
            raise InvalidClipError("clip contains NaN or Inf samples")
        rate = self.sample_rate_hz
        if isinstance(rate, bool) or int(rate) != rate or int(rate) <= 0:
            raise InvalidClipError(f"sample rate must be a positive integer, got {rate!r}")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "sample_rate_hz", int(rate))

    def __len__(self):
        return self.samples.shape[0]

    def __repr__(self):
        return f"AudioClip(n={len(self)}, sample_rate_hz={self.sample_rate_hz})"

    @property
    def duration_s(self):
        return len(self) / self.sample_rate_hz

    def power(self):
        return float(np.mean(self.samples**2))

    def with_samples(self, samples):
        """Return a clip with new samples at the same rate."""
        return AudioClip(samples, self.sample_rate_hz)


def _check_same(*clips):
    n, rate = len(clips[0]), clips[0].sample_rate_hz
    for c in clips[1:]:
        if c.sample_rate_hz != rate:
            raise ShapeMismatchError(
                f"sample rate mismatch: {rate} Hz vs {c.sample_rate_hz} Hz"
            )
        if len(c) != n:
            raise ShapeMismatchError(f"length mismatch: {n} vs {len(c)} samples")


# ---------------------------------------------------------------- WAV I/O


def read_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file as a mono float64 clip.

    16-bit PCM is scaled by 2**-15, 32-bit float is taken verbatim, and
    multichannel audio is averaged across channels.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        rate, data = wavfile.read(path)
    except (ValueError, struct.error, EOFError) as exc:
        raise WavFormatError(f"{path}: malformed WAV ({exc})") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(
            f"{path}: unsupported encoding {data.dtype} (need 16-bit PCM or 32-bit float)"
        )
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise WavFormatError(f"{path}: empty audio payload")
    try:
        return AudioClip(samples, rate)
    except InvalidClipError as exc:
        raise WavFormatError(f"{path}: {exc}") from exc


def write_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as a 32-bit float mono WAV.

    Samples are rounded to float32; clips whose samples are already float32
    values (anything produced by :func:`read_wav`) round-trip bit-exactly.
    """
    if not isinstance(clip, AudioClip):
        clip = AudioClip(clip)
    wavfile.write(path, clip.sample_rate_hz, clip.samples.astype(np.float32))


# ---------------------------------------------------------------- mixing


def fit_length(noise: np.ndarray, n: int) -> np.ndarray:
    """Tile (wrap around) or truncate ``noise`` from offset 0 to ``n`` samples."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[0] >= n:
        return noise[:n].copy()
    reps = -(-n // noise.shape[0])
    return np.tile(noise, reps)[:n]


def mix_at_snr(clean: AudioClip, noise: AudioClip, snr_db: float):
    """Scale ``noise`` so that ``clean + noise`` has the requested SNR.

    Returns ``(noisy, scaled_noise)`` with ``noisy.samples`` computed as
    ``clean.samples + scaled_noise.samples``.
    """
    if clean.sample_rate_hz != noise.sample_rate_hz:
        raise ShapeMismatchError(
            f"sample rate mismatch: {clean.sample_rate_hz} Hz vs {noise.sample_rate_hz} Hz"
        )
    if not np.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")
    noise_fit = fit_length(noise.samples, len(clean))
    p_clean = float(np.mean(clean.samples**2))
    p_noise = float(np.mean(noise_fit**2))
    if p_clean == 0.0:
        raise ZeroPowerError("clean signal has zero power")
    if p_noise == 0.0:
        raise ZeroPowerError("noise signal has zero power")
    gain = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    scaled = gain * noise_fit
    noisy = clean.samples + scaled
    rate = clean.sample_rate_hz
    return AudioClip(noisy, rate), AudioClip(scaled, rate)


# ---------------------------------------------------------------- STFT


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters; ``window`` is any periodic scipy window name."""

    fft_size: int = 512
    hop_size: int = 256
    window: str = "hann"

    def __post_init__(self):
        n, hop = self.fft_size, self.hop_size
        if not isinstance(n, (int, np.integer)) or n <= 0 or n % 2:
            raise ConfigError(f"fft_size must be a positive even integer, got {n!r}")
        if not isinstance(hop, (int, np.integer)) or hop <= 0:
            raise ConfigError(f"hop_size must be a positive integer, got {hop!r}")
        if hop > n:
            raise ConfigError(f"hop_size {hop} exceeds fft_size {n}")
        try:
            win = _window(self.window, n)
        except ValueError as exc:
            raise ConfigError(f"unknown window {self.window!r}") from exc
        if not check_COLA(win, n, n - hop):
            raise ConfigError(
                f"window {self.window!r} with fft_size {n} and hop {hop} "
                "violates constant overlap-add"
            )

    @property
    def bins(self):
        return self.fft_size // 2 + 1


@functools.lru_cache(maxsize=32)
def _window(kind, n):
    win = get_window(_WINDOW_ALIASES.get(kind, kind), n, fftbins=True).astype(np.float64)
    win.setflags(write=False)
    return win


@functools.lru_cache(maxsize=256)
def _layout(n, fft_size, hop_size):
    """Frame index map for a signal of ``n`` samples.

    Returns ``(n_frames, frame_index)`` where ``frame_index[t, k]`` is the
    position in the original signal read by sample ``k`` of frame ``t``.
    """
    pad = fft_size // 2
    n_frames = 1 + -(-n // hop_size)
    total = (n_frames - 1) * hop_size + fft_size
    padded = np.pad(np.arange(n), (pad, total - n - pad), mode="symmetric")
    starts = np.arange(n_frames) * hop_size
    index = padded[starts[:, None] + np.arange(fft_size)]
    index.setflags(write=False)
    return n_frames, index


@functools.lru_cache(maxsize=256)
def _envelope(n_frames, fft_size, hop_size, window):
    """Summed squared window over the padded timeline, and its safe inverse."""
    win = _window(window, fft_size)
    total = (n_frames - 1) * hop_size + fft_size
    positions = (np.arange(n_frames) * hop_size)[:, None] + np.arange(fft_size)
    env = np.bincount(positions.ravel(), weights=np.tile(win**2, n_frames), minlength=total)
    inv = np.zeros_like(env)
    ok = env > 1e-10
    inv[ok] = 1.0 / env[ok]
    positions.setflags(write=False)
    inv.setflags(write=False)
    return positions, inv


def _bin_weights(fft_size):
    # one-sided spectrum: DC and Nyquist appear once, interior bins twice
    c = np.full(fft_size // 2 + 1, 2.0)
    c[0] = c[-1] = 1.0
    return c


@dataclass(frozen=True, eq=False)
class ComplexSpectrogram:
    """A frames x bins complex STFT grid."""

    values: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    original_length: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 2:
            raise ShapeMismatchError(f"spectrogram must be 2-D, got shape {values.shape}")
        if values.shape[1] != self.config.bins:
            raise ShapeMismatchError(
                f"spectrogram has {values.shape[1]} bins, config expects {self.config.bins}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidClipError("spectrogram contains non-finite values")
        if self.original_length < 1:
            raise ShapeMismatchError("original_length must be positive")
        object.__setattr__(self, "values", values)

    @property
    def n_frames(self):
        return self.values.shape[0]

    def magnitude(self):
        return np.abs(self.values)


def _as_samples(clip):
    return clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)


def stft(clip, config: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Short-time Fourier transform of a clip (or raw 1-D array)."""
    x = _as_samples(clip)
    if x.ndim != 1 or x.size < 1:
        raise InvalidClipError("stft needs a non-empty 1-D signal")
    _, index = _layout(x.shape[0], config.fft_size, config.hop_size)
    frames = x[index] * _window(config.window, config.fft_size)
    return ComplexSpectrogram(np.fft.rfft(frames, axis=-1), config, x.shape[0])


def stft_adjoint(grad: np.ndarray, config: StftConfig, n: int) -> np.ndarray:
    """Transpose of :func:`stft` for a real signal of length ``n``.

    ``grad`` holds dL/dRe + i dL/dIm of a real scalar w.r.t. the STFT grid;
    the result is dL/dx.
    """
    n_frames, index = _layout(n, config.fft_size, config.hop_size)
    grad = np.asarray(grad)
    if grad.shape != (n_frames, config.bins):
        raise ShapeMismatchError(
            f"gradient grid {grad.shape} does not match ({n_frames}, {config.bins})"
        )
    size = config.fft_size
    frames = size * np.fft.irfft(grad / _bin_weights(size), n=size, axis=-1)
    frames *= _window(config.window, size)
    return np.bincount(index.ravel(), weights=frames.ravel(), minlength=n)


def _istft_values(values, config, length):
    size, hop = config.fft_size, config.hop_size
    n_frames = values.shape[0]
    positions, inv_env = _envelope(n_frames, size, hop, config.window)
    frames = np.fft.irfft(values, n=size, axis=-1) * _window(config.window, size)
    buf = np.bincount(positions.ravel(), weights=frames.ravel(), minlength=inv_env.shape[0])
    buf *= inv_env
    out = buf[size // 2 : size // 2 + length]
    if out.shape[0] < length:
        out = np.concatenate([out, np.zeros(length - out.shape[0])])
    return out


def istft(spec: ComplexSpectrogram, sample_rate_hz: int = DEFAULT_SAMPLE_RATE) -> AudioClip:
    """Inverse STFT; output is truncated or zero-padded to ``original_length``."""
    return AudioClip(_istft_values(spec.values, spec.config, spec.original_length), sample_rate_hz)


def istft_adjoint(grad: np.ndarray, config: StftConfig, n_frames: int) -> np.ndarray:
    """Transpose of :func:`istft` restricted to a ``len(grad)``-sample output.

    Returns dL/dRe + i dL/dIm of the input grid (``n_frames`` x bins).
    """
    grad = np.asarray(grad, dtype=np.float64)
    size, hop = config.fft_size, config.hop_size
    positions, inv_env = _envelope(n_frames, size, hop, config.window)
    buf = np.zeros(inv_env.shape[0])
    start = size // 2
    keep = min(grad.shape[0], buf.shape[0] - start)
    buf[start : start + keep] = grad[:keep]
    buf *= inv_env
    frames = buf[positions] * _window(config.window, size)
    return np.fft.rfft(frames, axis=-1) * (_bin_weights(size) / size)
