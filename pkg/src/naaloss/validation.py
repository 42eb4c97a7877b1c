"""Input coercion for the estimator API."""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidClipError, ShapeMismatchError
from .signal_core import AudioClip
from .trainer import TrainTriple


def check_clip(obj, sample_rate_hz):
    """Return an :class:`AudioClip` at ``sample_rate_hz`` from a clip or 1-D array."""
    if isinstance(obj, AudioClip):
        if obj.sample_rate_hz != sample_rate_hz:
            raise ShapeMismatchError(
                f"clip rate {obj.sample_rate_hz} Hz does not match estimator rate {sample_rate_hz} Hz"
            )
        return obj
    arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidClipError(f"expected a 1-D signal, got shape {arr.shape}")
    return AudioClip(arr, sample_rate_hz)


def check_clips(X, sample_rate_hz):
    """A list of clips from a sequence of signals or a 2-D (n_clips, n_samples) array."""
    if isinstance(X, (AudioClip, np.ndarray)) and np.ndim(getattr(X, "samples", X)) == 1:
        raise InvalidClipError("expected a collection of signals; wrap a single clip in a list")
    return [check_clip(c, sample_rate_hz) for c in X]


def check_triples(X, sample_rate_hz):
    """Coerce training data into :class:`TrainTriple` objects.

    Accepts triples, ``(x, y)`` pairs (``z`` is formed as ``x + y``),
    ``(x, y, z)`` tuples, or an array of shape ``(n, 2 or 3, n_samples)``.
    """
    out = []
    for i, item in enumerate(X):
        if isinstance(item, TrainTriple):
            out.append(item)
            continue
        parts = list(item)
        if len(parts) not in (2, 3):
            raise ShapeMismatchError(f"item {i}: expected (x, y) or (x, y, z), got {len(parts)} parts")
        x = check_clip(parts[0], sample_rate_hz)
        y = check_clip(parts[1], sample_rate_hz)
        if len(y) != len(x):
            raise ShapeMismatchError(f"item {i}: x and y differ in length")
        z = check_clip(parts[2], sample_rate_hz) if len(parts) == 3 else x.with_samples(x.samples + y.samples)
        snr = 10.0 * np.log10(x.power() / y.power()) if y.power() > 0 and x.power() > 0 else np.nan
        out.append(TrainTriple(x, y, z, float(snr), f"{i:04d}"))
    if not out:
        raise ShapeMismatchError("no training triples given")
    return out
