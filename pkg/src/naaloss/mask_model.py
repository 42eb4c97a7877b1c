"""Masking-based enhancer: context-window MLP on normalised log-magnitudes.

Pipeline for a clip ``c``::

    S      = stft(c)
    feat   = log(1 + |S|), normalised per bin with utterance mean/std
    ctx    = feat stacked over +/- context_radius frames (edge frames repeated)
    mask   = sigmoid(MLP_tanh(ctx))              (frames x bins, in (0, 1))
    out    = istft(mask * S)[:len(c)]            (noisy phase reused)

The features do not depend on the parameters, so the backward pass only runs
through the ISTFT, the masking product and the network.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .exceptions import (
    CheckpointError,
    ConfigError,
    InvalidClipError,
    NonFiniteError,
    ShapeMismatchError,
)
from .optim import AdamState
from .signal_core import (
    DEFAULT_SAMPLE_RATE,
    AudioClip,
    StftConfig,
    _istft_values,
    istft_adjoint,
    stft,
)

__all__ = [
    "ModelConfig",
    "MaskModelParams",
    "ForwardCache",
    "init_params",
    "forward",
    "vjp",
    "save_params",
    "load_params",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
]

_NORM_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    context_radius: int = 1
    hidden_sizes: tuple = (128,)
    seed: int = 0
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.context_radius < 0:
            raise ConfigError("context_radius must be nonnegative")
        if any(h <= 0 for h in self.hidden_sizes):
            raise ConfigError(f"hidden sizes must be positive, got {self.hidden_sizes}")
        if self.seed < 0:
            raise ConfigError("seed must be an unsigned integer")
        if self.sample_rate_hz <= 0:
            raise ConfigError("sample_rate_hz must be positive")

    @property
    def bins(self):
        return self.stft.bins

    @property
    def input_width(self):
        return (2 * self.context_radius + 1) * self.bins

    def layer_shapes(self):
        widths = [self.input_width, *self.hidden_sizes, self.bins]
        return list(zip(widths[:-1], widths[1:]))

    def to_dict(self):
        return {
            "fft_size": self.stft.fft_size,
            "hop_size": self.stft.hop_size,
            "window": self.stft.window,
            "context_radius": self.context_radius,
            "hidden_sizes": list(self.hidden_sizes),
            "seed": self.seed,
            "sample_rate_hz": self.sample_rate_hz,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            stft=StftConfig(int(d["fft_size"]), int(d["hop_size"]), str(d["window"])),
            context_radius=int(d["context_radius"]),
            hidden_sizes=tuple(d["hidden_sizes"]),
            seed=int(d["seed"]),
            sample_rate_hz=int(d["sample_rate_hz"]),
        )


@dataclass(frozen=True, eq=False)
class MaskModelParams:
    """Layer weights ``(in, out)`` and biases ``(out,)``; also used for gradients."""

    weights: tuple
    biases: tuple
    config: ModelConfig

    def __post_init__(self):
        shapes = self.config.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ShapeMismatchError(
                f"expected {len(shapes)} layers, got {len(self.weights)} weights"
                f" and {len(self.biases)} biases"
            )
        for (w, b), shape in zip(zip(self.weights, self.biases), shapes):
            if w.shape != shape or b.shape != (shape[1],):
                raise ShapeMismatchError(
                    f"layer shape {w.shape}/{b.shape} does not match {shape}"
                )
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "biases", tuple(self.biases))

    def arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_arrays(self, arrays):
        arrays = list(arrays)
        return replace(self, weights=tuple(arrays[0::2]), biases=tuple(arrays[1::2]))

    def zeros_like(self):
        return self.with_arrays([np.zeros_like(a) for a in self.arrays()])

    def __add__(self, other):
        return self.with_arrays([a + b for a, b in zip(self.arrays(), other.arrays())])

    def scale(self, factor):
        return self.with_arrays([factor * a for a in self.arrays()])

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_flat(self, vector):
        arrays, pos = [], 0
        for a in self.arrays():
            arrays.append(np.asarray(vector[pos : pos + a.size], dtype=np.float64).reshape(a.shape))
            pos += a.size
        return self.with_arrays(arrays)

    @property
    def n_parameters(self):
        return sum(a.size for a in self.arrays())


@dataclass(frozen=True, eq=False)
class ForwardCache:
    length: int
    spec: np.ndarray
    mask: np.ndarray
    activations: tuple
    params_id: int


def init_params(config: ModelConfig) -> MaskModelParams:
    """Uniform fan-in scaled weights (variance 1/fan_in), zero biases."""
    if config.bins < 1:
        raise ConfigError("model needs at least one frequency bin")
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for fan_in, fan_out in config.layer_shapes():
        limit = math.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MaskModelParams(tuple(weights), tuple(biases), config)


def features(spec_values, context_radius):
    """Normalised log-magnitude features stacked over neighbouring frames.

    One mean and one standard deviation per utterance, over the whole grid,
    so the relative level of frames and bins is kept.
    """
    logmag = np.log1p(np.abs(spec_values))
    mean = logmag.mean()
    std = logmag.std()
    norm = (logmag - mean) / (std + _NORM_EPS)
    if context_radius == 0:
        return norm
    n = norm.shape[0]
    padded = np.pad(norm, ((context_radius, context_radius), (0, 0)), mode="edge")
    return np.concatenate([padded[i : i + n] for i in range(2 * context_radius + 1)], axis=1)


def forward(params: MaskModelParams, clip: AudioClip, identity: bool = False):
    """Enhance ``clip``; returns ``(enhanced, mask, cache)``.

    ``identity=True`` is a debugging switch that bypasses the network and
    returns the input unchanged with an all-ones mask.
    """
    cfg = params.config
    if clip.sample_rate_hz != cfg.sample_rate_hz:
        raise ShapeMismatchError(
            f"clip rate {clip.sample_rate_hz} Hz does not match model rate {cfg.sample_rate_hz} Hz"
        )
    spec = stft(clip, cfg.stft).values
    if identity:
        mask = np.ones(spec.shape)
        cache = ForwardCache(len(clip), spec, mask, (), id(params))
        return clip.with_samples(clip.samples), mask, cache

    h = features(spec, cfg.context_radius)
    acts = [h]
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ w + b
        if i < n_layers - 1:
            h = np.tanh(a)
            acts.append(h)
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("non-finite mask logits; parameters have blown up")
    mask = expit(a)
    out = _istft_values(mask * spec, cfg.stft, len(clip))
    cache = ForwardCache(len(clip), spec, mask, tuple(acts), id(params))
    try:
        enhanced = clip.with_samples(out)
    except InvalidClipError as exc:
        raise NonFiniteError(str(exc)) from exc
    return enhanced, mask, cache


def vjp(params: MaskModelParams, cache: ForwardCache, grad_out) -> MaskModelParams:
    """Gradient of a scalar w.r.t. the parameters, given its gradient w.r.t. the output."""
    if cache.params_id != id(params) or len(cache.activations) != len(params.weights):
        raise ShapeMismatchError("forward cache was not produced with these parameters")
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (cache.length,):
        raise ShapeMismatchError(
            f"grad_out has shape {grad_out.shape}, expected ({cache.length},)"
        )
    cfg = params.config
    g_spec = istft_adjoint(grad_out, cfg.stft, cache.spec.shape[0])
    g_mask = g_spec.real * cache.spec.real + g_spec.imag * cache.spec.imag
    delta = g_mask * cache.mask * (1.0 - cache.mask)

    n_layers = len(params.weights)
    g_w = [None] * n_layers
    g_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        x_in = cache.activations[i]
        g_w[i] = x_in.T @ delta
        g_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (1.0 - x_in * x_in)
    return MaskModelParams(tuple(g_w), tuple(g_b), cfg)


# ---------------------------------------------------------------- checkpoints
#
# Layout (all integers little-endian):
#   magic     8 bytes   b"NAALCKPT"
#   version   u32
#   config    u32 length + UTF-8 JSON (model config plus "meta" dict)
#   tensors   u32 count, then per tensor: u32 ndim, ndim x u32 dims, float64 data
#   optimizer u8 flag; if 1: u64 step_count, 4 x f64 (lr, beta1, beta2, eps),
#             then first moments and second moments as tensor blocks
#   crc32     u32 over every preceding byte

CHECKPOINT_MAGIC = b"NAALCKPT"
CHECKPOINT_VERSION = 1


def _pack_tensors(arrays):
    parts = [struct.pack("<I", len(arrays))]
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint truncated")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def tensors(self):
        (count,) = self.unpack("<I")
        out = []
        for _ in range(count):
            (ndim,) = self.unpack("<I")
            shape = self.unpack(f"<{ndim}I") if ndim else ()
            size = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(self.take(8 * size), dtype="<f8").astype(np.float64)
            out.append(arr.reshape(shape))
        return out


def save_params(params: MaskModelParams, optimizer_state: AdamState | None, path, meta=None):
    """Write parameters (and optionally Adam state) to ``path``."""
    header = dict(params.config.to_dict(), meta=dict(meta or {}))
    cfg_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack("<I", len(cfg_bytes)),
        cfg_bytes,
        _pack_tensors(params.arrays()),
    ]
    if optimizer_state is None:
        parts.append(b"\x00")
    else:
        s = optimizer_state
        parts.append(b"\x01")
        parts.append(struct.pack("<Q4d", s.step_count, s.lr, s.beta1, s.beta2, s.epsilon))
        parts.append(_pack_tensors(s.m))
        parts.append(_pack_tensors(s.v))
    body = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body)))


def load_params(path, with_meta=False):
    """Read a checkpoint; returns ``(params, optimizer_state_or_None)``.

    With ``with_meta=True`` a third element, the stored metadata dict, is
    returned as well.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(CHECKPOINT_MAGIC) + 8 or data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic bytes)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    reader = _Reader(body)
    reader.take(len(CHECKPOINT_MAGIC))
    (version,) = reader.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    try:
        (cfg_len,) = reader.unpack("<I")
        header = json.loads(reader.take(cfg_len).decode("utf-8"))
        meta = header.pop("meta", {})
        config = ModelConfig.from_dict(header)
        arrays = reader.tensors()
        params = MaskModelParams(tuple(arrays[0::2]), tuple(arrays[1::2]), config)
        (flag,) = reader.unpack("<B")
        state = None
        if flag:
            step, lr, b1, b2, eps = reader.unpack("<Q4d")
            m = tuple(reader.tensors())
            v = tuple(reader.tensors())
            state = AdamState(m, v, step, lr, b1, b2, eps)
    except (ValueError, KeyError, UnicodeDecodeError, ShapeMismatchError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc
    if reader.pos != len(body):
        raise CheckpointError(f"{path}: trailing bytes after optimizer block")
    if with_meta:
        return params, state, meta
    return params, state
