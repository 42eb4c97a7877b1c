"""Artifact decomposition and the noise- and artifact-aware objective.

For an enhancer ``f`` and a triple ``z = x + y`` (clean speech ``x``, noise
``y``) the enhancer output is split into speech, artifacts and residual noise:

* option ``"alpha"`` (condition-invariant): ``theta = (f(z) + f(x) - f(y) - 2x) / 2``
* option ``"beta"`` (condition-specific): ``theta_c = f(x) - x`` and
  ``theta_m = f(z) - f(y) - x``

with residual noise ``f(y)`` in both cases.  The training objective is

    L = (1 - alpha - beta) * dist(f(z), x)
        + alpha * L_deatf
        + beta * dist(f(y), 0)

where ``L_deatf`` is ``dist(theta, 0)`` for option alpha and
``dist(theta_c, 0) + dist(theta_m, 0)`` for option beta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    ConfigError,
    NonFiniteError,
    ShapeMismatchError,
    TripleMismatchError,
    ZeroPowerError,
)
from .mask_model import MaskModelParams, forward, vjp
from .signal_core import AudioClip, StftConfig, stft, stft_adjoint

__all__ = [
    "DistanceSpec",
    "LossWeights",
    "LossConfig",
    "ArtifactDecomposition",
    "ARTIFACT_OPTIONS",
    "distance",
    "decompose",
    "loss_estim",
    "loss_deatf",
    "loss_ignor",
    "naaloss_total",
    "naaloss_value_and_grad",
    "LossTerms",
    "TRIPLE_TOLERANCE",
]

ARTIFACT_OPTIONS = ("alpha", "beta")
METRICS = ("l2", "l1")
DOMAINS = ("time", "stft")
TRIPLE_TOLERANCE = 1e-9

_METRIC_ALIASES = {
    "l2": "l2", "l2-squared-mean": "l2", "mse": "l2",
    "l1": "l1", "mae": "l1",
}
_DOMAIN_ALIASES = {
    "time": "time", "time-waveform": "time", "waveform": "time",
    "stft": "stft", "stft-magnitude": "stft", "magnitude": "stft",
}


@dataclass(frozen=True)
class DistanceSpec:
    """``metric``: ``"l2"`` (mean squared) or ``"l1"`` (mean absolute);
    ``domain``: ``"time"`` waveform or ``"stft"`` magnitude."""

    metric: str = "l2"
    domain: str = "time"
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        try:
            object.__setattr__(self, "metric", _METRIC_ALIASES[str(self.metric).lower()])
            object.__setattr__(self, "domain", _DOMAIN_ALIASES[str(self.domain).lower()])
        except KeyError as exc:
            raise ConfigError(f"unknown distance setting {exc.args[0]!r}") from None


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.1
    beta: float = 0.1

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
            raise ConfigError(f"loss weights must lie in [0, 1], got alpha={a}, beta={b}")
        if a + b > 1.0:
            raise ConfigError(f"alpha + beta must not exceed 1, got {a} + {b}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def estim(self):
        return 1.0 - self.alpha - self.beta


@dataclass(frozen=True)
class LossConfig:
    """Artifact option, weights, and one distance per loss term."""

    option: str = "beta"
    weights: LossWeights = field(default_factory=LossWeights)
    estim_dist: DistanceSpec = field(default_factory=DistanceSpec)
    deatf_dist: DistanceSpec | None = None
    ignor_dist: DistanceSpec | None = None

    def __post_init__(self):
        if self.option not in ARTIFACT_OPTIONS:
            raise ConfigError(f"artifact option must be one of {ARTIFACT_OPTIONS}, got {self.option!r}")
        if self.deatf_dist is None:
            object.__setattr__(self, "deatf_dist", self.estim_dist)
        if self.ignor_dist is None:
            object.__setattr__(self, "ignor_dist", self.estim_dist)

    @classmethod
    def simple(cls, option="beta", alpha=0.1, beta=0.1, metric="l2", domain="time", stft_config=None):
        dist = DistanceSpec(metric, domain, stft_config or StftConfig())
        return cls(option, LossWeights(alpha, beta), dist)


@dataclass(frozen=True, eq=False)
class ArtifactDecomposition:
    option: str
    residual_noise: AudioClip
    theta: AudioClip | None = None
    theta_c: AudioClip | None = None
    theta_m: AudioClip | None = None

    def artifacts(self):
        """Named artifact clips present for this option."""
        if self.option == "alpha":
            return {"theta": self.theta}
        return {"theta_c": self.theta_c, "theta_m": self.theta_m}


def _samples(c):
    return c.samples if isinstance(c, AudioClip) else np.asarray(c, dtype=np.float64)


def distance(a, b=None, spec: DistanceSpec = DistanceSpec(), with_grad=False):
    """``dist(a, b)`` (``b=None`` means the zero signal).

    With ``with_grad=True`` returns ``(value, d value / d a)``.
    """
    a = _samples(a)
    if b is not None:
        b = _samples(b)
        if b.shape != a.shape:
            raise ShapeMismatchError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if spec.domain == "time":
        resid = a if b is None else a - b
    else:
        sa = stft(a, spec.stft).values
        mag_a = np.abs(sa)
        resid = mag_a if b is None else mag_a - np.abs(stft(b, spec.stft).values)
    count = resid.size
    if spec.metric == "l2":
        value = float(np.sum(resid * resid) / count)
        g_resid = (2.0 / count) * resid if with_grad else None
    else:
        value = float(np.sum(np.abs(resid)) / count)
        g_resid = np.sign(resid) / count if with_grad else None
    if not with_grad:
        return value
    if spec.domain == "time":
        return value, g_resid
    # d|S|/dS = S/|S|, taken as 0 where |S| = 0
    safe = np.where(mag_a > 0, mag_a, 1.0)
    g_spec = np.where(mag_a > 0, g_resid / safe, 0.0) * sa
    return value, stft_adjoint(g_spec, spec.stft, a.shape[0])


def _check_same(*clips):
    ref = clips[0]
    for c in clips[1:]:
        if c.sample_rate_hz != ref.sample_rate_hz:
            raise ShapeMismatchError(
                f"sample rate mismatch: {ref.sample_rate_hz} Hz vs {c.sample_rate_hz} Hz"
            )
        if len(c) != len(ref):
            raise ShapeMismatchError(f"length mismatch: {len(ref)} vs {len(c)} samples")


def decompose(fx: AudioClip, fy: AudioClip, fz: AudioClip, x: AudioClip, option="beta"):
    _check_same(fx, fy, fz, x)
    if option == "alpha":
        theta = 0.5 * ((fz.samples - fy.samples - x.samples) + (fx.samples - x.samples))
        return ArtifactDecomposition("alpha", fy, theta=x.with_samples(theta))
    if option == "beta":
        theta_c = fx.samples - x.samples
        theta_m = fz.samples - fy.samples - x.samples
        return ArtifactDecomposition(
            "beta", fy, theta_c=x.with_samples(theta_c), theta_m=x.with_samples(theta_m)
        )
    raise ConfigError(f"artifact option must be one of {ARTIFACT_OPTIONS}, got {option!r}")


def loss_estim(fz: AudioClip, x: AudioClip, dist: DistanceSpec = DistanceSpec()) -> float:
    _check_same(fz, x)
    return distance(fz, x, dist)


def loss_deatf(dec: ArtifactDecomposition, dist: DistanceSpec = DistanceSpec()) -> float:
    return float(sum(distance(clip, None, dist) for clip in dec.artifacts().values()))


def loss_ignor(fy: AudioClip, dist: DistanceSpec = DistanceSpec()) -> float:
    return distance(fy, None, dist)


def naaloss_total(l_estim, l_deatf, l_ignor, w: LossWeights = LossWeights()) -> float:
    if not isinstance(w, LossWeights):
        w = LossWeights(*w)
    return w.estim * l_estim + w.alpha * l_deatf + w.beta * l_ignor


@dataclass(frozen=True)
class LossTerms:
    estim: float
    deatf: float
    ignor: float
    total: float


def check_triple(x: AudioClip, y: AudioClip, z: AudioClip, tol=TRIPLE_TOLERANCE):
    """Raise unless ``z`` equals ``x + y`` sample-wise within ``tol``."""
    _check_same(x, y, z)
    dev = float(np.max(np.abs(z.samples - (x.samples + y.samples))))
    if dev > tol:
        raise TripleMismatchError(f"z deviates from x + y by up to {dev:.3e} (tolerance {tol:.0e})")
    return dev


def naaloss_value_and_grad(params: MaskModelParams, x, y, z, config: LossConfig = LossConfig()):
    """Composite loss, its parameter gradient, the decomposition and per-term values.

    Returns ``(value, grads, decomposition, terms)``.  Gradients flow through
    all three forward passes; per-pass contributions are summed in the fixed
    order x, y, z.
    """
    check_triple(x, y, z)
    if not np.any(y.samples):
        raise ZeroPowerError("noise signal is all zeros; the pure-noise pass needs nonzero y")
    w = config.weights
    fx, _, cache_x = forward(params, x)
    fy, _, cache_y = forward(params, y)
    fz, _, cache_z = forward(params, z)
    dec = decompose(fx, fy, fz, x, config.option)

    l_est, g_est = distance(fz, x, config.estim_dist, with_grad=True)
    l_ign, g_ign = distance(fy, None, config.ignor_dist, with_grad=True)
    g_fx = np.zeros(len(x))
    g_fy = w.beta * g_ign
    g_fz = w.estim * g_est
    if config.option == "alpha":
        l_deatf, g_theta = distance(dec.theta, None, config.deatf_dist, with_grad=True)
        half = 0.5 * w.alpha * g_theta
        g_fx = g_fx + half
        g_fy = g_fy - half
        g_fz = g_fz + half
    else:
        l_c, g_c = distance(dec.theta_c, None, config.deatf_dist, with_grad=True)
        l_m, g_m = distance(dec.theta_m, None, config.deatf_dist, with_grad=True)
        l_deatf = l_c + l_m
        g_fx = g_fx + w.alpha * g_c
        g_fy = g_fy - w.alpha * g_m
        g_fz = g_fz + w.alpha * g_m

    total = naaloss_total(l_est, l_deatf, l_ign, w)
    if not np.isfinite(total):
        raise NonFiniteError(f"non-finite loss value {total}")
    grads = vjp(params, cache_x, g_fx) + vjp(params, cache_y, g_fy) + vjp(params, cache_z, g_fz)
    return total, grads, dec, LossTerms(l_est, l_deatf, l_ign, total)


def naaloss_value(params: MaskModelParams, x, y, z, config: LossConfig = LossConfig()) -> LossTerms:
    """Loss terms without gradients (evaluation and finite differences)."""
    check_triple(x, y, z)
    fx = forward(params, x)[0]
    fy = forward(params, y)[0]
    fz = forward(params, z)[0]
    dec = decompose(fx, fy, fz, x, config.option)
    l_est = loss_estim(fz, x, config.estim_dist)
    l_deatf = loss_deatf(dec, config.deatf_dist)
    l_ign = loss_ignor(fy, config.ignor_dist)
    return LossTerms(l_est, l_deatf, l_ign, naaloss_total(l_est, l_deatf, l_ign, config.weights))
