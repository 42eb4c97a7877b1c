"""Bias-corrected Adam over tuples of float64 arrays."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import NonFiniteError, ShapeMismatchError

__all__ = ["AdamState", "adam_init", "adam_step"]


@dataclass(frozen=True, eq=False)
class AdamState:
    """First/second moment accumulators plus hyper-parameters.

    ``step_count`` is the number of updates already applied; its value is what
    the bias correction of the *next* step is based on.
    """

    m: tuple
    v: tuple
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if len(self.m) != len(self.v):
            raise ShapeMismatchError("moment tuples differ in length")
        for a, b in zip(self.m, self.v):
            if a.shape != b.shape:
                raise ShapeMismatchError(f"moment shapes differ: {a.shape} vs {b.shape}")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.lr <= 0 or self.epsilon <= 0:
            raise ValueError("lr and epsilon must be positive")

    def with_lr(self, lr):
        return replace(self, lr=float(lr))


def _arrays(obj):
    return tuple(obj.arrays()) if hasattr(obj, "arrays") else tuple(obj)


def _rebuild(template, arrays):
    if hasattr(template, "with_arrays"):
        return template.with_arrays(arrays)
    return tuple(arrays)


def adam_init(params, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8) -> AdamState:
    zeros = tuple(np.zeros_like(a) for a in _arrays(params))
    return AdamState(zeros, tuple(z.copy() for z in zeros), 0, lr, beta1, beta2, epsilon)


def adam_step(params, grads, state: AdamState):
    """Apply one Adam update; returns ``(new_params, new_state)``.

    ``params`` and ``grads`` are either parameter objects exposing
    ``arrays()``/``with_arrays()`` or plain sequences of arrays.
    """
    p_arr, g_arr = _arrays(params), _arrays(grads)
    if len(p_arr) != len(g_arr) or len(p_arr) != len(state.m):
        raise ShapeMismatchError("params, grads and optimizer state differ in structure")
    for p, g in zip(p_arr, g_arr):
        if p.shape != g.shape:
            raise ShapeMismatchError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient passed to adam_step")
    b1, b2 = state.beta1, state.beta2
    t = state.step_count + 1
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arr, g_arr, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        step = state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)
        new_p.append(p - step)
        new_m.append(m)
        new_v.append(v)
    new_state = replace(state, m=tuple(new_m), v=tuple(new_v), step_count=t)
    return _rebuild(params, new_p), new_state
