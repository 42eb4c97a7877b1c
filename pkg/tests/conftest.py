import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from naaloss.mask_model import ModelConfig, init_params  # noqa: E402
from naaloss.signal_core import AudioClip, StftConfig  # noqa: E402
from naaloss.trainer import TrainTriple  # noqa: E402


def tiny_config(context_radius=1, hidden=(8,), seed=0):
    """33 bins, one small hidden layer."""
    return ModelConfig(StftConfig(64, 32), context_radius, hidden, seed)


def f32(a):
    return np.asarray(a, dtype=np.float64).astype(np.float32).astype(np.float64)


def random_triple(rng, n=3200, noise_scale=0.3, tid="t"):
    x = AudioClip(f32(rng.standard_normal(n) * 0.2))
    y = AudioClip(f32(rng.standard_normal(n) * 0.2 * noise_scale))
    return TrainTriple(x, y, x.with_samples(x.samples + y.samples), 0.0, tid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_params():
    return init_params(tiny_config())


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
