import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from naaloss.exceptions import ConfigError, ShapeMismatchError, TripleMismatchError, ZeroPowerError
from naaloss.loss import (
    DistanceSpec,
    LossConfig,
    LossWeights,
    check_triple,
    decompose,
    distance,
    loss_deatf,
    loss_estim,
    loss_ignor,
    naaloss_total,
    naaloss_value,
    naaloss_value_and_grad,
)
from naaloss.mask_model import forward, init_params
from naaloss.signal_core import AudioClip, StftConfig
from conftest import random_triple, tiny_config

L1 = DistanceSpec("l1", "time")
L2 = DistanceSpec("l2", "time")


def clip(values):
    return AudioClip(np.array(values, dtype=float))


def hand_example():
    return clip([1.1, 0.0]), clip([0.0, 0.4]), clip([1.0, 0.5]), clip([1.0, 0.0])


def test_option_alpha_hand_example():
    dec = decompose(*hand_example(), option="alpha")
    np.testing.assert_allclose(dec.theta.samples, [0.05, 0.05], atol=1e-15)
    np.testing.assert_array_equal(dec.residual_noise.samples, [0.0, 0.4])


def test_option_beta_hand_example():
    dec = decompose(*hand_example(), option="beta")
    np.testing.assert_allclose(dec.theta_c.samples, [0.1, 0.0], atol=1e-15)
    np.testing.assert_allclose(dec.theta_m.samples, [0.0, 0.1], atol=1e-15)


def test_unknown_option():
    with pytest.raises(ConfigError):
        decompose(*hand_example(), option="gamma")


def test_decompose_length_mismatch():
    fx, fy, fz, x = hand_example()
    with pytest.raises(ShapeMismatchError):
        decompose(fx, fy, fz, clip([1.0, 0.0, 0.0]))


def test_estim_examples():
    x = clip(np.zeros(10))
    assert loss_estim(x, x) == 0.0
    assert loss_estim(clip(np.full(10, 0.1)), x, L2) == pytest.approx(0.01, abs=1e-15)
    assert loss_estim(clip([0.1, -0.3]), clip([0.0, 0.0]), L1) == pytest.approx(0.2, abs=1e-15)


def test_deatf_examples():
    assert loss_deatf(decompose(*hand_example(), option="beta"), L1) == pytest.approx(0.10, abs=1e-15)
    assert loss_deatf(decompose(*hand_example(), option="alpha"), L1) == pytest.approx(0.05, abs=1e-15)
    x, y = clip([0.3, -0.2]), clip([0.1, 0.7])
    z = clip(x.samples + y.samples)
    assert loss_deatf(decompose(x, y, z, x, "alpha")) == pytest.approx(0.0, abs=1e-30)
    assert loss_deatf(decompose(x, y, z, x, "beta")) == pytest.approx(0.0, abs=1e-30)


def test_ignor_examples():
    assert loss_ignor(clip(np.zeros(8))) == 0.0
    assert loss_ignor(clip(np.full(8, 0.2)), L2) == pytest.approx(0.04, abs=1e-15)
    assert loss_ignor(clip([0.1, -0.2])) > 0


def test_total_examples():
    assert naaloss_total(1.0, 2.0, 3.0, LossWeights(0.1, 0.1)) == pytest.approx(1.3, abs=1e-12)
    assert naaloss_total(0.7, 2.0, 3.0, LossWeights(0.0, 0.0)) == 0.7
    with pytest.raises(ConfigError):
        LossWeights(0.6, 0.5)
    with pytest.raises(ConfigError):
        LossWeights(-0.1, 0.0)


def test_distance_aliases_and_errors():
    assert DistanceSpec("mse", "waveform") == DistanceSpec("l2", "time")
    assert DistanceSpec("L1", "stft-magnitude").domain == "stft"
    with pytest.raises(ConfigError):
        DistanceSpec("l3")


def test_check_triple_names_deviation():
    x, y = clip([0.1, 0.2]), clip([0.3, 0.1])
    check_triple(x, y, clip([0.4, 0.3]))
    with pytest.raises(TripleMismatchError, match="5.000e-02"):
        check_triple(x, y, clip([0.4, 0.35]))


pcm24 = arrays(np.int64, 64, elements=st.integers(-(2**23), 2**23 - 1))


@settings(max_examples=60, deadline=None)
@given(pcm24, pcm24, pcm24, pcm24)
def test_beta_reconstruction_bit_exact_on_pcm_grid(fx, fy, fz, x):
    fx, fy, fz, x = (AudioClip(a / 2.0**23) for a in (fx, fy, fz, x))
    dec = decompose(fx, fy, fz, x, "beta")
    np.testing.assert_array_equal(dec.theta_m.samples + fy.samples + x.samples, fz.samples)
    np.testing.assert_array_equal(dec.theta_c.samples + x.samples, fx.samples)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 32, elements=st.floats(-1.0, 1.0)),
       arrays(np.float64, 32, elements=st.floats(-1.0, 1.0)),
       arrays(np.float64, 32, elements=st.floats(-1.0, 1.0)))
def test_beta_reconstruction_within_rounding_in_float64(fy, fz, x):
    dec = decompose(AudioClip(x), AudioClip(fy), AudioClip(fz), AudioClip(x), "beta")
    recon = dec.theta_m.samples + fy + x
    bound = 4 * np.finfo(float).eps * np.maximum.reduce([np.abs(fy), np.abs(fz), np.abs(x)])
    assert np.all(np.abs(recon - fz) <= bound)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_identity_enhancer_has_no_artifacts(seed):
    tr = random_triple(np.random.default_rng(seed), n=256)
    for option in ("alpha", "beta"):
        dec = decompose(tr.x, tr.y, tr.z, tr.x, option)
        for name, c in dec.artifacts().items():
            assert np.max(np.abs(c.samples)) <= 1e-15, name


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["l1", "l2"]), st.sampled_from(["time", "stft"]))
def test_distance_gradient_matches_directional_difference(seed, metric, domain):
    rng = np.random.default_rng(seed)
    spec = DistanceSpec(metric, domain, StftConfig(32, 16))
    a = rng.standard_normal(100)
    b = rng.standard_normal(100)
    d = rng.standard_normal(100)
    _, g = distance(a, b, spec, with_grad=True)
    h = 1e-6
    num = (distance(a + h * d, b, spec) - distance(a - h * d, b, spec)) / (2 * h)
    assert num == pytest.approx(np.dot(g, d), rel=1e-4, abs=1e-8)


def test_value_and_grad_agrees_with_value(rng, tiny_params):
    tr = random_triple(rng)
    for option in ("alpha", "beta"):
        cfg = LossConfig.simple(option, 0.2, 0.3, stft_config=tiny_params.config.stft)
        total, grads, dec, terms = naaloss_value_and_grad(tiny_params, tr.x, tr.y, tr.z, cfg)
        ref = naaloss_value(tiny_params, tr.x, tr.y, tr.z, cfg)
        assert total == terms.total == pytest.approx(ref.total, rel=1e-14)
        assert terms.estim == pytest.approx(ref.estim, rel=1e-14)
        assert grads.n_parameters == tiny_params.n_parameters
        assert dec.option == option


def test_degenerate_weights_equal_estimation_loss(rng, tiny_params):
    tr = random_triple(rng)
    cfg = LossConfig.simple("beta", 0.0, 0.0)
    total, grads, _, terms = naaloss_value_and_grad(tiny_params, tr.x, tr.y, tr.z, cfg)
    fz, _, cache = forward(tiny_params, tr.z)
    assert total == loss_estim(fz, tr.x)
    assert total == terms.estim


def test_zero_noise_rejected(rng, tiny_params):
    tr = random_triple(rng)
    with pytest.raises(ZeroPowerError):
        naaloss_value_and_grad(tiny_params, tr.x, tr.x.with_samples(np.zeros(len(tr.x))), tr.x)


def test_corrupt_triple_rejected(rng, tiny_params):
    tr = random_triple(rng)
    with pytest.raises(TripleMismatchError):
        naaloss_value_and_grad(tiny_params, tr.x, tr.y, tr.x)


@pytest.mark.parametrize("option", ["alpha", "beta"])
@pytest.mark.parametrize("metric", ["l2", "l1"])
@pytest.mark.parametrize("domain", ["time", "stft"])
def test_composite_gradient_finite_differences(option, metric, domain):
    params = init_params(tiny_config())
    rng = np.random.default_rng(5)
    tr = random_triple(rng, n=3200)
    cfg = LossConfig.simple(option, 0.1, 0.1, metric, domain, params.config.stft)
    _, grads, _, _ = naaloss_value_and_grad(params, tr.x, tr.y, tr.z, cfg)
    g = grads.flat()
    base = params.flat()
    h = 1e-5
    worst = 0.0
    for i in rng.choice(base.size, size=25, replace=False):
        up, down = base.copy(), base.copy()
        up[i] += h
        down[i] -= h
        num = (naaloss_value(params.from_flat(up), tr.x, tr.y, tr.z, cfg).total
               - naaloss_value(params.from_flat(down), tr.x, tr.y, tr.z, cfg).total) / (2 * h)
        worst = max(worst, abs(num - g[i]) / max(abs(num), abs(g[i]), 1e-6))
    assert worst < 1e-4

