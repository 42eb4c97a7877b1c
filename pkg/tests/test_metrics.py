import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from naaloss.exceptions import DegenerateWerrError, InvalidClipError, ShapeMismatchError
from naaloss.loss import decompose
from naaloss.metrics import (
    WerRecord,
    metric_report,
    observation_add,
    read_wer_csv,
    si_snr,
    signal_energy_db,
    stoi,
    werr,
    werr_table,
    write_metric_csv,
)
from naaloss.signal_core import AudioClip
from naaloss.trainer import generate_synthetic_clip
from oracles import load_frozen, naive_si_snr, stoi_cases


# ------------------------------------------------------------ SI-SNR

def test_si_snr_caps_and_scale_invariance(rng):
    ref = AudioClip(rng.standard_normal(1000))
    assert si_snr(ref, ref) == 100.0
    assert si_snr(ref.with_samples(2 * ref.samples), ref) == 100.0
    assert si_snr(ref.with_samples(np.zeros(1000)), ref) == -100.0


def test_si_snr_orthogonal_equal_power_is_zero_db(rng):
    r = rng.standard_normal(1000)
    w = rng.standard_normal(1000)
    w -= (w @ r) / (r @ r) * r
    w *= np.linalg.norm(r) / np.linalg.norm(w)
    assert si_snr(AudioClip(r + w), AudioClip(r)) == pytest.approx(0.0, abs=1e-9)


def test_si_snr_matches_frozen_oracle():
    rng = np.random.default_rng(2024)
    rng.standard_normal(50)
    a = rng.standard_normal(40)
    b = a + 0.3 * rng.standard_normal(40)
    frozen = load_frozen()["si_snr"]["value"]
    assert si_snr(AudioClip(b), AudioClip(a)) == pytest.approx(frozen, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 3.0), st.floats(1e-3, 1e3))
def test_si_snr_property_vs_loop_oracle(seed, noise, gain):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(64)
    b = a + noise * rng.standard_normal(64)
    got = si_snr(AudioClip(gain * b), AudioClip(a))
    assert got == pytest.approx(naive_si_snr(b, a), abs=1e-8)


def test_si_snr_length_mismatch():
    with pytest.raises(ShapeMismatchError):
        si_snr(AudioClip(np.ones(3)), AudioClip(np.ones(4)))


# ------------------------------------------------------------ energy / OA / WERR

def test_energy_examples():
    assert signal_energy_db(AudioClip(np.zeros(10))) == -120.0
    assert signal_energy_db(AudioClip(np.full(10, 0.1))) == pytest.approx(-20.0, abs=1e-12)
    assert signal_energy_db(AudioClip(np.ones(10))) == 0.0


def test_observation_add_examples(rng):
    fz = AudioClip(rng.standard_normal(20))
    z = AudioClip(rng.standard_normal(20))
    np.testing.assert_array_equal(observation_add(fz, z, 0.0).samples, fz.samples)
    zero = AudioClip(np.zeros(20))
    np.testing.assert_array_equal(observation_add(zero, z, 0.5).samples, 0.5 * z.samples)
    assert observation_add(AudioClip([0.2]), AudioClip([0.4])).samples[0] == pytest.approx(0.4)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 500))
def test_observation_add_elementwise_exact(seed, n):
    rng = np.random.default_rng(seed)
    fz, z = rng.uniform(-1, 1, (2, n))
    out = observation_add(AudioClip(fz), AudioClip(z), 0.5).samples
    np.testing.assert_array_equal(out, fz + 0.5 * z)


def test_werr_endpoints_and_reference_values():
    assert werr(5.04, 10.21, 5.04) == 100.0
    assert werr(5.04, 10.21, 10.21) == 0.0
    frozen = load_frozen()["werr"]
    assert werr(5.04, 10.21, 9.53) == pytest.approx(frozen["value"], abs=1e-12)
    assert werr(5.04, 10.21, 9.53) == pytest.approx(13.15, abs=0.01)
    with pytest.raises(DegenerateWerrError):
        werr(5.0, 5.0, 4.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 50), st.floats(0.1, 50), st.floats(0, 100))
def test_werr_affine_in_naa(uc, gap, naa):
    org = uc + gap
    mid = werr(uc, org, (uc + org) / 2)
    assert mid == pytest.approx(50.0, abs=1e-9)
    assert werr(uc, org, naa) == pytest.approx(100.0 * (org - naa) / (org - uc), abs=1e-6)


def test_wer_csv_and_table(tmp_path):
    path = tmp_path / "wer.csv"
    path.write_text("system_label,am_label,wer_percent\nuc,cct,5.04\norg,cct,10.21\npre_b,cct,9.53\n"
                    "uc,mct,4.0\norg,mct,4.0\npre_b,mct,3.9\n")
    rows = werr_table(read_wer_csv(path), "uc", "org")
    by_am = {r["am_label"]: r for r in rows}
    assert by_am["cct"]["werr_percent"] == pytest.approx(13.15, abs=0.01)
    assert by_am["cct"]["status"] == "ok"
    assert by_am["mct"]["status"] == "degenerate" and by_am["mct"]["werr_percent"] is None


def test_wer_csv_malformed(tmp_path):
    path = tmp_path / "wer.csv"
    path.write_text("system,am,wer\nuc,cct,5\n")
    with pytest.raises(ValueError, match="header"):
        read_wer_csv(path)
    path.write_text("system_label,am_label,wer_percent\nuc,cct,abc\n")
    with pytest.raises(ValueError, match=":2:"):
        read_wer_csv(path)
    with pytest.raises(ValueError):
        WerRecord("a", "b", -1.0)


# ------------------------------------------------------------ STOI

def test_stoi_self_is_one():
    x = generate_synthetic_clip("speechlike", 1.5, 0)
    assert stoi(x, x) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("case", stoi_cases(), ids=lambda c: c[0])
def test_stoi_matches_frozen_reference(case):
    name, clean, noisy = case
    frozen = load_frozen()["stoi"][name]
    assert stoi(AudioClip(noisy), AudioClip(clean)) == pytest.approx(frozen, abs=1e-9)


def test_stoi_noise_scores_below_self():
    x = generate_synthetic_clip("speechlike", 1.5, 4)
    w = AudioClip(np.random.default_rng(1).standard_normal(len(x)) * 0.1)
    assert stoi(w, x) < stoi(x, x)


def test_stoi_input_errors():
    short = AudioClip(np.ones(4000))
    with pytest.raises(InvalidClipError):
        stoi(short, short)
    silent = AudioClip(np.zeros(16000))
    with pytest.raises(Exception):
        stoi(silent, silent)


def test_metric_report_and_csv(tmp_path, rng):
    x = generate_synthetic_clip("speechlike", 1.0, 2)
    y = x.with_samples(0.05 * rng.standard_normal(len(x)))
    fz = x.with_samples(x.samples + 0.5 * y.samples)
    dec = decompose(x, y.with_samples(0.5 * y.samples), fz, x, "beta")
    rep = metric_report(fz, x, dec)
    assert rep.artifact_energy_db == -120.0
    assert rep.residual_noise_energy_db == pytest.approx(
        10 * math.log10(np.mean((0.5 * y.samples) ** 2)))
    path = tmp_path / "m.csv"
    write_metric_csv([("c0", rep)], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "clip_id,si_snr_db,stoi,artifact_energy_db,residual_noise_energy_db"
    assert lines[1].startswith("c0,")
