"""Slow, loop-based reference implementations used to freeze expected values.

Run ``python tests/oracles.py`` to regenerate ``tests/data/oracle_values.json``.
The frozen file is what the tests compare against; regenerating it is only
appropriate when an oracle itself is found to be wrong.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
FROZEN_PATH = os.path.join(HERE, "data", "oracle_values.json")


def periodic_hann(n):
    return np.array([0.5 - 0.5 * math.cos(2.0 * math.pi * k / n) for k in range(n)])


def reflect_index(i, n):
    # half-sample symmetric extension: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
    period = 2 * n
    i %= period
    return i if i < n else period - 1 - i


def naive_stft(x, fft_size, hop):
    n = len(x)
    pad = fft_size // 2
    n_frames = 1 + math.ceil(n / hop)
    win = periodic_hann(fft_size)
    bins = fft_size // 2 + 1
    out = np.zeros((n_frames, bins), dtype=complex)
    for t in range(n_frames):
        for f in range(bins):
            acc = 0j
            for k in range(fft_size):
                sample = x[reflect_index(t * hop + k - pad, n)]
                acc += win[k] * sample * complex(math.cos(2 * math.pi * f * k / fft_size),
                                                 -math.sin(2 * math.pi * f * k / fft_size))
            out[t, f] = acc
    return out


def naive_si_snr(est, ref):
    dot = sum(e * r for e, r in zip(est, ref))
    ref_energy = sum(r * r for r in ref)
    target = [dot / ref_energy * r for r in ref]
    resid = [e - t for e, t in zip(est, target)]
    return 10.0 * math.log10(sum(t * t for t in target) / sum(v * v for v in resid))


def naive_werr(uc, org, naa):
    return (1.0 - (naa - uc) / (org - uc)) * 100.0


def naive_tiny_model(x, weights, biases, fft_size, hop, radius):
    """Mask model forward pass written frame by frame."""
    spec = naive_stft(x, fft_size, hop)
    logmag = np.log1p(np.abs(spec))
    mu = sum(logmag.ravel()) / logmag.size
    sd = math.sqrt(sum((v - mu) ** 2 for v in logmag.ravel()) / logmag.size)
    norm = (logmag - mu) / (sd + 1e-5)
    n_frames = norm.shape[0]
    masks = np.zeros_like(norm)
    for t in range(n_frames):
        feat = []
        for d in range(-radius, radius + 1):
            feat.extend(norm[min(max(t + d, 0), n_frames - 1)])
        h = np.array(feat)
        for i, (w, b) in enumerate(zip(weights, biases)):
            a = np.array([sum(h[j] * w[j, o] for j in range(len(h))) + b[o] for o in range(w.shape[1])])
            h = np.tanh(a) if i < len(weights) - 1 else 1.0 / (1.0 + np.exp(-a))
        masks[t] = h
    masked = masks * spec
    # weighted overlap-add divided by the summed squared window
    win = periodic_hann(fft_size)
    total = (n_frames - 1) * hop + fft_size
    buf = np.zeros(total)
    env = np.zeros(total)
    for t in range(n_frames):
        frame = np.fft.irfft(masked[t], n=fft_size)
        for k in range(fft_size):
            buf[t * hop + k] += frame[k] * win[k]
            env[t * hop + k] += win[k] ** 2
    pad = fft_size // 2
    return (buf / np.where(env > 1e-10, env, 1.0))[pad : pad + len(x)]


def tiny_model_case():
    rng = np.random.default_rng(7)
    fft_size, hop, radius = 16, 8, 1
    bins = fft_size // 2 + 1
    x = rng.standard_normal(60) * 0.3
    shapes = [((2 * radius + 1) * bins, 5), (5, bins)]
    weights = [rng.uniform(-0.5, 0.5, s) for s in shapes]
    biases = [rng.uniform(-0.1, 0.1, s[1]) for s in shapes]
    return x, weights, biases, fft_size, hop, radius


def stoi_cases():
    """Seeded (clean, degraded) pairs; the reference score came from pystoi."""
    from naaloss.trainer import generate_synthetic_clip

    cases = []
    for seed, snr in ((1, 10.0), (2, 5.0), (3, 0.0)):
        clean = generate_synthetic_clip("speechlike", 1.5, seed).samples
        noise = np.random.default_rng(100 + seed).standard_normal(clean.shape[0])
        noise *= math.sqrt(np.mean(clean**2) / np.mean(noise**2) / 10 ** (snr / 10))
        cases.append((f"seed{seed}_snr{int(snr)}", clean, clean + noise))
    return cases


def compute():
    rng = np.random.default_rng(2024)
    x_stft = rng.standard_normal(50)
    spec = naive_stft(x_stft, 16, 8)

    a = rng.standard_normal(40)
    b = a + 0.3 * rng.standard_normal(40)
    values = {
        "stft": {"seed": 2024, "n": 50, "fft_size": 16, "hop": 8,
                 "real": spec.real.tolist(), "imag": spec.imag.tolist()},
        "si_snr": {"seed": 2024, "value": naive_si_snr(b, a)},
        "werr": {"uc": 5.04, "org": 10.21, "naa": 9.53, "value": naive_werr(5.04, 10.21, 9.53)},
    }
    x, weights, biases, fft_size, hop, radius = tiny_model_case()
    values["tiny_model"] = {"enhanced": naive_tiny_model(x, weights, biases, fft_size, hop, radius).tolist()}

    try:
        from pystoi import stoi as reference_stoi
    except ImportError:  # pragma: no cover - only needed when regenerating
        reference_stoi = None
    if reference_stoi is not None:
        values["stoi"] = {name: float(reference_stoi(clean, noisy, 16000, extended=False))
                          for name, clean, noisy in stoi_cases()}
    return values, spec


def load_frozen():
    with open(FROZEN_PATH) as fh:
        return json.load(fh)


if __name__ == "__main__":
    values, _ = compute()
    os.makedirs(os.path.dirname(FROZEN_PATH), exist_ok=True)
    with open(FROZEN_PATH, "w") as fh:
        json.dump(values, fh, indent=1)
    print(f"wrote {FROZEN_PATH}")
