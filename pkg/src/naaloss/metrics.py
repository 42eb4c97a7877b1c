"""Evaluation metrics and WER bookkeeping.

PESQ is not available here; SI-SNR stands in as the quality score.  STOI
follows the standard short-time objective intelligibility recipe (10 kHz,
one-third octave bands, 384 ms segments, -15 dB clipping).
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from .exceptions import (
    DegenerateWerrError,
    InvalidClipError,
    ShapeMismatchError,
    ZeroPowerError,
)
from .signal_core import AudioClip

__all__ = [
    "MetricReport",
    "WerRecord",
    "si_snr",
    "stoi",
    "signal_energy_db",
    "werr",
    "observation_add",
    "metric_report",
    "read_wer_csv",
    "werr_table",
    "write_metric_csv",
    "METRIC_CSV_HEADER",
    "WER_CSV_HEADER",
]

SI_SNR_CAP_DB = 100.0
ENERGY_FLOOR_DB = -120.0
METRIC_CSV_HEADER = ["clip_id", "si_snr_db", "stoi", "artifact_energy_db", "residual_noise_energy_db"]
WER_CSV_HEADER = ["system_label", "am_label", "wer_percent"]

# STOI constants
_FS = 10000
_FRAME = 256
_NFFT = 512
_BANDS = 15
_MIN_FREQ = 150.0
_SEGMENT = 30
_BETA_DB = -15.0
_DYN_RANGE_DB = 40.0
_EPS = np.finfo(np.float64).eps


def _pair(est, ref):
    if est.sample_rate_hz != ref.sample_rate_hz:
        raise ShapeMismatchError(
            f"sample rate mismatch: {est.sample_rate_hz} Hz vs {ref.sample_rate_hz} Hz"
        )
    if len(est) != len(ref):
        raise ShapeMismatchError(f"length mismatch: {len(est)} vs {len(ref)} samples")
    return est.samples, ref.samples


def si_snr(est: AudioClip, ref: AudioClip) -> float:
    """Scale-invariant SNR in dB, capped at +/-100 dB.

    The target is the orthogonal projection of ``est`` onto ``ref`` (no mean
    removal); an all-zero estimate scores -100 dB.
    """
    e, r = _pair(est, ref)
    r_pow = float(r @ r)
    if r_pow == 0.0:
        raise ZeroPowerError("reference signal is all zeros")
    target = (float(e @ r) / r_pow) * r
    noise = e - target
    t_pow = float(target @ target)
    n_pow = float(noise @ noise)
    if t_pow == 0.0:
        return -SI_SNR_CAP_DB
    if n_pow == 0.0:
        return SI_SNR_CAP_DB
    return float(np.clip(10.0 * math.log10(t_pow / n_pow), -SI_SNR_CAP_DB, SI_SNR_CAP_DB))


def signal_energy_db(clip: AudioClip) -> float:
    """Mean-square level in dB, floored at -120 dB."""
    power = float(np.mean(clip.samples**2))
    if power <= 10.0 ** (ENERGY_FLOOR_DB / 10.0):
        return ENERGY_FLOOR_DB
    return 10.0 * math.log10(power)


def observation_add(fz: AudioClip, z: AudioClip, coeff: float = 0.5) -> AudioClip:
    """Add ``coeff`` times the noisy observation back onto the enhanced signal."""
    a, b = _pair(fz, z)
    return fz.with_samples(a + coeff * b)


def werr(wer_uc: float, wer_org: float, wer_naa: float) -> float:
    """Relative WER reduction in percent; not clamped."""
    denom = wer_org - wer_uc
    if denom == 0:
        raise DegenerateWerrError(f"WER of original system equals clean WER ({wer_org})")
    return (1.0 - (wer_naa - wer_uc) / denom) * 100.0


# ---------------------------------------------------------------- STOI


def _third_octave_matrix(fs, nfft, n_bands, min_freq):
    freqs = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(n_bands, dtype=np.float64)
    lo = min_freq * 2.0 ** ((2 * k - 1) / 6)
    hi = min_freq * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((n_bands, freqs.shape[0]))
    for i in range(n_bands):
        l_ind = int(np.argmin((freqs - lo[i]) ** 2))
        h_ind = int(np.argmin((freqs - hi[i]) ** 2))
        obm[i, l_ind:h_ind] = 1.0
    return obm


_OBM = _third_octave_matrix(_FS, _NFFT, _BANDS, _MIN_FREQ)


def _stoi_window():
    return np.hanning(_FRAME + 2)[1:-1]


def _frames(x, hop):
    starts = np.arange(0, x.shape[0] - _FRAME, hop)
    if starts.size == 0:
        return np.zeros((0, _FRAME))
    return x[starts[:, None] + np.arange(_FRAME)]


def _remove_silent_frames(x, y, hop):
    win = _stoi_window()
    xf = _frames(x, hop) * win
    yf = _frames(y, hop) * win
    if xf.shape[0] == 0:
        return np.zeros(0), np.zeros(0)
    energy = 20.0 * np.log10(np.linalg.norm(xf, axis=1) + _EPS)
    keep = energy > energy.max() - _DYN_RANGE_DB
    xf, yf = xf[keep], yf[keep]
    n_out = (xf.shape[0] - 1) * hop + _FRAME
    pos = (np.arange(xf.shape[0]) * hop)[:, None] + np.arange(_FRAME)
    x_out = np.bincount(pos.ravel(), weights=xf.ravel(), minlength=n_out)
    y_out = np.bincount(pos.ravel(), weights=yf.ravel(), minlength=n_out)
    return x_out, y_out


@functools.lru_cache(maxsize=8)
def _antialias_filter(up, down):
    # Kaiser-windowed sinc with 60 dB rejection, as in Octave's resample()
    cutoff = 1.0 / (2 * max(up, down))
    rejection_db = 60.0
    half = math.ceil((rejection_db - 8.0) / (28.714 * cutoff / 10.0))
    t = np.arange(-half, half + 1)
    beta = 0.1102 * (rejection_db - 8.7)
    h = np.kaiser(2 * half + 1, beta) * 2 * up * cutoff * np.sinc(2 * cutoff * t)
    return h / h.sum()


def _resample(x, rate):
    if rate == _FS:
        return x
    ratio = Fraction(_FS, rate)
    up, down = ratio.numerator, ratio.denominator
    return resample_poly(x, up, down, window=_antialias_filter(up, down))


def stoi(est: AudioClip, ref: AudioClip) -> float:
    """Short-time objective intelligibility of ``est`` against clean ``ref``."""
    e, r = _pair(est, ref)
    if ref.duration_s < 0.5:
        raise InvalidClipError(f"STOI needs at least 0.5 s of signal, got {ref.duration_s:.3f} s")
    if not np.any(r):
        raise ZeroPowerError("reference is silent in every frame")
    r = _resample(r, ref.sample_rate_hz)
    e = _resample(e, ref.sample_rate_hz)
    hop = _FRAME // 2
    r, e = _remove_silent_frames(r, e, hop)
    win = _stoi_window()
    r_spec = np.fft.rfft(_frames(r, hop) * win, n=_NFFT, axis=1)
    e_spec = np.fft.rfft(_frames(e, hop) * win, n=_NFFT, axis=1)
    if r_spec.shape[0] < _SEGMENT:
        raise InvalidClipError(
            f"only {r_spec.shape[0]} non-silent frames; STOI needs {_SEGMENT}"
        )
    # band envelopes, bands x frames
    r_tob = np.sqrt(_OBM @ (np.abs(r_spec) ** 2).T)
    e_tob = np.sqrt(_OBM @ (np.abs(e_spec) ** 2).T)
    n_seg = r_tob.shape[1] - _SEGMENT + 1
    idx = np.arange(n_seg)[:, None] + np.arange(_SEGMENT)
    r_seg = r_tob[:, idx].transpose(1, 0, 2)  # segments x bands x frames
    e_seg = e_tob[:, idx].transpose(1, 0, 2)

    scale = np.linalg.norm(r_seg, axis=2, keepdims=True) / (
        np.linalg.norm(e_seg, axis=2, keepdims=True) + _EPS
    )
    e_norm = e_seg * scale
    bound = 1.0 + 10.0 ** (-_BETA_DB / 20.0)
    e_clip = np.minimum(e_norm, r_seg * bound)

    e_clip = e_clip - e_clip.mean(axis=2, keepdims=True)
    r_c = r_seg - r_seg.mean(axis=2, keepdims=True)
    e_clip /= np.linalg.norm(e_clip, axis=2, keepdims=True) + _EPS
    r_c /= np.linalg.norm(r_c, axis=2, keepdims=True) + _EPS
    return float(np.sum(e_clip * r_c) / (_BANDS * n_seg))


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class MetricReport:
    si_snr_db: float
    stoi: float
    artifact_energy_db: float
    residual_noise_energy_db: float

    def as_row(self, clip_id):
        return [clip_id, f"{self.si_snr_db:.6f}", f"{self.stoi:.6f}",
                f"{self.artifact_energy_db:.6f}", f"{self.residual_noise_energy_db:.6f}"]


def metric_report(fz: AudioClip, x: AudioClip, decomposition) -> MetricReport:
    """Scores for one enhanced noisy clip; artifact energy is the mean over
    the decomposition's artifact clips."""
    artifacts = [signal_energy_db(c) for c in decomposition.artifacts().values()]
    return MetricReport(
        si_snr(fz, x),
        stoi(fz, x),
        float(np.mean(artifacts)),
        signal_energy_db(decomposition.residual_noise),
    )


def write_metric_csv(rows, path):
    """``rows`` is an iterable of ``(clip_id, MetricReport)``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_CSV_HEADER)
        for clip_id, report in rows:
            writer.writerow(report.as_row(clip_id))


@dataclass(frozen=True)
class WerRecord:
    system_label: str
    am_label: str
    wer_percent: float

    def __post_init__(self):
        if not math.isfinite(self.wer_percent) or self.wer_percent < 0:
            raise ValueError(f"WER must be finite and nonnegative, got {self.wer_percent}")


def read_wer_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != WER_CSV_HEADER:
            raise ValueError(
                f"{path}: expected header {','.join(WER_CSV_HEADER)}, got {header!r}"
            )
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                records.append(WerRecord(row[0].strip(), row[1].strip(), float(row[2])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records


def werr_table(records, uc_label, org_label, naa_labels=None):
    """WERR for every NAaLoss system within each acoustic-model group.

    Returns a list of dicts; a group whose original WER equals the clean WER
    yields rows with ``status="degenerate"`` and no value.
    """
    groups = {}
    for rec in records:
        groups.setdefault(rec.am_label, {})[rec.system_label] = rec.wer_percent
    rows = []
    for am, systems in groups.items():
        for label in (uc_label, org_label):
            if label not in systems:
                raise KeyError(f"acoustic model {am!r} has no row for system {label!r}")
        targets = naa_labels or [s for s in systems if s not in (uc_label, org_label)]
        for naa in targets:
            if naa not in systems:
                raise KeyError(f"acoustic model {am!r} has no row for system {naa!r}")
            row = {
                "am_label": am, "uc_label": uc_label, "org_label": org_label,
                "naa_label": naa, "wer_uc": systems[uc_label],
                "wer_org": systems[org_label], "wer_naa": systems[naa],
            }
            try:
                row["werr_percent"] = werr(row["wer_uc"], row["wer_org"], row["wer_naa"])
                row["status"] = "ok"
            except DegenerateWerrError:
                row["werr_percent"] = None
                row["status"] = "degenerate"
            rows.append(row)
    return rows
