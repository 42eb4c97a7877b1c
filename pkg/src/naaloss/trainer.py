"""Data synthesis and the three training regimes.

``pretrain`` optimises the estimation loss only, ``finetune`` resumes a
checkpoint (parameters *and* Adam moments) and optimises the full objective,
``scratch`` optimises the full objective from a fresh initialisation.

Training is deterministic: the train/validation split and every epoch's
shuffle are drawn from generators seeded by ``(seed, ...)``, gradients of a
batch are accumulated in batch order, and epoch numbering continues across a
checkpoint so a resumed run replays the shuffles of an uninterrupted one.
"""

from __future__ import annotations

import csv
import glob
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (
    ConfigError,
    DivergenceError,
    MissingMomentumError,
    NonFiniteError,
)
from .loss import (
    LossConfig,
    LossWeights,
    check_triple,
    decompose,
    naaloss_value,
    naaloss_value_and_grad,
)
from .mask_model import ModelConfig, forward, init_params, load_params, save_params
from .metrics import si_snr, signal_energy_db, stoi
from .optim import adam_init, adam_step
from .signal_core import DEFAULT_SAMPLE_RATE, AudioClip, mix_at_snr, read_wav, write_wav

__all__ = [
    "TrainTriple",
    "TrainConfig",
    "TrainResult",
    "REGIMES",
    "DEFAULT_EPOCHS",
    "DEFAULT_SNRS",
    "generate_synthetic_clip",
    "synthesize_dataset",
    "write_dataset",
    "load_dataset",
    "split_indices",
    "train",
    "evaluate_model",
    "write_log_csv",
    "LOG_CSV_HEADER",
]

log = logging.getLogger(__name__)

REGIMES = ("pretrain", "finetune", "scratch")
DEFAULT_EPOCHS = {"pretrain": 50, "finetune": 20, "scratch": 70}
DEFAULT_SNRS = (0.0, 5.0, 10.0, 15.0)
SYNTHETIC_KINDS = ("speechlike", "whitenoise", "babblelike")
LOG_CSV_HEADER = ["epoch", "split", "l_estim", "l_deatf", "l_ignor", "l_naa"]
DISK_TRIPLE_TOLERANCE = 1e-6


# ---------------------------------------------------------------- synthesis


def _interp_targets(rng, n, sr, n_seg, lo, hi):
    """Piecewise-linear trajectory through random targets, one per segment."""
    knots = np.linspace(0, n, n_seg + 1)
    return np.interp(np.arange(n), knots, rng.uniform(lo, hi, n_seg + 1))


def _speechlike(rng, n, sr):
    t = np.arange(n) / sr
    duration = n / sr
    n_syll = max(1, int(round(duration / rng.uniform(0.18, 0.3))))

    base = rng.uniform(100.0, 220.0)
    f0 = base * (1.0 + 0.1 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t + rng.uniform(0, 2 * np.pi)))
    f0 *= _interp_targets(rng, n, sr, n_syll, 0.9, 1.1)
    phase = 2 * np.pi * np.cumsum(f0) / sr

    formants = [
        (_interp_targets(rng, n, sr, n_syll, 300, 850), 90.0),
        (_interp_targets(rng, n, sr, n_syll, 900, 2300), 120.0),
        (_interp_targets(rng, n, sr, n_syll, 2400, 3300), 180.0),
    ]
    n_harm = int(3800.0 // (1.25 * base))
    sig = np.zeros(n)
    for k in range(1, n_harm + 1):
        fk = k * f0
        gain = sum(np.exp(-0.5 * ((fk - fc) / bw) ** 2) for fc, bw in formants) + 0.05
        gain = np.where(fk < 3950.0, gain, 0.0)
        sig += gain / np.sqrt(k) * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    # syllable envelope: raised-cosine bursts separated by short pauses
    env = np.full(n, 1e-3)
    edges = np.linspace(0, n, n_syll + 1).astype(int)
    for a, b in zip(edges[:-1], edges[1:]):
        voiced = int((b - a) * rng.uniform(0.6, 0.9))
        if voiced > 1:
            env[a : a + voiced] += rng.uniform(0.5, 1.0) * np.hanning(voiced)
    return sig * env


def generate_synthetic_clip(kind, duration_s, seed, sample_rate_hz=DEFAULT_SAMPLE_RATE) -> AudioClip:
    """Seeded stand-in for corpus audio, peak-normalised to 0.5.

    ``speechlike`` is a formant-weighted harmonic stack below 4 kHz with a
    syllabic envelope, ``whitenoise`` is uniform noise and ``babblelike`` sums
    five independent speechlike streams.
    """
    if kind not in SYNTHETIC_KINDS:
        raise ConfigError(f"synthetic kind must be one of {SYNTHETIC_KINDS}, got {kind!r}")
    if not duration_s > 0:
        raise ConfigError(f"duration_s must be positive, got {duration_s}")
    n = max(1, int(round(duration_s * sample_rate_hz)))
    rng = np.random.default_rng(seed)
    if kind == "speechlike":
        sig = _speechlike(rng, n, sample_rate_hz)
    elif kind == "whitenoise":
        sig = rng.uniform(-1.0, 1.0, n)
    else:
        sig = sum(_speechlike(np.random.default_rng(s), n, sample_rate_hz)
                  for s in rng.integers(0, 2**63, size=5))
    peak = np.max(np.abs(sig))
    if peak > 0:
        sig = 0.5 * sig / peak
    return AudioClip(sig, sample_rate_hz)


@dataclass(frozen=True, eq=False)
class TrainTriple:
    x: AudioClip
    y: AudioClip
    z: AudioClip
    snr_db: float
    triple_id: str = ""
    clean_id: str = ""
    noise_id: str = ""

    def __post_init__(self):
        check_triple(self.x, self.y, self.z)


def _parse_source(source):
    """``"synthetic:kind1,kind2"`` -> ("synthetic", kinds); directory -> ("dir", files)."""
    if source is None:
        raise ConfigError("no corpus path or synthetic spec given")
    if isinstance(source, str) and source.startswith("synthetic"):
        _, _, kinds = source.partition(":")
        kinds = tuple(k.strip() for k in kinds.split(",") if k.strip()) or ("speechlike",)
        for k in kinds:
            if k not in SYNTHETIC_KINDS:
                raise ConfigError(f"unknown synthetic kind {k!r}")
        return "synthetic", kinds
    if not os.path.isdir(source):
        raise FileNotFoundError(f"corpus directory not found: {source}")
    files = sorted(glob.glob(os.path.join(source, "*.wav")))
    if not files:
        raise ConfigError(f"corpus directory {source} contains no .wav files")
    return "dir", tuple(files)


def _to_f32_grid(samples):
    return np.asarray(samples, dtype=np.float64).astype(np.float32).astype(np.float64)


def synthesize_dataset(clean_source, noise_source, snr_list=DEFAULT_SNRS, count=100, seed=0,
                       duration_s=1.5, sample_rate_hz=DEFAULT_SAMPLE_RATE):
    """Build ``count`` (x, y, z) triples with balanced SNR assignment.

    ``x`` and ``y`` are rounded to float32-representable values before
    ``z = x + y`` is formed, so the triple survives a float32 WAV container.
    """
    snr_list = [float(s) for s in snr_list]
    if not snr_list:
        raise ConfigError("snr_list must not be empty")
    if count < 1:
        raise ConfigError("count must be positive")
    clean_kind, clean_items = _parse_source(clean_source)
    noise_kind, noise_items = _parse_source(noise_source)

    rng = np.random.default_rng(seed)
    snrs = rng.permutation(np.resize(np.array(snr_list), count))
    clean_order = rng.permutation(count) % len(clean_items)
    noise_pick = rng.integers(0, len(noise_items), size=count)
    clip_seeds = rng.integers(0, 2**63, size=(count, 2))

    def load(kind, items, index, clip_seed):
        if kind == "synthetic":
            clip = generate_synthetic_clip(items[index], duration_s, int(clip_seed), sample_rate_hz)
            return clip, f"{items[index]}#{int(clip_seed)}"
        clip = read_wav(items[index])
        if clip.sample_rate_hz != sample_rate_hz:
            raise ConfigError(
                f"{items[index]} is {clip.sample_rate_hz} Hz; corpus must be {sample_rate_hz} Hz"
            )
        return clip, os.path.basename(items[index])

    triples = []
    for i in range(count):
        clean, clean_id = load(clean_kind, clean_items, clean_order[i], clip_seeds[i, 0])
        noise, noise_id = load(noise_kind, noise_items, noise_pick[i], clip_seeds[i, 1])
        x = clean.with_samples(_to_f32_grid(clean.samples))
        _, scaled = mix_at_snr(x, noise, snrs[i])
        y = x.with_samples(_to_f32_grid(scaled.samples))
        z = x.with_samples(x.samples + y.samples)
        triples.append(TrainTriple(x, y, z, float(snrs[i]), f"{i:04d}", clean_id, noise_id))
    return triples


MANIFEST_HEADER = ["id", "snr_db", "clean_source", "noise_source", "seed"]


def write_dataset(triples, out_dir, seed=0):
    """Write ``x_####.wav``, ``y_####.wav``, ``z_####.wav`` and ``manifest.csv``."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "manifest.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for t in triples:
            for name, clip in (("x", t.x), ("y", t.y), ("z", t.z)):
                write_wav(clip, os.path.join(out_dir, f"{name}_{t.triple_id}.wav"))
            writer.writerow([t.triple_id, repr(t.snr_db), t.clean_id, t.noise_id, seed])
    return out_dir


def load_dataset(data_dir):
    """Read a dataset directory written by :func:`write_dataset`.

    The float32 container cannot hold ``x``, ``y`` and ``x + y`` exactly at the
    same time; ``z`` is checked against ``x + y`` within 1e-6 and then
    replaced by the float64 sum.
    """
    manifest = os.path.join(data_dir, "manifest.csv")
    if not os.path.exists(manifest):
        raise FileNotFoundError(f"no manifest.csv in {data_dir}")
    triples = []
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER:
            raise ConfigError(f"{manifest}: unexpected header {reader.fieldnames}")
        for row in reader:
            tid = row["id"]
            x, y, z = (read_wav(os.path.join(data_dir, f"{n}_{tid}.wav")) for n in "xyz")
            check_triple(x, y, z, tol=DISK_TRIPLE_TOLERANCE)
            z = x.with_samples(x.samples + y.samples)
            triples.append(TrainTriple(x, y, z, float(row["snr_db"]), tid,
                                       row["clean_source"], row["noise_source"]))
    if not triples:
        raise ConfigError(f"{manifest} lists no triples")
    return triples


def split_indices(n, fraction, seed, salt=0):
    """Deterministic shuffle; the last ``round(fraction * n)`` indices are held out."""
    order = np.random.default_rng([seed, salt]).permutation(n)
    n_hold = int(round(fraction * n))
    if fraction > 0 and n_hold == 0 and n > 1:
        n_hold = 1
    return order[: n - n_hold], order[n - n_hold :]


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    """``epochs=None`` picks the regime default; ``finetune_lr=None`` reuses
    the learning rate stored with the restored optimizer state."""

    regime: str = "pretrain"
    epochs: int | None = None
    batch_size: int = 8
    lr: float = 1e-3
    finetune_lr: float | None = None
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    checkpoint_in: str | None = None
    fresh_moments: bool = False
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.regime == "finetune" and not self.checkpoint_in:
            raise ConfigError("finetune requires checkpoint_in")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.epochs is not None and self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")

    @property
    def n_epochs(self):
        return DEFAULT_EPOCHS[self.regime] if self.epochs is None else self.epochs

    def objective(self):
        """Loss configuration actually optimised (pretrain zeroes both weights)."""
        if self.regime == "pretrain":
            return replace(self.loss, weights=LossWeights(0.0, 0.0))
        return self.loss


@dataclass
class TrainResult:
    checkpoint_path: str
    last_checkpoint_path: str
    log: list
    params: object
    optimizer_state: object
    best_epoch: int


def _mean_terms(params, triples, objective):
    if not triples:
        return None
    rows = np.array([
        [t.estim, t.deatf, t.ignor, t.total]
        for t in (naaloss_value(params, tr.x, tr.y, tr.z, objective) for tr in triples)
    ])
    return rows.mean(axis=0)


def _batch_grad(params, batch, objective):
    """Mean gradient over ``batch`` (summed in batch order) and per-triple terms."""
    total, terms = None, []
    for tr in batch:
        _, g, _, t = naaloss_value_and_grad(params, tr.x, tr.y, tr.z, objective)
        total = g if total is None else total + g
        terms.append(t)
    return total.scale(1.0 / len(batch)), terms


def train(config: TrainConfig, dataset, model_config: ModelConfig | None = None, out_dir="."):
    """Run one regime; writes ``best.ckpt``, ``last.ckpt`` and ``train_log.csv``."""
    dataset = list(dataset)
    if not dataset:
        raise ConfigError("training dataset is empty")
    os.makedirs(out_dir, exist_ok=True)
    objective = config.objective()

    if config.regime == "finetune":
        params, state, meta = load_params(config.checkpoint_in, with_meta=True)
        if state is None:
            if not config.fresh_moments:
                raise MissingMomentumError(
                    f"{config.checkpoint_in} has no optimizer state; "
                    "pass fresh_moments to fine-tune with reset moments"
                )
            state = adam_init(params, lr=config.finetune_lr or config.lr)
        elif config.finetune_lr is not None:
            state = state.with_lr(config.finetune_lr)
        epochs_done = int(meta.get("epochs_completed", 0))
    else:
        params = init_params(model_config or ModelConfig())
        state = adam_init(params, lr=config.lr)
        epochs_done = 0

    train_idx, val_idx = split_indices(len(dataset), config.val_fraction, config.seed)
    train_set = [dataset[i] for i in train_idx]
    val_set = [dataset[i] for i in val_idx]

    best_path = os.path.join(out_dir, "best.ckpt")
    last_path = os.path.join(out_dir, "last.ckpt")
    history = []

    def log_terms(epoch, split, terms):
        if not np.all(np.isfinite(terms)):
            raise DivergenceError(f"non-finite {split} loss at epoch {epoch}", epoch=epoch)
        history.append({"epoch": epoch, "split": split, "l_estim": terms[0],
                        "l_deatf": terms[1], "l_ignor": terms[2], "l_naa": terms[3]})

    def select(epoch, train_terms):
        if val_set:
            val_terms = _mean_terms(params, val_set, objective)
            log_terms(epoch, "val", val_terms)
            return val_terms[3]
        return train_terms[3]

    initial = _mean_terms(params, train_set, objective)
    log_terms(0, "train", initial)
    best = select(0, initial)
    best_epoch = 0
    save_params(params, state, best_path, meta={"epochs_completed": epochs_done})
    for epoch in range(1, config.n_epochs + 1):
        order = np.random.default_rng([config.seed, epochs_done + epoch]).permutation(len(train_set))
        seen = []
        try:
            for start in range(0, len(order), config.batch_size):
                batch = [train_set[i] for i in order[start : start + config.batch_size]]
                grads, terms = _batch_grad(params, batch, objective)
                seen.extend(terms)
                params, state = adam_step(params, grads, state)
        except NonFiniteError as exc:
            raise DivergenceError(f"training diverged in epoch {epoch}: {exc}", epoch=epoch) from exc
        train_terms = np.mean([[t.estim, t.deatf, t.ignor, t.total] for t in seen], axis=0)
        log_terms(epoch, "train", train_terms)
        score = select(epoch, train_terms)
        log.info("%s epoch %d: selection loss %.6g", config.regime, epoch, score)
        if score < best:
            best, best_epoch = score, epoch
            save_params(params, state, best_path, meta={"epochs_completed": epochs_done + epoch})
    save_params(params, state, last_path, meta={"epochs_completed": epochs_done + config.n_epochs})
    write_log_csv(history, os.path.join(out_dir, "train_log.csv"))
    best_params, best_state = load_params(best_path)
    return TrainResult(best_path, last_path, history, best_params, best_state, best_epoch)


def write_log_csv(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_CSV_HEADER)
        for h in history:
            writer.writerow([h["epoch"], h["split"]] + [repr(float(h[k])) for k in LOG_CSV_HEADER[2:]])


# ---------------------------------------------------------------- evaluation


def evaluate_model(params, triples, option="beta", identity=False):
    """Per-triple scores for inputs x and z plus artifact/residual energies.

    Returns a list of dicts with keys ``id``, ``x`` and ``z`` (each a dict of
    ``si_snr_db`` and ``stoi``), ``artifact_energy_db`` (mean over the
    option's artifact clips), ``theta_energy_db`` (per artifact clip) and
    ``residual_noise_energy_db``.
    """
    out = []
    for tr in triples:
        fx = forward(params, tr.x, identity=identity)[0]
        fy = forward(params, tr.y, identity=identity)[0]
        fz = forward(params, tr.z, identity=identity)[0]
        dec = decompose(fx, fy, fz, tr.x, option)
        theta_db = {k: signal_energy_db(c) for k, c in dec.artifacts().items()}
        out.append({
            "id": tr.triple_id,
            "x": {"si_snr_db": si_snr(fx, tr.x), "stoi": stoi(fx, tr.x)},
            "z": {"si_snr_db": si_snr(fz, tr.x), "stoi": stoi(fz, tr.x)},
            "artifact_energy_db": float(np.mean(list(theta_db.values()))),
            "theta_energy_db": theta_db,
            "residual_noise_energy_db": signal_energy_db(fy),
        })
    return out
