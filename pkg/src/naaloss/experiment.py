"""Experiment configuration and the command implementations behind the CLI.

Config files are flat ``key = value`` text; ``#`` starts a comment.  Every key
of :class:`ExperimentConfig` may appear; unknown keys are rejected.  Lists
(``snr_list``, ``hidden_sizes``, ``options``) are comma separated.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
import time
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, NAaLossError
from .loss import ARTIFACT_OPTIONS, DistanceSpec, LossConfig, LossWeights, check_triple, decompose
from .mask_model import ModelConfig, forward, load_params
from .metrics import (
    metric_report,
    read_wer_csv,
    signal_energy_db,
    werr_table,
    write_metric_csv,
)
from .signal_core import StftConfig, read_wav, stft, write_wav
from .trainer import (
    TrainConfig,
    evaluate_model,
    load_dataset,
    split_indices,
    synthesize_dataset,
    train,
    write_dataset,
)

__all__ = [
    "ExperimentConfig",
    "parse_config_text",
    "load_config",
    "cmd_synth",
    "cmd_train",
    "cmd_run_matrix",
    "cmd_enhance",
    "cmd_decompose",
    "cmd_evaluate",
    "cmd_werr",
    "cmd_report",
    "MATRIX_ROWS",
]

log = logging.getLogger(__name__)

MATRIX_ROWS = ("org", "pre-alpha", "pre-beta", "scr-alpha", "scr-beta")
MATRIX_CSV_HEADER = ["model", "input", "si_snr_db", "stoi", "artifact_energy_db",
                     "residual_noise_energy_db", "status"]
TEST_SPLIT_SALT = 1


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _strs(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


def _opt_str(text):
    return None if str(text).strip().lower() in ("", "none") else str(text).strip()


@dataclass
class ExperimentConfig:
    clean_source: str = "synthetic:speechlike"
    noise_source: str = "synthetic:whitenoise,babblelike"
    data_dir: str | None = None
    work_dir: str = "naaloss_run"
    count: int = 100
    duration_s: float = 1.5
    sample_rate_hz: int = 16000
    snr_list: tuple = (0.0, 5.0, 10.0, 15.0)
    fft_size: int = 512
    hop_size: int = 256
    window: str = "hann"
    context_radius: int = 1
    hidden_sizes: tuple = (128,)
    pretrain_epochs: int = 50
    finetune_epochs: int = 20
    scratch_epochs: int = 70
    lr: float = 1e-3
    finetune_lr: float | None = None
    batch_size: int = 8
    val_fraction: float = 0.1
    test_fraction: float = 0.2
    alpha: float = 0.1
    beta: float = 0.1
    metric: str = "l2"
    domain: str = "time"
    deatf_metric: str | None = None
    deatf_domain: str | None = None
    ignor_metric: str | None = None
    ignor_domain: str | None = None
    options: tuple = ARTIFACT_OPTIONS
    report_option: str = "beta"
    fresh_moments: bool = False
    seed: int = 0

    _PARSERS = {
        "count": int, "duration_s": float, "sample_rate_hz": int, "snr_list": _floats,
        "fft_size": int, "hop_size": int, "context_radius": int, "hidden_sizes": _ints,
        "pretrain_epochs": int, "finetune_epochs": int, "scratch_epochs": int,
        "lr": float, "finetune_lr": _opt_float, "batch_size": int, "val_fraction": float,
        "test_fraction": float, "alpha": float, "beta": float, "options": _strs,
        "fresh_moments": _bool, "seed": int, "data_dir": _opt_str,
        "deatf_metric": _opt_str, "deatf_domain": _opt_str,
        "ignor_metric": _opt_str, "ignor_domain": _opt_str,
    }

    def set(self, key, value):
        key = key.strip().replace("-", "_")
        names = {f.name for f in dataclasses.fields(self)}
        if key not in names:
            raise ConfigError(f"unknown config key {key!r}")
        parser = self._PARSERS.get(key, lambda v: str(v).strip())
        try:
            setattr(self, key, parser(value) if isinstance(value, str) else value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None

    def validate(self):
        for opt in self.options:
            if opt not in ARTIFACT_OPTIONS:
                raise ConfigError(f"unknown artifact option {opt!r}")
        if self.report_option not in ARTIFACT_OPTIONS:
            raise ConfigError(f"unknown report_option {self.report_option!r}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in (0, 1)")
        self.model_config()
        self.loss_config("beta")
        return self

    @property
    def dataset_dir(self):
        return self.data_dir or os.path.join(self.work_dir, "data")

    def stft_config(self):
        return StftConfig(self.fft_size, self.hop_size, self.window)

    def model_config(self):
        return ModelConfig(self.stft_config(), self.context_radius, self.hidden_sizes,
                           self.seed, self.sample_rate_hz)

    def loss_config(self, option, weights=None):
        stft_cfg = self.stft_config()
        base = DistanceSpec(self.metric, self.domain, stft_cfg)
        deatf = DistanceSpec(self.deatf_metric or self.metric, self.deatf_domain or self.domain, stft_cfg)
        ignor = DistanceSpec(self.ignor_metric or self.metric, self.ignor_domain or self.domain, stft_cfg)
        w = weights or LossWeights(self.alpha, self.beta)
        return LossConfig(option, w, base, deatf, ignor)

    def train_config(self, regime, option="beta", checkpoint_in=None, epochs=None):
        default = {"pretrain": self.pretrain_epochs, "finetune": self.finetune_epochs,
                   "scratch": self.scratch_epochs}[regime]
        return TrainConfig(
            regime=regime, epochs=default if epochs is None else epochs,
            batch_size=self.batch_size, lr=self.lr, finetune_lr=self.finetune_lr,
            seed=self.seed, loss=self.loss_config(option), checkpoint_in=checkpoint_in,
            fresh_moments=self.fresh_moments, val_fraction=self.val_fraction,
        )


def parse_config_text(text, config=None):
    config = config or ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        config.set(key, value.strip())
    return config


def load_config(path=None, overrides=()):
    config = ExperimentConfig()
    if path:
        with open(path) as fh:
            parse_config_text(fh.read(), config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        config.set(key, value)
    return config.validate()


# ---------------------------------------------------------------- commands


def cmd_synth(config: ExperimentConfig, out_dir=None):
    out_dir = out_dir or config.dataset_dir
    triples = synthesize_dataset(
        config.clean_source, config.noise_source, config.snr_list, config.count,
        config.seed, config.duration_s, config.sample_rate_hz,
    )
    write_dataset(triples, out_dir, seed=config.seed)
    return out_dir


def split_dataset(config, triples):
    """Held-out test triples are removed before any regime sees the data."""
    fit_idx, test_idx = split_indices(len(triples), config.test_fraction, config.seed, TEST_SPLIT_SALT)
    return [triples[i] for i in fit_idx], [triples[i] for i in test_idx]


def cmd_train(config: ExperimentConfig, regime, out_dir, data_dir=None, option="beta",
              checkpoint_in=None, epochs=None):
    triples = load_dataset(data_dir or config.dataset_dir)
    fit_set, _ = split_dataset(config, triples)
    tcfg = config.train_config(regime, option, checkpoint_in, epochs)
    return train(tcfg, fit_set, config.model_config(), out_dir)


def _cell_summary(evals, which, option):
    si = float(np.mean([e[which]["si_snr_db"] for e in evals]))
    st = float(np.mean([e[which]["stoi"] for e in evals]))
    if option == "beta":
        key = "theta_c" if which == "x" else "theta_m"
        art = float(np.mean([e["theta_energy_db"][key] for e in evals]))
    else:
        art = float(np.mean([e["theta_energy_db"]["theta"] for e in evals]))
    res = float(np.mean([e["residual_noise_energy_db"] for e in evals]))
    return {"si_snr_db": si, "stoi": st, "artifact_energy_db": art,
            "residual_noise_energy_db": res, "status": "ok"}


def cmd_run_matrix(config: ExperimentConfig, out_dir=None, data_dir=None):
    """Train every model combination and evaluate each on the held-out split.

    Returns ``{(model, input): cell}``; failed cells carry ``status`` of the
    form ``"failed: <reason>"``.
    """
    out_dir = out_dir or config.work_dir
    os.makedirs(out_dir, exist_ok=True)
    triples = load_dataset(data_dir or config.dataset_dir)
    fit_set, test_set = split_dataset(config, triples)
    model_cfg = config.model_config()
    started = time.monotonic()

    checkpoints, failures = {}, {}

    def run(name, tcfg, model=None):
        try:
            result = train(tcfg, fit_set, model, os.path.join(out_dir, name))
            checkpoints[name] = result.checkpoint_path
        except (NAaLossError, ValueError, OSError) as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"
            log.warning("%s failed: %s", name, failures[name])

    run("org", config.train_config("pretrain", config.report_option), model_cfg)
    for opt in ("alpha", "beta"):
        name = f"pre-{opt}"
        if opt not in config.options:
            failures[name] = "skipped: option not configured"
        elif "org" not in checkpoints:
            failures[name] = f"pretrain unavailable ({failures['org']})"
        else:
            run(name, config.train_config("finetune", opt, checkpoints["org"]))
    for opt in ("alpha", "beta"):
        name = f"scr-{opt}"
        if opt not in config.options:
            failures[name] = "skipped: option not configured"
        else:
            run(name, config.train_config("scratch", opt), model_cfg)

    matrix = {}
    for name in MATRIX_ROWS:
        if name in checkpoints:
            try:
                params, _ = load_params(checkpoints[name])
                evals = evaluate_model(params, test_set, config.report_option)
                for which in ("x", "z"):
                    matrix[(name, which)] = _cell_summary(evals, which, config.report_option)
                continue
            except (NAaLossError, ValueError) as exc:
                failures[name] = f"evaluation {type(exc).__name__}: {exc}"
        for which in ("x", "z"):
            matrix[(name, which)] = {"status": f"failed: {failures[name]}"}

    write_matrix_csv(matrix, os.path.join(out_dir, "matrix.csv"))
    text = render_matrix(matrix, config.report_option)
    with open(os.path.join(out_dir, "matrix.txt"), "w") as fh:
        fh.write(text)
    log.info("matrix finished in %.1f s", time.monotonic() - started)
    return matrix


def write_matrix_csv(matrix, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MATRIX_CSV_HEADER)
        for name in MATRIX_ROWS:
            for which in ("x", "z"):
                cell = matrix[(name, which)]
                vals = [repr(cell[k]) if k in cell else "" for k in MATRIX_CSV_HEADER[2:-1]]
                writer.writerow([name, which, *vals, cell["status"]])


def read_matrix_csv(path):
    matrix = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MATRIX_CSV_HEADER:
            raise ConfigError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            cell = {"status": row["status"]}
            for k in MATRIX_CSV_HEADER[2:-1]:
                if row[k]:
                    cell[k] = float(row[k])
            matrix[(row["model"], row["input"])] = cell
    return matrix


def render_matrix(matrix, report_option="beta"):
    """Fixed-width table: one column per (model, input), metrics as rows."""
    cols = [(m, w) for m in MATRIX_ROWS for w in ("x", "z")]
    art_label = "theta_c | theta_m (dB)" if report_option == "beta" else "theta (dB)"
    rows = [
        ("SI-SNR (dB)", "si_snr_db", 1.0, "{:.2f}"),
        ("STOI (%)", "stoi", 100.0, "{:.1f}"),
        (art_label, "artifact_energy_db", 1.0, "{:.2f}"),
        ("residual noise (dB)", "residual_noise_energy_db", 1.0, "{:.2f}"),
    ]
    head = [f"{m}({w})" for m, w in cols]
    width = max(10, *(len(h) for h in head)) + 2
    label_w = max(len(r[0]) for r in rows) + 2
    lines = ["".ljust(label_w) + "".join(h.rjust(width) for h in head)]
    for label, key, scale, fmt in rows:
        cells = []
        for c in cols:
            cell = matrix[c]
            cells.append(fmt.format(cell[key] * scale) if key in cell else "failed")
        lines.append(label.ljust(label_w) + "".join(v.rjust(width) for v in cells))
    failed = [f"  {m}({w}): {matrix[(m, w)]['status']}" for m, w in cols
              if matrix[(m, w)]["status"] != "ok"]
    if failed:
        lines.append("")
        lines.append("failed cells:")
        lines.extend(failed)
    return "\n".join(lines) + "\n"


def _load_checkpoint(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    params, _ = load_params(path)
    return params


def cmd_enhance(checkpoint, in_wav, out_wav, identity=False):
    params = _load_checkpoint(checkpoint)
    clip = read_wav(in_wav)
    enhanced = forward(params, clip, identity=identity)[0]
    write_wav(enhanced, out_wav)
    return enhanced


def write_spectrogram_csv(clip, stft_config, path):
    mag = stft(clip, stft_config).magnitude()
    header = (f"fft_size={stft_config.fft_size},hop_size={stft_config.hop_size},"
              f"sample_rate_hz={clip.sample_rate_hz},rows=frames,columns=bins")
    np.savetxt(path, mag, delimiter=",", header=header, fmt="%.9g")


def cmd_decompose(checkpoint, x_path, y_path, z_path, option, out_dir, identity=False,
                  tolerance=1e-6):
    """Export f(x), f(y), f(z), artifacts, residual noise and the reference x.

    Each signal is written as ``<name>.wav`` plus ``<name>_spec.csv``; an
    ``energy_summary.csv`` lists their levels in dB.
    """
    if option not in ARTIFACT_OPTIONS:
        raise ConfigError(f"artifact option must be one of {ARTIFACT_OPTIONS}, got {option!r}")
    params = _load_checkpoint(checkpoint)
    x, y, z = read_wav(x_path), read_wav(y_path), read_wav(z_path)
    check_triple(x, y, z, tol=tolerance)
    # the float32 container rounds z; use the exact sum as the dataset loader does
    z = x.with_samples(x.samples + y.samples)
    fx = forward(params, x, identity=identity)[0]
    fy = forward(params, y, identity=identity)[0]
    fz = forward(params, z, identity=identity)[0]
    dec = decompose(fx, fy, fz, x, option)
    signals = {"f_x": fx, "f_y": fy, "f_z": fz, **dec.artifacts(),
               "residual_noise": dec.residual_noise, "x": x}
    os.makedirs(out_dir, exist_ok=True)
    stft_cfg = params.config.stft
    with open(os.path.join(out_dir, "energy_summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["signal", "energy_db", "peak_abs"])
        for name, clip in signals.items():
            write_wav(clip, os.path.join(out_dir, f"{name}.wav"))
            write_spectrogram_csv(clip, stft_cfg, os.path.join(out_dir, f"{name}_spec.csv"))
            writer.writerow([name, f"{signal_energy_db(clip):.6f}",
                             f"{float(np.max(np.abs(clip.samples))):.9g}"])
    return dec


def cmd_evaluate(config: ExperimentConfig, checkpoint, out_csv, data_dir=None, split="test",
                 option=None):
    """Per-clip metrics of ``f(z)`` on the chosen split, written as CSV."""
    params = _load_checkpoint(checkpoint)
    triples = load_dataset(data_dir or config.dataset_dir)
    if split == "test":
        _, triples = split_dataset(config, triples)
    elif split != "all":
        raise ConfigError(f"split must be 'test' or 'all', got {split!r}")
    option = option or config.report_option
    rows = []
    for tr in triples:
        fx, fy, fz = (forward(params, c)[0] for c in (tr.x, tr.y, tr.z))
        rows.append((tr.triple_id, metric_report(fz, tr.x, decompose(fx, fy, fz, tr.x, option))))
    write_metric_csv(rows, out_csv)
    return rows


WERR_CSV_HEADER = ["am_label", "uc_label", "org_label", "naa_label", "wer_uc", "wer_org",
                   "wer_naa", "werr_percent", "status"]


def cmd_werr(wer_csv, out_csv, uc_label, org_label, naa_labels=None):
    rows = werr_table(read_wer_csv(wer_csv), uc_label, org_label, naa_labels)
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(WERR_CSV_HEADER)
        for r in rows:
            value = "" if r["werr_percent"] is None else f"{r['werr_percent']:.4f}"
            writer.writerow([r["am_label"], r["uc_label"], r["org_label"], r["naa_label"],
                             r["wer_uc"], r["wer_org"], r["wer_naa"], value, r["status"]])
    return rows


def cmd_report(run_dir, werr_csv=None, out_path=None, report_option="beta"):
    """Render ``matrix.csv`` (and optionally a WERR table) as text."""
    matrix = read_matrix_csv(os.path.join(run_dir, "matrix.csv"))
    parts = ["Enhancement matrix (held-out triples)", "", render_matrix(matrix, report_option)]
    if werr_csv:
        with open(werr_csv, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
        parts.append("WERR")
        for r in rows:
            val = f"{float(r['werr_percent']):.2f}%" if r["werr_percent"] else r["status"]
            parts.append(f"  {r['am_label']}: {r['naa_label']} vs {r['org_label']} "
                         f"(clean {r['uc_label']}): {val}")
        parts.append("")
    text = "\n".join(parts)
    out_path = out_path or os.path.join(run_dir, "report.txt")
    with open(out_path, "w") as fh:
        fh.write(text)
    return text
