"""scikit-learn style wrapper around the mask model and its training regimes."""

from __future__ import annotations

import os
import tempfile

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigError
from .loss import ARTIFACT_OPTIONS, LossConfig, decompose
from .mask_model import ModelConfig, forward, save_params
from .metrics import si_snr
from .signal_core import StftConfig
from .trainer import REGIMES, TrainConfig, evaluate_model, train
from .validation import check_clip, check_clips, check_triples


class NAaLossEnhancer(TransformerMixin, BaseEstimator):
    """Masking speech enhancer trained with the noise- and artifact-aware loss.

    ``fit`` takes training triples (or ``(clean, noise)`` pairs) and runs the
    configured regime; ``transform`` enhances a collection of signals.

    Parameters
    ----------
    regime : {"pretrain", "finetune", "scratch"}
        ``finetune`` resumes ``init_checkpoint`` including its Adam moments.
    option : {"alpha", "beta"}
        Artifact formulation used by the de-artifact term.
    alpha, beta : float
        Weights of the de-artifact and noise-ignorance terms.
    metric, domain : str
        Distance (``"l2"``/``"l1"``) and the domain it is applied in
        (``"time"``/``"stft"``).
    epochs : int or None
        ``None`` uses the regime default.
    work_dir : str or None
        Where checkpoints and the training log go; a temporary directory by
        default.
    """

    def __init__(self, regime="scratch", option="beta", alpha=0.1, beta=0.1, metric="l2",
                 domain="time", fft_size=512, hop_size=256, window="hann", context_radius=1,
                 hidden_sizes=(128,), epochs=None, batch_size=8, lr=1e-3, finetune_lr=None,
                 val_fraction=0.1, init_checkpoint=None, fresh_moments=False,
                 sample_rate_hz=16000, random_state=0, work_dir=None):
        self.regime = regime
        self.option = option
        self.alpha = alpha
        self.beta = beta
        self.metric = metric
        self.domain = domain
        self.fft_size = fft_size
        self.hop_size = hop_size
        self.window = window
        self.context_radius = context_radius
        self.hidden_sizes = hidden_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.finetune_lr = finetune_lr
        self.val_fraction = val_fraction
        self.init_checkpoint = init_checkpoint
        self.fresh_moments = fresh_moments
        self.sample_rate_hz = sample_rate_hz
        self.random_state = random_state
        self.work_dir = work_dir

    def _configs(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.option not in ARTIFACT_OPTIONS:
            raise ConfigError(f"option must be one of {ARTIFACT_OPTIONS}, got {self.option!r}")
        seed = 0 if self.random_state is None else int(self.random_state)
        stft_cfg = StftConfig(self.fft_size, self.hop_size, self.window)
        model_cfg = ModelConfig(stft_cfg, self.context_radius, tuple(self.hidden_sizes), seed,
                                self.sample_rate_hz)
        loss_cfg = LossConfig.simple(self.option, self.alpha, self.beta, self.metric, self.domain, stft_cfg)
        train_cfg = TrainConfig(
            regime=self.regime, epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            finetune_lr=self.finetune_lr, seed=seed, loss=loss_cfg,
            checkpoint_in=self.init_checkpoint, fresh_moments=self.fresh_moments,
            val_fraction=self.val_fraction,
        )
        return model_cfg, train_cfg

    def fit(self, X, y=None):
        """Train on ``X``; ``y`` is ignored (the clean target lives in each triple)."""
        model_cfg, train_cfg = self._configs()
        triples = check_triples(X, self.sample_rate_hz)
        out_dir = self.work_dir or tempfile.mkdtemp(prefix="naaloss_")
        result = train(train_cfg, triples, model_cfg, out_dir)
        self.params_ = result.params
        self.optimizer_state_ = result.optimizer_state
        self.history_ = result.log
        self.best_epoch_ = result.best_epoch
        self.checkpoint_path_ = result.checkpoint_path
        return self

    def transform(self, X):
        """Enhanced signals; a 2-D array input yields a 2-D array."""
        check_is_fitted(self, "params_")
        clips = check_clips(X, self.sample_rate_hz)
        out = [forward(self.params_, c)[0].samples.copy() for c in clips]
        if isinstance(X, np.ndarray) and X.ndim == 2:
            return np.stack(out)
        return out

    def enhance(self, clip):
        """Enhance one signal and return the enhanced samples."""
        check_is_fitted(self, "params_")
        return forward(self.params_, check_clip(clip, self.sample_rate_hz))[0].samples.copy()

    def decompose(self, x, y, option=None):
        """Split the model's behaviour on ``(x, y, x + y)`` into speech, artifacts and residual noise."""
        check_is_fitted(self, "params_")
        x = check_clip(x, self.sample_rate_hz)
        y = check_clip(y, self.sample_rate_hz)
        z = x.with_samples(x.samples + y.samples)
        fx, fy, fz = (forward(self.params_, c)[0] for c in (x, y, z))
        return decompose(fx, fy, fz, x, option or self.option)

    def evaluate(self, X):
        """Per-triple SI-SNR / STOI / energy scores (see :func:`evaluate_model`)."""
        check_is_fitted(self, "params_")
        return evaluate_model(self.params_, check_triples(X, self.sample_rate_hz), self.option)

    def score(self, X, y=None):
        """Mean SI-SNR (dB) of the enhanced noisy signal against the clean one."""
        check_is_fitted(self, "params_")
        triples = check_triples(X, self.sample_rate_hz)
        return float(np.mean([si_snr(forward(self.params_, t.z)[0], t.x) for t in triples]))

    def save(self, path):
        """Write the fitted parameters and optimizer state as a checkpoint."""
        check_is_fitted(self, "params_")
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        save_params(self.params_, self.optimizer_state_, path)
        return path
