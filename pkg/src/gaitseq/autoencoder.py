"""
Sequence-to-sequence reconstruction of gait cycles with a recurrent encoder.

The encoder is trained on normal cycles only; its final per-layer hidden and
cell vectors then serve as a fixed-length embedding of any cycle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import lstm
from .exceptions import NumericalDivergence
from .signal import ANOMALOUS
from .validation import check_cycles

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    decay_steps: int = 1000
    decay_rate: float = 0.5
    epochs: int = 21
    batch_size: int = 16
    clip_norm: float = 5.0
    init_scale: float = 0.08
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self):
        for name in ("learning_rate", "decay_steps", "decay_rate", "epochs",
                     "batch_size", "clip_norm", "init_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def learning_rate_at(step: int, initial: float = 0.01, decay_steps: int = 1000, rate: float = 0.5) -> float:
    """Staircase decay: the rate is multiplied by ``rate`` every ``decay_steps`` steps."""
    return initial * rate ** (step // decay_steps)


def sgd_update(params, grads, lr, clip_norm):
    """Clip ``grads`` to ``clip_norm`` by global norm and take one SGD step in place.

    Returns the pre-clip global norm.
    """
    grads, norm = lstm.clip_by_global_norm(grads, clip_norm)
    for k, g in grads.items():
        params[k] -= lr * g
    return norm


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled mini-batch index arrays covering ``range(n)`` once."""
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train_autoencoder(sequences, enc_config: lstm.EncoderConfig, train_config: TrainConfig,
                      params=None, callback=None):
    """Fit the encoder-decoder to ``sequences`` of shape (n, T, C).

    Returns
    -------
    params : dict
    history : list of float
        Training loss of every step (dropout active).

    Raises
    ------
    NumericalDivergence
        The loss or a gradient became non-finite; ``step`` holds the index.
    """
    X = np.asarray(sequences, dtype=float)
    rng = np.random.default_rng(train_config.seed)
    if params is None:
        params = lstm.init_params(enc_config, rng, train_config.init_scale, output_size=X.shape[2])
    history = []
    step = 0
    dropout = enc_config.keep_prob < 1
    for epoch in range(train_config.epochs):
        first = len(history)
        for idx in batches(X.shape[0], train_config.batch_size, rng):
            if train_config.max_steps is not None and step >= train_config.max_steps:
                return params, history
            xb = X[idx]
            masks = lstm.dropout_masks(xb.shape[:2], enc_config, rng) if dropout else None
            try:
                loss, grads = lstm.loss_and_grad(params, xb, enc_config, masks)
            except NumericalDivergence as exc:
                raise NumericalDivergence(str(exc), step=step) from exc
            if not np.isfinite(loss) or not np.isfinite(lstm.global_norm(grads)):
                raise NumericalDivergence(f"non-finite loss at step {step}", step=step)
            lr = learning_rate_at(step, train_config.learning_rate,
                                  train_config.decay_steps, train_config.decay_rate)
            sgd_update(params, grads, lr, train_config.clip_norm)
            history.append(loss)
            if callback is not None:
                callback(step, loss)
            step += 1
        logger.info("epoch %d mean loss %.4f", epoch, float(np.mean(history[first:])))
    return params, history


class Seq2SeqEncoder(TransformerMixin, BaseEstimator):
    """Bidirectional peephole-LSTM autoencoder used as a cycle embedder.

    Parameters
    ----------
    hidden_size : int, default=64
    n_layers : int, default=2
    bidirectional : bool, default=True
    keep_prob : float, default=0.8
        Output keep probability during training.
    learning_rate : float, default=0.01
    decay_steps, decay_rate : staircase schedule, default 1000 and 0.5
    epochs : int, default=21
    batch_size : int, default=16
    clip_norm : float, default=5.0
    init_scale : float, default=0.08
    random_state : int, default=0
    max_steps : int or None
        Hard cap on optimizer steps, mostly for tests.

    Attributes
    ----------
    params_ : dict of ndarray
    loss_history_ : list of float
    state_size_ : int
        Length of the flattened embedding returned by :meth:`transform`.
    """

    def __init__(self, hidden_size=64, n_layers=2, bidirectional=True, keep_prob=0.8,
                 learning_rate=0.01, decay_steps=1000, decay_rate=0.5, epochs=21,
                 batch_size=16, clip_norm=5.0, init_scale=0.08, random_state=0,
                 max_steps=None):
        self.hidden_size = hidden_size
        self.n_layers = n_layers
        self.bidirectional = bidirectional
        self.keep_prob = keep_prob
        self.learning_rate = learning_rate
        self.decay_steps = decay_steps
        self.decay_rate = decay_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.init_scale = init_scale
        self.random_state = random_state
        self.max_steps = max_steps

    def _enc_config(self, n_channels):
        return lstm.EncoderConfig(n_channels, self.hidden_size, self.n_layers,
                                  self.bidirectional, self.keep_prob)

    def _train_config(self):
        return TrainConfig(self.learning_rate, self.decay_steps, self.decay_rate, self.epochs,
                           self.batch_size, self.clip_norm, self.init_scale,
                           int(self.random_state or 0), self.max_steps)

    def fit(self, X, y=None):
        """Train on cycles ``X`` of shape (n, channels, length).

        ``y`` is optional; when given, every label must be normal.
        """
        X = check_cycles(X, n_channels=None, length=None)
        if y is not None:
            y = np.asarray(y).astype(int)
            if y.shape[0] != X.shape[0]:
                raise ValueError("X and y have different lengths")
            if np.any(y == ANOMALOUS):
                raise ValueError("the autoencoder is trained on normal cycles only")
        self.n_channels_ = X.shape[1]
        self.cycle_length_ = X.shape[2]
        cfg = self._enc_config(self.n_channels_)
        self.params_, self.loss_history_ = train_autoencoder(
            X.transpose(0, 2, 1), cfg, self._train_config())
        self.state_size_ = cfg.state_size
        return self

    @property
    def config_(self) -> lstm.EncoderConfig:
        check_is_fitted(self)
        return self._enc_config(self.n_channels_)

    def _sequences(self, X):
        check_is_fitted(self)
        X = check_cycles(X, n_channels=self.n_channels_, length=None)
        return X.transpose(0, 2, 1)

    def transform(self, X, batch_size=256):
        """Flattened final encoder states, shape (n, state_size_)."""
        S = self._sequences(X)
        cfg = self.config_
        out = [lstm.encode(S[i:i + batch_size], self.params_, cfg).state
               for i in range(0, S.shape[0], batch_size)]
        return np.concatenate(out, axis=0)

    def reconstruct(self, X, batch_size=256):
        """Decoder output in the input layout (n, channels, length)."""
        S = self._sequences(X)
        cfg = self.config_
        out = [lstm.forward(self.params_, S[i:i + batch_size], cfg)[0]
               for i in range(0, S.shape[0], batch_size)]
        return np.concatenate(out, axis=0).transpose(0, 2, 1)

    def score_samples(self, X):
        """Per-cycle summed squared reconstruction error."""
        X = check_cycles(X, n_channels=self.n_channels_, length=None)
        err = (X - self.reconstruct(X)) ** 2
        return err.reshape(err.shape[0], -1).sum(axis=1)

    def to_dict(self) -> dict:
        check_is_fitted(self)
        return {
            "hyperparameters": self.get_params(),
            "n_channels": int(self.n_channels_),
            "cycle_length": int(self.cycle_length_),
            "params": {k: v.tolist() for k, v in self.params_.items()},
            "loss_history": [float(v) for v in self.loss_history_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Seq2SeqEncoder":
        est = cls(**d["hyperparameters"])
        est.n_channels_ = int(d["n_channels"])
        est.cycle_length_ = int(d["cycle_length"])
        est.params_ = {k: np.asarray(v, dtype=float) for k, v in d["params"].items()}
        est.loss_history_ = list(d.get("loss_history", []))
        cfg = est._enc_config(est.n_channels_)
        expected = lstm.param_shapes(cfg, est.n_channels_)
        for k, shape in expected.items():
            if k not in est.params_ or est.params_[k].shape != shape:
                raise ValueError(f"parameter {k} missing or misshapen")
        est.state_size_ = cfg.state_size
        return est
