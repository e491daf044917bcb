"""
Convolutional classifier over reshaped encoder states.

The flat state of every cycle is reinterpreted (row-major) as a ``W x Y x Z``
volume, convolved with ``F`` filters of size ``kh x kw x Z`` (valid padding,
unit stride, ReLU), max-pooled with a 4 x 4 window at stride 2, flattened and
fed to a two-unit logistic layer. A softmax over the two logistic scores gives
class probabilities and the training loss is the softmax cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import truncnorm
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .autoencoder import batches, learning_rate_at
from .exceptions import NumericalDivergence, ShapeError
from .signal import ANOMALOUS, NORMAL
from .validation import check_binary_labels

POOL = 4
POOL_STRIDE = 2


@dataclass(frozen=True)
class CnnConfig:
    dims: tuple = (16, 16, 2)
    kernel: tuple = (10, 6)
    filters: int = 16

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ShapeError(f"dims must be three positive ints, got {self.dims}")
        if len(self.kernel) != 2 or min(self.kernel) < 1 or self.filters < 1:
            raise ShapeError("kernel and filters must be positive")
        self.pooled_shape  # validates the arithmetic

    @property
    def state_size(self) -> int:
        W, Y, Z = self.dims
        return W * Y * Z

    @property
    def conv_shape(self):
        W, Y, _ = self.dims
        kh, kw = self.kernel
        if kh > W or kw > Y:
            raise ShapeError(f"kernel {self.kernel} larger than input {self.dims[:2]}")
        return W - kh + 1, Y - kw + 1, self.filters

    @property
    def pooled_shape(self):
        cw, cy, f = self.conv_shape
        if cw < POOL or cy < POOL:
            raise ShapeError(f"conv output {cw}x{cy} smaller than the {POOL}x{POOL} pool")
        return (cw - POOL) // POOL_STRIDE + 1, (cy - POOL) // POOL_STRIDE + 1, f

    @property
    def n_features(self) -> int:
        return int(np.prod(self.pooled_shape))


def reshape_state(state, dims):
    """Row-major reinterpretation of flat states as ``(n, W, Y, Z)`` volumes.

    A 1-D state gives a single ``(W, Y, Z)`` volume.
    """
    state = np.asarray(state, dtype=float)
    dims = tuple(int(d) for d in dims)
    if state.shape[-1] != int(np.prod(dims)):
        raise ShapeError(f"state of length {state.shape[-1]} cannot be reshaped to {dims}")
    return state.reshape(state.shape[:-1] + dims)


def flatten_volume(volume):
    volume = np.asarray(volume)
    return volume.reshape(volume.shape[:-3] + (-1,))


def init_cnn_params(config: CnnConfig, rng: np.random.Generator, conv_std: float = 0.05) -> dict:
    """Truncated-normal conv kernel (cut at two std), zero biases, Glorot-uniform dense layer."""
    kh, kw = config.kernel
    Z = config.dims[2]
    K = truncnorm.rvs(-2, 2, scale=conv_std, size=(kh, kw, Z, config.filters), random_state=rng)
    M = config.n_features
    limit = np.sqrt(6.0 / (M + 2))
    return {
        "conv.K": K,
        "conv.b": np.zeros(config.filters),
        "dense.W": rng.uniform(-limit, limit, (M, 2)),
        "dense.b": np.zeros(2),
    }


def _patches(V, kh, kw):
    # (n, W', Y', kh, kw, Z) to match the (kh, kw, Z, F) kernel layout
    P = sliding_window_view(V, (kh, kw), axis=(1, 2))
    return P.transpose(0, 1, 2, 4, 5, 3)


def conv_forward(volume, K, b, relu: bool = True):
    """Valid 2-D convolution of ``(n, W, Y, Z)`` volumes with a ``(kh, kw, Z, F)`` kernel."""
    V = np.asarray(volume, dtype=float)
    single = V.ndim == 3
    if single:
        V = V[None]
    kh, kw, zin, F = K.shape
    if V.shape[3] != zin:
        raise ShapeError(f"input has {V.shape[3]} channels, kernel expects {zin}")
    if kh > V.shape[1] or kw > V.shape[2]:
        raise ShapeError(f"kernel {kh}x{kw} larger than input {V.shape[1]}x{V.shape[2]}")
    P = _patches(V, kh, kw)
    n, cw, cy = P.shape[:3]
    out = P.reshape(n * cw * cy, -1) @ K.reshape(-1, F) + b
    out = out.reshape(n, cw, cy, F)
    if relu:
        out = np.maximum(out, 0.0)
    return out[0] if single else out


def maxpool(volume, size: int = POOL, stride: int = POOL_STRIDE, return_argmax: bool = False):
    """Max over ``size x size`` windows at ``stride``, per channel, ragged edges dropped."""
    A = np.asarray(volume, dtype=float)
    single = A.ndim == 3
    if single:
        A = A[None]
    if A.shape[1] < size or A.shape[2] < size:
        raise ShapeError(f"extent {A.shape[1]}x{A.shape[2]} smaller than the {size}x{size} window")
    win = sliding_window_view(A, (size, size), axis=(1, 2))[:, ::stride, ::stride]
    flat = win.reshape(win.shape[:4] + (size * size,))
    arg = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    if single:
        out, arg = out[0], arg[0]
    return (out, arg) if return_argmax else out


def _unpool(d_out, arg, in_shape, size=POOL, stride=POOL_STRIDE):
    n, P, Q, F = d_out.shape
    grad = np.zeros(in_shape)
    rows = np.arange(P)[None, :, None, None] * stride + arg // size
    cols = np.arange(Q)[None, None, :, None] * stride + arg % size
    bi = np.arange(n)[:, None, None, None]
    fi = np.arange(F)[None, None, None, :]
    np.add.at(grad, (np.broadcast_to(bi, arg.shape), rows, cols, np.broadcast_to(fi, arg.shape)), d_out)
    return grad


def sigmoid(z):
    return 0.5 * np.tanh(0.5 * z) + 0.5


def softmax(s):
    s = np.asarray(s, dtype=float)
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def scores(states, params: dict, config: CnnConfig, cache: bool = False):
    """Logistic class scores ``s`` of shape (n, 2) for flat states."""
    V = reshape_state(np.atleast_2d(states), config.dims)
    pre = conv_forward(V, params["conv.K"], params["conv.b"], relu=False)
    A = np.maximum(pre, 0.0)
    pooled, arg = maxpool(A, return_argmax=True)
    c = pooled.reshape(pooled.shape[0], -1)
    s = sigmoid(c @ params["dense.W"] + params["dense.b"])
    if cache:
        return s, {"V": V, "pre": pre, "arg": arg, "pooled_shape": pooled.shape, "c": c}
    return s


def predict_proba_states(states, params, config):
    return softmax(scores(states, params, config))


def decide(p):
    """Class labels from probabilities; an exact tie goes to anomalous."""
    p = np.atleast_2d(p)
    return np.where(p[:, ANOMALOUS] >= p[:, NORMAL], ANOMALOUS, NORMAL)


def classify(state, params, config):
    """``(s, p, label)`` for a single flat state."""
    s = scores(state, params, config)[0]
    p = softmax(s)
    return s, p, int(decide(p)[0])


def cross_entropy(p, y) -> float:
    y = np.asarray(y, dtype=int)
    return float(-np.mean(np.log(p[np.arange(y.size), y])))


def cnn_loss_and_grad(params, states, y, config: CnnConfig):
    """Mean softmax cross-entropy of a batch and its gradient."""
    y = np.asarray(y, dtype=int)
    n = y.size
    s, cache = scores(states, params, config, cache=True)
    p = softmax(s)
    loss = cross_entropy(p, y)
    ds = p.copy()
    ds[np.arange(n), y] -= 1.0
    ds /= n
    dz = ds * s * (1.0 - s)
    grads = {"dense.W": cache["c"].T @ dz, "dense.b": dz.sum(axis=0)}
    dpooled = (dz @ params["dense.W"].T).reshape(cache["pooled_shape"])
    dA = _unpool(dpooled, cache["arg"], cache["pre"].shape)
    dpre = dA * (cache["pre"] > 0)
    kh, kw = config.kernel
    P = _patches(cache["V"], kh, kw)
    F = config.filters
    flat = dpre.reshape(-1, F)
    grads["conv.K"] = (P.reshape(flat.shape[0], -1).T @ flat).reshape(params["conv.K"].shape)
    grads["conv.b"] = flat.sum(axis=0)
    return loss, grads


def cnn_gradient_check(params, states, y, config, epsilon=1e-6, floor=1e-8):
    """Largest relative error between analytic and central-difference gradients."""
    _, analytic = cnn_loss_and_grad(params, states, y, config)
    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up = cross_entropy(predict_proba_states(states, params, config), y)
            flat[j] = orig - epsilon
            down = cross_entropy(predict_proba_states(states, params, config), y)
            flat[j] = orig
            numeric = (up - down) / (2 * epsilon)
            a = analytic[name].reshape(-1)[j]
            worst = max(worst, abs(a - numeric) / max(abs(a) + abs(numeric), floor))
    return worst


def train_classifier(states, y, config: CnnConfig, learning_rate=0.01, decay_steps=1000,
                     decay_rate=0.5, epochs=11, batch_size=16, seed=0):
    """SGD on the softmax cross-entropy; returns ``(params, loss_history)``."""
    states = np.asarray(states, dtype=float)
    y = check_binary_labels(y, states.shape[0])
    reshape_state(states[:1], config.dims)
    rng = np.random.default_rng(seed)
    params = init_cnn_params(config, rng)
    history = []
    step = 0
    for _ in range(epochs):
        for idx in batches(states.shape[0], batch_size, rng):
            loss, grads = cnn_loss_and_grad(params, states[idx], y[idx], config)
            if not np.isfinite(loss):
                raise NumericalDivergence(f"non-finite loss at step {step}", step=step)
            lr = learning_rate_at(step, learning_rate, decay_steps, decay_rate)
            for k, g in grads.items():
                params[k] -= lr * g
            history.append(loss)
            step += 1
    return params, history


class StateCNNClassifier(ClassifierMixin, BaseEstimator):
    """Normal/anomalous classifier over flat encoder states.

    Parameters
    ----------
    dims : tuple of int, default=(16, 16, 2)
        Volume the state is reshaped into; the product must equal the state length.
    kernel : tuple of int, default=(10, 6)
    filters : int, default=16
    learning_rate : float, default=0.01
    decay_steps : int, default=1000
    decay_rate : float, default=0.5
    epochs : int, default=11
    batch_size : int, default=16
    random_state : int, default=0
    """

    def __init__(self, dims=(16, 16, 2), kernel=(10, 6), filters=16, learning_rate=0.01,
                 decay_steps=1000, decay_rate=0.5, epochs=11, batch_size=16, random_state=0):
        self.dims = dims
        self.kernel = kernel
        self.filters = filters
        self.learning_rate = learning_rate
        self.decay_steps = decay_steps
        self.decay_rate = decay_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    @property
    def config_(self) -> CnnConfig:
        return CnnConfig(tuple(self.dims), tuple(self.kernel), self.filters)

    def fit(self, X, y):
        X = check_array(X, ensure_all_finite=True)
        y = check_binary_labels(y, X.shape[0])
        config = self.config_
        if X.shape[1] != config.state_size:
            raise ShapeError(f"states have length {X.shape[1]}, dims {config.dims} need {config.state_size}")
        self.params_, self.loss_history_ = train_classifier(
            X, y, config, self.learning_rate, self.decay_steps, self.decay_rate,
            self.epochs, self.batch_size, int(self.random_state or 0))
        self.classes_ = np.array([NORMAL, ANOMALOUS])
        self.n_features_in_ = X.shape[1]
        return self

    def _check(self, X):
        check_is_fitted(self)
        X = check_array(X, ensure_all_finite=True)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def decision_scores(self, X):
        """Logistic scores before the softmax, shape (n, 2)."""
        return scores(self._check(X), self.params_, self.config_)

    def predict_proba(self, X):
        return softmax(self.decision_scores(X))

    def predict(self, X):
        return decide(self.predict_proba(X))

    def to_dict(self) -> dict:
        check_is_fitted(self)
        hp = self.get_params()
        hp["dims"] = list(hp["dims"])
        hp["kernel"] = list(hp["kernel"])
        return {
            "hyperparameters": hp,
            "n_features": int(self.n_features_in_),
            "params": {k: v.tolist() for k, v in self.params_.items()},
            "loss_history": [float(v) for v in self.loss_history_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateCNNClassifier":
        hp = dict(d["hyperparameters"])
        hp["dims"] = tuple(hp["dims"])
        hp["kernel"] = tuple(hp["kernel"])
        est = cls(**hp)
        est.params_ = {k: np.asarray(v, dtype=float) for k, v in d["params"].items()}
        est.loss_history_ = list(d.get("loss_history", []))
        est.n_features_in_ = int(d["n_features"])
        est.classes_ = np.array([NORMAL, ANOMALOUS])
        return est
