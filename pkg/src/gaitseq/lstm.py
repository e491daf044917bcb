"""
Peephole LSTM encoder, linear decoder and untruncated backpropagation through time.

Arrays are batch-major: a batch of sequences is ``(B, T, C)``. Parameters live
in a flat ``dict`` keyed ``l{layer}.{fw|bw}.{W,U,b,p_i,p_f,p_o}`` plus
``dec.W`` / ``dec.b``, so optimizers, clipping and serialization can treat
them uniformly. Gate blocks in ``W``, ``U`` and ``b`` are ordered
input, forget, candidate, output.

Cell equations (``*`` is element-wise)::

    i = sigmoid(x W_i + h U_i + b_i + p_i * c_prev)
    f = sigmoid(x W_f + h U_f + b_f + p_f * c_prev)
    g = tanh(x W_g + h U_g + b_g)
    c = f * c_prev + i * g
    o = sigmoid(x W_o + h U_o + b_o + p_o * c)
    h = o * tanh(c)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .exceptions import NumericalDivergence

Params = Dict[str, np.ndarray]

PARAM_SUFFIXES = ("W", "U", "b", "p_i", "p_f", "p_o")


@dataclass(frozen=True)
class EncoderConfig:
    input_size: int = 9
    hidden_size: int = 64
    layers: int = 2
    bidirectional: bool = True
    keep_prob: float = 0.8

    def __post_init__(self):
        if self.layers < 1 or self.hidden_size < 1 or self.input_size < 1:
            raise ValueError("layers, hidden_size and input_size must be >= 1")
        if not 0 < self.keep_prob <= 1:
            raise ValueError("keep_prob must be in (0, 1]")

    @property
    def directions(self) -> Tuple[str, ...]:
        return ("fw", "bw") if self.bidirectional else ("fw",)

    @property
    def output_size(self) -> int:
        return self.hidden_size * len(self.directions)

    @property
    def state_size(self) -> int:
        return self.layers * len(self.directions) * 2 * self.hidden_size

    def layer_input_size(self, layer: int) -> int:
        return self.input_size if layer == 0 else self.output_size


@dataclass
class LstmLayerParams:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    p_i: np.ndarray
    p_f: np.ndarray
    p_o: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]


def layer_params(params: Params, layer: int, direction: str) -> LstmLayerParams:
    key = f"l{layer}.{direction}."
    return LstmLayerParams(*(params[key + s] for s in PARAM_SUFFIXES))


def param_shapes(config: EncoderConfig, output_size: int = 9) -> Dict[str, tuple]:
    H = config.hidden_size
    shapes = {}
    for layer in range(config.layers):
        n_in = config.layer_input_size(layer)
        for d in config.directions:
            key = f"l{layer}.{d}."
            shapes[key + "W"] = (n_in, 4 * H)
            shapes[key + "U"] = (H, 4 * H)
            shapes[key + "b"] = (4 * H,)
            for p in ("p_i", "p_f", "p_o"):
                shapes[key + p] = (H,)
    shapes["dec.W"] = (output_size, config.output_size)
    shapes["dec.b"] = (output_size,)
    return shapes


def init_params(config: EncoderConfig, rng: np.random.Generator, scale: float = 0.08,
                output_size: int = 9) -> Params:
    """Uniform ``[-scale, scale]`` initialization of every parameter."""
    return {
        name: rng.uniform(-scale, scale, shape)
        for name, shape in param_shapes(config, output_size).items()
    }


def zeros_like_params(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def _sigmoid(z):
    # tanh form never overflows and avoids masked assignment in the time loop
    return 0.5 * np.tanh(0.5 * z) + 0.5


def lstm_cell_step(x, h_prev, c_prev, params: LstmLayerParams):
    """One peephole-LSTM update; returns ``(h, c)``.

    Works for a single vector or a batch of row vectors.
    """
    H = params.hidden_size
    z = x @ params.W + h_prev @ params.U + params.b
    i = _sigmoid(z[..., :H] + params.p_i * c_prev)
    f = _sigmoid(z[..., H:2 * H] + params.p_f * c_prev)
    g = np.tanh(z[..., 2 * H:3 * H])
    c = f * c_prev + i * g
    o = _sigmoid(z[..., 3 * H:] + params.p_o * c)
    h = o * np.tanh(c)
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise NumericalDivergence("non-finite LSTM activation")
    return h, c


class _DirectionCache:
    __slots__ = ("x", "order", "i", "f", "g", "o", "c", "tc", "h_prev", "c_prev")


def run_direction(x: np.ndarray, p: LstmLayerParams, reverse: bool = False,
                  cache: bool = False):
    """Run one direction over ``x`` of shape (B, T, C).

    Returns hidden outputs (B, T, H) indexed by input time, the final
    ``(h, c)`` and, when ``cache`` is set, what the backward pass needs.
    """
    B, T, _ = x.shape
    H = p.hidden_size
    # time-major buffers keep every per-step slice contiguous
    proj = np.ascontiguousarray((x @ p.W + p.b).transpose(1, 0, 2))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    out = np.empty((T, B, H))
    order = range(T - 1, -1, -1) if reverse else range(T)
    if cache:
        gates_if = np.empty((T, B, 2 * H))
        g_all = np.empty((T, B, H))
        o_all = np.empty((T, B, H))
        c_all = np.empty((T, B, H))
        tc_all = np.empty((T, B, H))
        h_prev = np.empty((T, B, H))
        c_prev = np.empty((T, B, H))
    p_if = np.concatenate([p.p_i, p.p_f])
    for t in order:
        z = proj[t] + h @ p.U
        gates = _sigmoid(z[:, :2 * H] + p_if * np.tile(c, 2))
        g = np.tanh(z[:, 2 * H:3 * H])
        c_new = gates[:, H:] * c + gates[:, :H] * g
        o = _sigmoid(z[:, 3 * H:] + p.p_o * c_new)
        tc = np.tanh(c_new)
        if cache:
            gates_if[t] = gates
            g_all[t] = g
            o_all[t] = o
            c_all[t] = c_new
            tc_all[t] = tc
            h_prev[t] = h
            c_prev[t] = c
        c = c_new
        h = o * tc
        out[t] = h
    if not (np.all(np.isfinite(out)) and np.all(np.isfinite(c))):
        raise NumericalDivergence("non-finite LSTM activation")
    out = out.transpose(1, 0, 2)
    if not cache:
        return out, (h, c), None
    dc = _DirectionCache()
    dc.x = x
    dc.order = list(order)
    dc.i = gates_if[:, :, :H]
    dc.f = gates_if[:, :, H:]
    dc.g, dc.o, dc.c, dc.tc = g_all, o_all, c_all, tc_all
    dc.h_prev, dc.c_prev = h_prev, c_prev
    return out, (h, c), dc


def backprop_direction(d_out: np.ndarray, p: LstmLayerParams, cache: _DirectionCache):
    """BPTT through one direction.

    ``d_out`` is dL/dh for every time step (B, T, H). Returns dL/dx (B, T, C)
    and the parameter gradients keyed by suffix.
    """
    B, T, H = d_out.shape
    d_out = np.ascontiguousarray(d_out.transpose(1, 0, 2))
    dz_all = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    U_T = np.ascontiguousarray(p.U.T)
    for t in reversed(cache.order):
        i, f, g, o = cache.i[t], cache.f[t], cache.g[t], cache.o[t]
        tc = cache.tc[t]
        dh = d_out[t] + dh_next
        dz = dz_all[t]
        dzo = dh * tc * o * (1.0 - o)
        dc = dc_next + dh * o * (1.0 - tc * tc) + dzo * p.p_o
        dzi = dc * g * i * (1.0 - i)
        dzf = dc * cache.c_prev[t] * f * (1.0 - f)
        dz[:, :H] = dzi
        dz[:, H:2 * H] = dzf
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dzo
        dc_next = dc * f + dzi * p.p_i + dzf * p.p_f
        dh_next = dz @ U_T
    flat_dz = dz_all.reshape(T * B, 4 * H)
    x_tm = cache.x.transpose(1, 0, 2).reshape(T * B, -1)
    c_prev = cache.c_prev.reshape(T * B, H)
    grads = {
        "W": x_tm.T @ flat_dz,
        "U": cache.h_prev.reshape(T * B, H).T @ flat_dz,
        "b": flat_dz.sum(axis=0),
        "p_i": np.einsum("nh,nh->h", flat_dz[:, :H], c_prev),
        "p_f": np.einsum("nh,nh->h", flat_dz[:, H:2 * H], c_prev),
        "p_o": np.einsum("nh,nh->h", flat_dz[:, 3 * H:], cache.c.reshape(T * B, H)),
    }
    dx = (dz_all @ p.W.T).transpose(1, 0, 2)
    return dx, grads


@dataclass
class EncoderOutput:
    outputs: np.ndarray  # (B, T, output_size) top layer, after dropout
    state: np.ndarray  # (B, state_size)
    caches: Optional[list] = None
    masks: Optional[list] = None


def dropout_masks(shape_bt: Tuple[int, int], config: EncoderConfig, rng: np.random.Generator) -> List[np.ndarray]:
    """Inverted-dropout masks for every layer output."""
    B, T = shape_bt
    keep = config.keep_prob
    return [
        (rng.random((B, T, config.output_size)) < keep) / keep
        for _ in range(config.layers)
    ]


def encode(X: np.ndarray, params: Params, config: EncoderConfig,
           masks: Optional[List[np.ndarray]] = None, cache: bool = False) -> EncoderOutput:
    """Stacked (bi)directional encoder over ``X`` of shape (B, T, C).

    ``masks`` (one per layer, scaled by 1/keep) are applied to layer outputs;
    pass ``None`` for inference. The state vector is laid out as
    layer, direction, (h, c), unit.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    layer_in = X
    states = []
    caches = [] if cache else None
    for layer in range(config.layers):
        outs = []
        layer_caches = {}
        for d in config.directions:
            p = layer_params(params, layer, d)
            out, (h, c), dc = run_direction(layer_in, p, reverse=(d == "bw"), cache=cache)
            outs.append(out)
            states.extend([h, c])
            layer_caches[d] = dc
        y = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=2)
        if masks is not None:
            y = y * masks[layer]
        if cache:
            caches.append(layer_caches)
        layer_in = y
    state = np.concatenate(states, axis=1)
    return EncoderOutput(layer_in, state, caches, masks)


def decode(outputs: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Step-wise linear read-out ``x_hat_t = W y_t + b``."""
    return outputs @ W.T + b


def mse_loss(X, X_hat) -> float:
    """Summed squared error per sequence, averaged over the batch.

    For a single sequence (2-D input) this is just the sum of squares.
    """
    X = np.asarray(X, dtype=float)
    X_hat = np.asarray(X_hat, dtype=float)
    if X.shape != X_hat.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {X_hat.shape}")
    sq = (X - X_hat) ** 2
    if sq.ndim <= 2:
        return float(sq.sum())
    return float(sq.reshape(sq.shape[0], -1).sum(axis=1).mean())


def forward(params: Params, X: np.ndarray, config: EncoderConfig, masks=None):
    enc = encode(X, params, config, masks=masks)
    return decode(enc.outputs, params["dec.W"], params["dec.b"]), enc


def loss_and_grad(params: Params, X: np.ndarray, config: EncoderConfig,
                  masks: Optional[List[np.ndarray]] = None):
    """Reconstruction loss of batch ``X`` (B, T, C) and its exact gradient."""
    X = np.asarray(X, dtype=float)
    B = X.shape[0]
    enc = encode(X, params, config, masks=masks, cache=True)
    X_hat = decode(enc.outputs, params["dec.W"], params["dec.b"])
    loss = mse_loss(X, X_hat)

    grads = zeros_like_params(params)
    d_hat = 2.0 * (X_hat - X) / B
    Y = enc.outputs
    grads["dec.W"] = d_hat.reshape(-1, d_hat.shape[2]).T @ Y.reshape(-1, Y.shape[2])
    grads["dec.b"] = d_hat.sum(axis=(0, 1))
    dY = d_hat @ params["dec.W"]

    H = config.hidden_size
    for layer in reversed(range(config.layers)):
        if masks is not None:
            dY = dY * masks[layer]
        d_in = None
        for k, d in enumerate(config.directions):
            p = layer_params(params, layer, d)
            dx, g = backprop_direction(dY[:, :, k * H:(k + 1) * H], p, enc.caches[layer][d])
            for s, v in g.items():
                grads[f"l{layer}.{d}.{s}"] = v
            d_in = dx if d_in is None else d_in + dx
        dY = d_in
    return loss, grads


def global_norm(grads: Params) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Params, clip_norm: float):
    """Scale all gradients by ``clip_norm / max(norm, clip_norm)``."""
    norm = global_norm(grads)
    if norm > clip_norm:
        scale = clip_norm / norm
        grads = {k: v * scale for k, v in grads.items()}
    return grads, norm


def gradient_check(params: Params, X: np.ndarray, config: EncoderConfig, epsilon: float = 1e-5,
                   names=None, masks=None, floor: float = 1e-8):
    """Largest relative error between BPTT and central-difference gradients.

    ``names`` restricts the check to some parameter arrays. The relative error
    of one entry is ``|a - n| / max(|a| + |n|, floor)``.
    """
    _, analytic = loss_and_grad(params, X, config, masks=masks)
    names = list(params) if names is None else list(names)
    worst = 0.0
    for name in names:
        arr = params[name]
        flat = arr.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up = mse_loss(X, forward(params, X, config, masks)[0])
            flat[j] = orig - epsilon
            down = mse_loss(X, forward(params, X, config, masks)[0])
            flat[j] = orig
            numeric = (up - down) / (2 * epsilon)
            a = analytic[name].reshape(-1)[j]
            err = abs(a - numeric) / max(abs(a) + abs(numeric), floor)
            worst = max(worst, err)
    return worst
