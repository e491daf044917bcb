"""Shared fixtures-as-functions for the test modules."""

import numpy as np

from gaitseq import lstm
from gaitseq.autoencoder import TrainConfig, train_autoencoder
from gaitseq.cycles import apply_norm, extract_cycles, fit_norm_stats
from gaitseq.signal import align, condition
from gaitseq.synth import synth_walk

# tiny overfit configuration: one bidirectional layer of 8 units, no dropout
OVERFIT_ENCODER = lstm.EncoderConfig(9, 8, 1, True, 1.0)
OVERFIT_TRAIN = TrainConfig(learning_rate=0.1, decay_steps=40, decay_rate=0.5, epochs=200,
                            batch_size=4, clip_norm=5.0, init_scale=0.3, seed=0, max_steps=200)


def walk_cycles(kind="normal", seed=0):
    w = synth_walk(kind, seed=seed)
    tr = align(condition(w.accel), condition(w.gyro), condition(w.angles), label=w.label)
    return extract_cycles(tr)


def normalized_cycle(seed=0):
    cycles = walk_cycles("normal", seed)
    return apply_norm(cycles[0], fit_norm_stats(cycles)).data


def overfit_run(seed=0):
    """Initial and final reconstruction loss on four copies of one cycle after 200 steps."""
    X = np.stack([normalized_cycle(seed).T] * 4)
    params, history = train_autoencoder(X, OVERFIT_ENCODER, OVERFIT_TRAIN)
    final = lstm.mse_loss(X, lstm.forward(params, X, OVERFIT_ENCODER)[0])
    return history[0], final, len(history)


def tiny_encoder(seed=0, layers=2, bidirectional=True, scale=0.5):
    cfg = lstm.EncoderConfig(3, 4, layers, bidirectional, 0.8)
    rng = np.random.default_rng(seed)
    params = lstm.init_params(cfg, rng, scale, output_size=3)
    X = rng.normal(size=(2, 6, 3))
    return cfg, params, X, rng


# small enough for a full pipeline run in seconds: 1x4 bidirectional encoder -> 16-value state
TINY_PIPELINE = {
    "encoder": {"hidden_size": 4, "n_layers": 1, "epochs": 1, "batch_size": 8},
    "cnn": {"dims": [4, 4, 1], "kernel": [1, 1], "filters": 2, "epochs": 2, "batch_size": 8},
    "synth": {"n_walks": 10},
}


def reference_labels():
    return np.r_[np.zeros(7941, int), np.ones(2744, int)]


# "PASS name: detail" lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def verdict(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
