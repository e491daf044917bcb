"""Acceptance criteria; each test records one PASS/FAIL line (see conftest)."""

import json
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from gaitseq import lstm
from gaitseq.cnn import CnnConfig, cnn_gradient_check, init_cnn_params
from gaitseq.cycles import detect_events
from gaitseq.dataset import ModelBundle
from gaitseq.egomotion import compose_euler, decompose_essential, estimate_essential, euler_angles, relative_pose
from gaitseq.exceptions import NoGaitDetected
from gaitseq.protocol import SplitSpec, split
from gaitseq.signal import UniformSeries, align, condition
from gaitseq.svm import SMOClassifier
from gaitseq.synth import frame_matches, synth_walk

from helpers import overfit_run, reference_labels, verdict


def test_gradient_fidelity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    cfg = lstm.EncoderConfig(9, 8, 2, True, 0.8)
    params = lstm.init_params(cfg, rng, 0.3)
    X = rng.normal(size=(2, 12, 9))
    masks = lstm.dropout_masks(X.shape[:2], cfg, rng)
    # the loss is ~135 while some gradient entries are ~1e-6: a 1e-3 step keeps
    # round-off (~eps_machine * loss / step) below the truncation error
    err_lstm = max(lstm.gradient_check(params, X, cfg, epsilon=1e-3),
                   lstm.gradient_check(params, X, cfg, epsilon=1e-3, masks=masks))
    cnn_cfg = CnnConfig((12, 8, 4), (3, 3), 3)
    states = rng.normal(size=(4, cnn_cfg.state_size))
    err_cnn = cnn_gradient_check(init_cnn_params(cnn_cfg, rng), states, np.array([0, 1, 1, 0]), cnn_cfg)
    elapsed = time.perf_counter() - t0
    verdict("gradient fidelity", max(err_lstm, err_cnn) < 1e-4 and elapsed < 60,
            f"lstm {err_lstm:.2e}, cnn {err_cnn:.2e} (< 1e-4), {elapsed:.1f} s (< 60 s)")


def random_scene(rng):
    R = Rotation.from_rotvec(rng.uniform(-0.4, 0.4, 3)).as_matrix()
    t = rng.normal(size=3)
    return R, t / np.linalg.norm(t)


def test_geometry_round_trip():
    t0 = time.perf_counter()
    worst_clean = worst_noisy = 0.0
    leaked = 0
    for k in range(100):
        R, t = random_scene(np.random.default_rng([1, k]))
        n = 20 + k % 41
        m = frame_matches(R, t, n, np.random.default_rng([2, k]))
        pose = relative_pose(m, seed=k)
        worst_clean = max(worst_clean, np.linalg.norm(pose.R - R), np.linalg.norm(pose.t - t))

        # identical generator state up to outlier placement: differing rows are the outliers
        clean = frame_matches(R, t, 40, np.random.default_rng([3, k]))
        noisy = frame_matches(R, t, 40, np.random.default_rng([3, k]), outlier_fraction=0.2)
        outliers = np.any(clean.p_curr != noisy.p_curr, axis=1)
        assert outliers.sum() == 8
        E, mask = estimate_essential(noisy, seed=k)
        pose = decompose_essential(E, noisy.p_prev[mask], noisy.p_curr[mask])
        leaked += int(np.sum(mask & outliers))
        worst_noisy = max(worst_noisy, np.linalg.norm(pose.R - R), np.linalg.norm(pose.t - t))
    elapsed = time.perf_counter() - t0
    ok = worst_clean < 1e-6 and worst_noisy < 1e-4 and leaked == 0 and elapsed < 30
    verdict("geometry round trip", ok,
            f"noiseless {worst_clean:.1e} (< 1e-6), 20% outliers {worst_noisy:.1e} (< 1e-4), "
            f"{leaked} outliers in masks, {elapsed:.1f} s (< 30 s)")


def test_euler_consistency():
    rng = np.random.default_rng(0)
    worst = 0.0
    # half from sampled angles, half uniform on SO(3) restricted to |pitch| < 1.4
    angles = np.column_stack([rng.uniform(-np.pi, np.pi, 5000), rng.uniform(-1.4, 1.4, 5000),
                              rng.uniform(-np.pi, np.pi, 5000)])
    mats = [compose_euler(*a) for a in angles]
    uniform = Rotation.random(20000, random_state=1).as_matrix()
    pitch = np.arctan2(-uniform[:, 2, 0], np.hypot(uniform[:, 2, 1], uniform[:, 2, 2]))
    mats += list(uniform[np.abs(pitch) < 1.4][:5000])
    assert len(mats) == 10_000
    for R in mats:
        worst = max(worst, np.abs(compose_euler(*euler_angles(R)) - R).max())
    verdict("euler consistency", worst < 1e-9, f"max |recompose - R| = {worst:.1e} over 10^4 rotations (< 1e-9)")


def test_event_detection():
    hits = total = 0
    for seed in range(40):
        walk = synth_walk("normal", seed=[7, seed])
        tr = align(condition(walk.accel), condition(walk.gyro), condition(walk.angles), label=walk.label)
        ic = detect_events(tr.accel).ic
        truth = np.round((walk.ic_times - tr.accel.start_time) * tr.accel.sample_rate)
        hits += sum(np.any(np.abs(ic - g) <= 5) for g in truth)
        total += truth.size
    constant_ics = 0
    for level in (0.0, 9.81, -3.0):
        try:
            constant_ics += detect_events(UniformSeries(200.0, 0.0, np.full((2000, 1), level), ("az",))).ic.size
        except NoGaitDetected:
            pass
    rate = hits / total
    verdict("event detection", rate >= 0.95 and constant_ics == 0,
            f"{hits}/{total} = {100 * rate:.1f}% ICs within ±5 samples (>= 95%), {constant_ics} ICs on constant signals")


def run_all(out_dir):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "gaitseq.cli", "run-all", "--seed", "0", "--out-dir", str(out_dir)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return time.perf_counter() - t0


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    """Two independent desk-scale run-all invocations with the same seed."""
    base = tmp_path_factory.mktemp("run_all")
    return [(base / name, run_all(base / name)) for name in ("first", "second")]


@pytest.mark.slow
def test_end_to_end(desk_runs):
    out, seconds = desk_runs[0]
    rep = json.loads((out / "report.json").read_text())
    acc = {k: v["accuracy"] for k, v in rep["models"].items()}
    cfg = ModelBundle.load(out / "bundle.json").config
    assert cfg["encoder"]["hidden_size"] == 64 and cfg["synth"]["n_walks"] == 200
    ok = acc["rnn_cnn"] >= 0.99 and acc["svm"] >= 0.90 and acc["rnn_cnn"] >= acc["svm"] and seconds < 900
    verdict("end-to-end synthetic protocol", ok,
            f"rnn_cnn {100 * acc['rnn_cnn']:.2f}% (>= 99%), svm {100 * acc['svm']:.2f}% (>= 90%), "
            f"{rep['models']['svm']['n_test']} test cycles, run-all {seconds:.0f} s (< 900 s)")


def test_overfit_sanity():
    initial, final, steps = overfit_run(seed=0)
    reduction = 1 - final / initial
    verdict("overfit sanity", reduction >= 0.99 and steps <= 200,
            f"loss {initial:.1f} -> {final:.2f}, {100 * reduction:.2f}% reduction in {steps} steps (>= 99%)")


def test_protocol_fidelity():
    c = split(reference_labels(), SplitSpec()).counts()
    got = (c["encoder_train"], c["encoder_test"], c["classifier_train"], c["classifier_test"])
    verdict("protocol fidelity", got == (4469, 497, 5147, 572), f"split {got}, expected (4469, 497, 5147, 572)")


@pytest.mark.slow
def test_determinism(desk_runs):
    (a, _), (b, _) = desk_runs
    same = {f: (a / f).read_bytes() == (b / f).read_bytes() for f in ("bundle.json", "report.json")}
    verdict("determinism", all(same.values()),
            ", ".join(f"{f} {'identical' if s else 'differs'}" for f, s in same.items()))


@pytest.mark.slow
def test_svm_dual_feasibility(desk_runs):
    worst_sum, violations = 0.0, 0
    models = [SMOClassifier.from_dict(ModelBundle.load(out / "bundle.json").svm) for out, _ in desk_runs]
    rng = np.random.default_rng(0)
    for k in range(20):
        n = int(rng.integers(10, 80))
        y = np.arange(n) % 2
        X = rng.normal(size=(n, 6)) + 0.3 * y[:, None]
        models.append(SMOClassifier(C=float(rng.uniform(0.1, 10))).fit(X, y))
    for clf in models:
        lo, hi, s = clf.dual_feasibility()
        violations += int(lo < 0 or hi > clf.C)
        worst_sum = max(worst_sum, s)
    verdict("svm dual feasibility", violations == 0 and worst_sum < 1e-9,
            f"{len(models)} models, {violations} box violations, max |sum alpha y| = {worst_sum:.1e} (< 1e-9)")
