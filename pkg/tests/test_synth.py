import hashlib

import numpy as np
import pytest

from gaitseq.cycles import detect_events
from gaitseq.signal import align, condition
from gaitseq.synth import SynthConfig, generate_synthetic, synth_walk, walk_kinds


def tree_digest(directory):
    h = hashlib.sha256()
    for p in sorted(directory.iterdir()):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def test_bit_identical(tmp_path):
    generate_synthetic(tmp_path / "a", 5, seed=11)
    generate_synthetic(tmp_path / "b", 5, seed=11)
    generate_synthetic(tmp_path / "c", 5, seed=12)
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "c")


def test_walk_count_and_labels(tmp_path):
    paths = generate_synthetic(tmp_path, 10, seed=0)
    assert len(paths) == 10
    kinds = walk_kinds(10, ("shuffling", "hemiplegic", "slowdown", "posture"), 0.7)
    assert kinds.count("normal") == 7
    assert sorted(kinds[7:]) == ["hemiplegic", "shuffling", "slowdown"]


def detected_ics(walk):
    trace = align(condition(walk.accel), condition(walk.gyro), condition(walk.angles), label=walk.label)
    return detect_events(trace.accel).ic


@pytest.mark.parametrize("seed", range(5))
def test_slowdown_interval(seed):
    normal = synth_walk("normal", seed=seed)
    slow = synth_walk("slowdown", seed=seed)
    ratio = np.diff(slow.ic_times).mean() / np.diff(normal.ic_times).mean()
    assert abs(ratio * 0.7 - 1) < 0.05
    # the same holds for the contacts the detector finds
    detected = np.diff(detected_ics(slow)).mean() / np.diff(detected_ics(normal)).mean()
    assert abs(detected * 0.7 - 1) < 0.05


def test_slowdown_factor_configurable():
    walk = synth_walk("slowdown", seed=0, config=SynthConfig(slowdown_factor=0.5))
    base = synth_walk("normal", seed=0)
    assert walk.meta["step_interval"] == pytest.approx(2 * base.meta["step_interval"], rel=1e-12)


def test_unknown_kind():
    with pytest.raises(ValueError):
        synth_walk("limping")
    with pytest.raises(ValueError):
        generate_synthetic("/nonexistent-never-created", 2, anomaly_kinds=("limping",))


def test_no_walks():
    with pytest.raises(ValueError):
        generate_synthetic("/nonexistent-never-created", 0)


def test_frames_follow_angles():
    walk = synth_walk("normal", seed=0, config=SynthConfig(n_steps=4), with_frames=True)
    assert len(walk.frames) == walk.angles.timestamps.size - 1
    assert [f.frame_index for f in walk.frames] == list(range(1, len(walk.frames) + 1))
