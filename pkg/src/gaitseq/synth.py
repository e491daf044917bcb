"""
Synthetic walks with known ground truth.

A walk is a sequence of steps (IC to IC). Every signal is a deterministic
template of the step phase plus sensor noise, so the true IC instants are known
exactly. Anomalies are parametric template deformations standing in for the
emulated conditions (shuffling, hemiplegic limp, slow cautious gait, forward
trunk tilt). They are simulation proxies, not clinical models.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .egomotion import FrameMatches, compose_euler, sampson_distance, skew
from .signal import (
    ACCEL_CHANNELS,
    ANGLE_CHANNELS,
    ANOMALOUS,
    GYRO_CHANNELS,
    LABEL_NAMES,
    NORMAL,
    TimedSeries,
)

GRAVITY = 9.81
ANOMALY_KINDS = ("shuffling", "hemiplegic", "slowdown", "posture")


@dataclass
class SynthConfig:
    n_steps: int = 12
    step_interval: float = 1.0
    interval_jitter: float = 0.02
    walk_speed_spread: float = 0.03
    amplitude_spread: float = 0.08
    imu_rate: float = 200.0
    imu_rate_jitter: float = 0.3
    frame_rate: float = 30.0
    max_video_latency: float = 0.03
    accel_noise: float = 0.15
    gyro_noise: float = 0.03
    normal_fraction: float = 0.7
    points_per_frame: int = 16
    slowdown_factor: float = 0.7


@dataclass
class _Gait:
    """Per-walk template parameters."""

    bob: float = 1.5
    impact: float = 2.5
    impact_width: float = 0.025
    push: float = 1.0
    push_width: float = 0.04
    push_phase: float = 0.62
    lateral: float = 0.8
    forward: float = 1.0
    tilt: float = 0.0
    gyro: tuple = (0.5, 0.3, 0.2)
    # odd steps scale impact / lateral sway and stretch the interval
    odd_impact: float = 1.0
    odd_lateral: float = 1.0
    odd_interval: float = 1.0
    pitch_drift: float = 0.0


@dataclass
class SyntheticWalk:
    walk_id: str
    kind: str
    label: int
    accel: TimedSeries
    gyro: TimedSeries
    angles: TimedSeries
    ic_times: np.ndarray
    video_latency: float
    frames: Optional[List[FrameMatches]] = None
    meta: dict = field(default_factory=dict)


def _gait_for(kind: str, rng: np.random.Generator, config: SynthConfig) -> tuple:
    g = _Gait()
    amp = rng.normal(1.0, config.amplitude_spread)
    g.bob *= amp
    g.impact *= amp
    g.push *= amp
    g.lateral *= rng.normal(1.0, config.amplitude_spread)
    interval = config.step_interval * rng.normal(1.0, config.walk_speed_spread)
    if kind == "normal":
        pass
    elif kind == "shuffling":
        g.bob *= 0.45
        g.impact *= 0.4
        g.push *= 0.3
        g.forward *= 0.6
    elif kind == "hemiplegic":
        g.odd_impact = 0.6
        g.odd_lateral = 2.0
        g.odd_interval = 1.25
    elif kind == "slowdown":
        f = config.slowdown_factor
        interval /= f
        g.bob *= f ** 2
        g.impact *= 0.6
        g.push *= 0.5
        g.forward *= f
    elif kind == "posture":
        g.tilt = math.radians(12.0)
        g.pitch_drift = 0.002
    else:
        raise ValueError(f"unknown walk kind {kind!r}")
    return g, interval


class _StepClock:
    """Maps absolute time to (step index, phase in [0, 1), step start, step length)."""

    def __init__(self, ic_times: np.ndarray):
        self.ic = ic_times
        # one virtual step before and after so every time has a phase
        first = ic_times[1] - ic_times[0]
        last = ic_times[-1] - ic_times[-2]
        self.edges = np.concatenate([[ic_times[0] - first], ic_times, [ic_times[-1] + last]])

    def __call__(self, t: np.ndarray):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, self.edges.size - 2)
        start = self.edges[k]
        length = self.edges[k + 1] - start
        phase = (t - start) / length
        return k, phase, start, length


def _templates(t, clock: _StepClock, g: _Gait):
    """Noise-free accel (3), gyro (3) and relative camera angles (3) at times ``t``."""
    k, phase, start, length = clock(t)
    odd = (k % 2) == 1
    impact = np.where(odd, g.impact * g.odd_impact, g.impact)
    lateral = np.where(odd, g.lateral * g.odd_lateral, g.lateral)
    # nearest IC on either side for the impact dip
    dt_prev = t - start
    dt_next = t - (start + length)
    dip = impact * np.exp(-0.5 * (dt_prev / g.impact_width) ** 2)
    impact_next = np.where(odd, g.impact, g.impact * g.odd_impact)
    dip = dip + impact_next * np.exp(-0.5 * (dt_next / g.impact_width) ** 2)
    push = g.push * np.exp(-0.5 * ((t - start - g.push_phase * length) / g.push_width) ** 2)
    stride = np.pi * (k + phase)

    vertical = -g.bob * np.cos(2 * np.pi * phase) - dip + push
    az = GRAVITY * math.cos(g.tilt) + vertical
    ax = g.forward * np.sin(2 * np.pi * phase) + GRAVITY * math.sin(g.tilt)
    ay = lateral * np.sin(stride)

    g1, g2, g3 = g.gyro
    gx = g1 * np.sin(2 * np.pi * phase + 0.5)
    gy = g2 * np.sin(stride) * np.where(odd, g.odd_lateral, 1.0)
    gz = g3 * np.cos(stride)

    roll = 0.004 * lateral * np.cos(stride)
    pitch = 0.003 * vertical + g.pitch_drift
    yaw = 0.01 * gy
    return np.column_stack([ax, ay, az]), np.column_stack([gx, gy, gz]), np.column_stack([roll, pitch, yaw])


def _irregular_clock(duration: float, config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    mean_dt = 1.0 / config.imu_rate
    n = int(duration / mean_dt * 1.2) + 10
    dt = mean_dt * rng.uniform(1 - config.imu_rate_jitter, 1 + config.imu_rate_jitter, n)
    t = rng.uniform(0, mean_dt) + np.concatenate([[0.0], np.cumsum(dt)])
    return t[t <= duration]


def frame_matches(R, t, n_points: int, rng: np.random.Generator, frame_index: int = 1,
                  outlier_fraction: float = 0.0, min_outlier_distance: float = 0.05,
                  depth_range=(4.0, 12.0), spread: float = 3.0) -> FrameMatches:
    """Noise-free correspondences of random points seen before and after ``(R, t)``.

    Outliers replace the current-frame point with a random location whose
    Sampson distance to the true epipolar geometry is at least
    ``min_outlier_distance``, so they are gross by construction.
    """
    R = np.asarray(R, dtype=float)
    t = np.asarray(t, dtype=float)
    pts1, pts2 = [], []
    while len(pts1) < n_points:
        m = 2 * n_points
        X = np.column_stack([
            rng.uniform(-spread, spread, m),
            rng.uniform(-spread, spread, m),
            rng.uniform(*depth_range, m),
        ])
        X2 = X @ R.T + t
        ok = (X[:, 2] > 0.5) & (X2[:, 2] > 0.5)
        for a, b in zip(X[ok], X2[ok]):
            pts1.append(a / a[2])
            pts2.append(b / b[2])
    p1 = np.array(pts1[:n_points])
    p2 = np.array(pts2[:n_points])
    n_out = int(round(outlier_fraction * n_points))
    if n_out:
        E = skew(t) @ R
        done = 0
        # points near the epipole cannot be pushed far from their epipolar line; skip them
        for i in rng.permutation(n_points):
            cand = np.column_stack([rng.uniform(-0.6, 0.6, (64, 2)), np.ones(64)])
            ok = np.flatnonzero(sampson_distance(E, p1[i:i + 1], cand) >= min_outlier_distance)
            if ok.size:
                p2[i] = cand[ok[0]]
                done += 1
                if done == n_out:
                    break
        if done < n_out:
            raise ValueError(f"could only place {done} of {n_out} gross outliers")
    return FrameMatches(frame_index, p1[:, :2], p2[:, :2])


def synth_walk(kind: str = "normal", seed=0, config: SynthConfig | None = None,
               walk_id: str = "walk", with_frames: bool = False) -> SyntheticWalk:
    """Generate one walk of ``config.n_steps`` initial contacts."""
    config = config or SynthConfig()
    rng = np.random.default_rng(seed)
    g, interval = _gait_for(kind, rng, config)

    intervals = interval * rng.normal(1.0, config.interval_jitter, config.n_steps - 1)
    intervals[1::2] *= g.odd_interval
    margin = 0.6 * interval
    ic_times = margin + np.concatenate([[0.0], np.cumsum(intervals)])
    duration = ic_times[-1] + margin
    clock = _StepClock(ic_times)

    t_acc = _irregular_clock(duration, config, rng)
    acc, _, _ = _templates(t_acc, clock, g)
    acc = acc + rng.normal(0.0, config.accel_noise, acc.shape)
    t_gyr = _irregular_clock(duration, config, rng)
    _, gyr, _ = _templates(t_gyr, clock, g)
    gyr = gyr + rng.normal(0.0, config.gyro_noise, gyr.shape)

    latency = rng.uniform(-config.max_video_latency, config.max_video_latency)
    n_frames = int(np.floor(duration * config.frame_rate)) + 1
    t_frames = np.arange(n_frames) / config.frame_rate
    # a frame stamped t actually shows the scene at t + latency
    _, _, ang = _templates(np.clip(t_frames + latency, 0.0, duration), clock, g)
    ang[0] = 0.0  # the first frame has no predecessor: identity relative rotation

    frames = None
    if with_frames:
        frames = []
        for n in range(1, n_frames):
            R = compose_euler(*ang[n])
            fwd = np.array([0.02 * ang[n, 0], 0.05 * ang[n, 1], 1.0])
            frames.append(frame_matches(R, fwd / np.linalg.norm(fwd), config.points_per_frame, rng, n))

    label = NORMAL if kind == "normal" else ANOMALOUS
    return SyntheticWalk(
        walk_id=walk_id,
        kind=kind,
        label=label,
        accel=TimedSeries(t_acc, acc, ACCEL_CHANNELS),
        gyro=TimedSeries(t_gyr, gyr, GYRO_CHANNELS),
        angles=TimedSeries(t_frames, ang, ANGLE_CHANNELS),
        ic_times=ic_times,
        video_latency=latency,
        frames=frames,
        meta={"step_interval": float(interval)},
    )


def walk_kinds(n_walks: int, anomaly_kinds: Sequence[str], normal_fraction: float) -> List[str]:
    n_normal = int(round(normal_fraction * n_walks)) if anomaly_kinds else n_walks
    kinds = ["normal"] * n_normal
    for i in range(n_walks - n_normal):
        kinds.append(anomaly_kinds[i % len(anomaly_kinds)])
    return kinds


def _write_csv(path: Path, series: TimedSeries):
    data = np.column_stack([series.timestamps, series.values])
    header = ",".join(("t",) + tuple(series.channel_names))
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def generate_synthetic(out_dir, n_walks: int = 200, anomaly_kinds: Sequence[str] = ANOMALY_KINDS,
                       seed: int = 0, config: SynthConfig | None = None,
                       video: str = "angles") -> List[Path]:
    """Write ``n_walks`` walks (CSV streams + JSON manifest each) to ``out_dir``.

    ``video`` selects what the manifest's ``angles_or_correspondences`` entry
    points to: a precomputed angle CSV or a JSON-lines correspondence file.
    Returns the manifest paths in walk order.
    """
    if n_walks < 1:
        raise ValueError("n_walks must be >= 1")
    if video not in ("angles", "correspondences"):
        raise ValueError("video must be 'angles' or 'correspondences'")
    for kind in anomaly_kinds:
        if kind not in ANOMALY_KINDS:
            raise ValueError(f"unknown anomaly kind {kind!r}")
    config = config or SynthConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kinds = walk_kinds(n_walks, list(anomaly_kinds), config.normal_fraction)
    order = np.random.default_rng(seed).permutation(n_walks)
    manifests = []
    for i in range(n_walks):
        kind = kinds[order[i]]
        wid = f"walk_{i:04d}"
        walk = synth_walk(kind, seed=[seed, i], config=config, walk_id=wid,
                          with_frames=(video == "correspondences"))
        _write_csv(out / f"{wid}_accel.csv", walk.accel)
        _write_csv(out / f"{wid}_gyro.csv", walk.gyro)
        _write_csv(out / f"{wid}_angles.csv", walk.angles)
        if video == "correspondences":
            video_path = f"{wid}_matches.jsonl"
            with open(out / video_path, "w") as fh:
                for fm in walk.frames:
                    fh.write(json.dumps(fm.to_record()) + "\n")
        else:
            video_path = f"{wid}_angles.csv"
        manifest = {
            "accel": f"{wid}_accel.csv",
            "gyro": f"{wid}_gyro.csv",
            "angles_or_correspondences": video_path,
            "label": LABEL_NAMES[walk.label],
            "frame_rate": config.frame_rate,
            "truth": {
                "kind": kind,
                "ic_times": walk.ic_times.tolist(),
                "video_latency": walk.video_latency,
            },
        }
        path = out / f"{wid}.json"
        path.write_text(json.dumps(manifest, indent=1))
        manifests.append(path)
    return manifests
