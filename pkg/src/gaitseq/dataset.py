"""
Reading walks, turning them into normalized-length cycles and persisting models.

On disk a walk is a JSON manifest pointing at per-sensor CSV files (header
``t,<channels...>``) and at either a precomputed angle CSV or a JSON-lines file
of per-frame point correspondences. Cycles are stored one JSON object per line.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from .config import PipelineConfig
from .cycles import GaitCycle, NormStats, extract_cycles, fit_norm_stats
from .egomotion import FrameMatches, angles_to_series, track
from .exceptions import GaitSeqError, PipelineFailure
from .signal import ACCEL_CHANNELS, ANGLE_CHANNELS, GYRO_CHANNELS, TimedSeries, align, condition, parse_label

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def read_csv(path, channel_names=None) -> TimedSeries:
    """A ``t,<ch...>`` CSV file as a :class:`TimedSeries`."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0].strip() != "t":
        raise ValueError(f"{path}: first column must be 't'")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: {data.shape[1]} columns for header {header}")
    names = tuple(h.strip() for h in header[1:])
    if channel_names is not None and len(names) != len(channel_names):
        raise ValueError(f"{path}: expected channels {channel_names}, got {names}")
    return TimedSeries(data[:, 0], data[:, 1:], names)


def write_csv(path, series: TimedSeries):
    header = ",".join(("t",) + tuple(series.channel_names))
    data = np.column_stack([series.timestamps, series.values])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def read_matches(path) -> List[FrameMatches]:
    frames = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                frames.append(FrameMatches.from_record(json.loads(line)))
    return frames


@dataclass
class WalkManifest:
    accel: Path
    gyro: Path
    video: Path
    label: int
    walk_id: str
    frame_rate: float = 30.0
    video_start: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def has_correspondences(self) -> bool:
        return self.video.suffix == ".jsonl"

    @classmethod
    def load(cls, path) -> "WalkManifest":
        path = Path(path)
        d = json.loads(path.read_text())
        missing = {"accel", "gyro", "angles_or_correspondences", "label"} - set(d)
        if missing:
            raise ValueError(f"{path}: manifest lacks {sorted(missing)}")
        base = path.parent
        extra = {k: v for k, v in d.items() if k not in
                 ("accel", "gyro", "angles_or_correspondences", "label", "frame_rate", "video_start")}
        return cls(base / d["accel"], base / d["gyro"], base / d["angles_or_correspondences"],
                   parse_label(d["label"]), path.stem, float(d.get("frame_rate", 30.0)),
                   float(d.get("video_start", 0.0)), extra)


def load_angles(manifest: WalkManifest, config: PipelineConfig) -> TimedSeries:
    """Precomputed angles, or angles recovered from correspondences by ego-motion."""
    if manifest.has_correspondences:
        chain = track(read_matches(manifest.video), config.ransac)
        return angles_to_series(chain, manifest.frame_rate, manifest.video_start)
    return read_csv(manifest.video, ANGLE_CHANNELS)


def walk_cycles(manifest: WalkManifest, config: PipelineConfig) -> List[GaitCycle]:
    """Conditioning, alignment and cycle extraction for one walk."""
    sc = config.signal
    streams = [
        condition(s, sc.sample_rate, sc.cutoff, sc.order)
        for s in (read_csv(manifest.accel, ACCEL_CHANNELS),
                  read_csv(manifest.gyro, GYRO_CHANNELS),
                  load_angles(manifest, config))
    ]
    trace = align(*streams, max_lag=sc.max_lag, accel_channel=sc.accel_channel,
                  angle_channel=sc.angle_channel, label=manifest.label, walk_id=manifest.walk_id)
    return extract_cycles(trace, config.events, sc.cycle_length)


def find_manifests(paths: Iterable) -> List[Path]:
    """Expand directories to the ``*.json`` manifests they contain, sorted by name."""
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(p.glob("*.json")))
        else:
            out.append(p)
    return out


@dataclass
class BuildResult:
    cycles: List[GaitCycle]
    stats: NormStats
    skipped: dict


def build_dataset(manifests: Sequence, config: PipelineConfig | None = None) -> BuildResult:
    """Cycles of every walk plus channel statistics over all of them.

    Walks that fail (too short, no gait, unreadable) are logged and skipped.

    Raises
    ------
    PipelineFailure
        No manifest was given or every walk failed.
    """
    config = config or PipelineConfig()
    paths = find_manifests(manifests)
    if not paths:
        raise PipelineFailure("no manifests given")
    cycles: List[GaitCycle] = []
    skipped = {}
    for path in paths:
        try:
            walk = walk_cycles(WalkManifest.load(path), config)
        except (GaitSeqError, ValueError, OSError) as exc:
            logger.warning("skipping %s: %s: %s", path, type(exc).__name__, exc)
            skipped[str(path)] = type(exc).__name__
            continue
        cycles.extend(walk)
    if not cycles:
        raise PipelineFailure(f"all {len(paths)} walks failed")
    logger.info("%d cycles from %d walks (%d skipped)", len(cycles), len(paths) - len(skipped), len(skipped))
    return BuildResult(cycles, fit_norm_stats(cycles), skipped)


def write_cycles(path, cycles: Sequence[GaitCycle]):
    with open(path, "w") as fh:
        for c in cycles:
            fh.write(json.dumps(c.to_record()) + "\n")


def read_cycles(path) -> List[GaitCycle]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(GaitCycle.from_record(json.loads(line)))
    if not out:
        raise PipelineFailure(f"{path} contains no cycles")
    return out


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, shortest round-trip floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class ModelBundle:
    """Everything needed to classify new cycles, as one JSON document.

    Sections that were not trained are ``None``.
    """

    config: dict
    norm_stats: NormStats | None = None
    encoder: dict | None = None
    cnn: dict | None = None
    svm: dict | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "config": self.config,
            "norm_stats": self.norm_stats.to_dict() if self.norm_stats is not None else None,
            "encoder": self.encoder,
            "cnn": self.cnn,
            "svm": self.svm,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported bundle format {d.get('format_version')!r}")
        stats = NormStats.from_dict(d["norm_stats"]) if d.get("norm_stats") else None
        return cls(d["config"], stats, d.get("encoder"), d.get("cnn"), d.get("svm"), d.get("meta", {}))

    def save(self, path):
        Path(path).write_text(dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ModelBundle":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        return hashlib.sha256(dumps(self.to_dict()).encode()).hexdigest()
