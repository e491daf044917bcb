"""
Conditioning of raw timestamped sensor streams.

Smartphone sensors deliver samples on an irregular clock. Everything downstream
assumes a uniform 200 Hz grid, so streams are linearly resampled, denoised with
a zero-phase Butterworth low-pass and finally cross-aligned (video angles
against the vertical accelerometer axis).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .exceptions import (
    AlignmentFailure,
    InsufficientData,
    InvalidCutoff,
    InvalidTimestamps,
)

NORMAL = 0
ANOMALOUS = 1
LABEL_NAMES = {NORMAL: "normal", ANOMALOUS: "anomalous"}

ACCEL_CHANNELS = ("ax", "ay", "az")
GYRO_CHANNELS = ("gx", "gy", "gz")
ANGLE_CHANNELS = ("roll", "pitch", "yaw")

# rows of a gait-cycle matrix
CYCLE_CHANNELS = ACCEL_CHANNELS + GYRO_CHANNELS + ANGLE_CHANNELS


def parse_label(label) -> int:
    """Map ``"normal"``/``"anomalous"`` (or 0/1) to the integer class label."""
    if isinstance(label, str):
        key = label.strip().lower()
        for value, name in LABEL_NAMES.items():
            if key == name:
                return value
        raise ValueError(f"unknown label {label!r}")
    value = int(label)
    if value not in LABEL_NAMES:
        raise ValueError(f"unknown label {label!r}")
    return value


def _as_2d(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"values must be 1-D or 2-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class TimedSeries:
    """Samples with explicit (possibly non-uniform) timestamps in seconds."""

    timestamps: np.ndarray
    values: np.ndarray
    channel_names: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float).ravel()
        v = _as_2d(self.values)
        if v.shape[0] != t.shape[0]:
            raise ValueError(
                f"{v.shape[0]} value rows for {t.shape[0]} timestamps"
            )
        if v.shape[1] < 1:
            raise ValueError("at least one channel is required")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise InvalidTimestamps("timestamps must be strictly increasing")
        names = tuple(self.channel_names) or tuple(f"ch{i}" for i in range(v.shape[1]))
        if len(names) != v.shape[1]:
            raise ValueError(f"{len(names)} channel names for {v.shape[1]} channels")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "channel_names", names)

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.timestamps.shape[0]


@dataclass(frozen=True)
class UniformSeries:
    """Samples on the grid ``start_time + n / sample_rate``."""

    sample_rate: float
    start_time: float
    values: np.ndarray
    channel_names: tuple = ()

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        v = _as_2d(self.values)
        names = tuple(self.channel_names) or tuple(f"ch{i}" for i in range(v.shape[1]))
        if len(names) != v.shape[1]:
            raise ValueError(f"{len(names)} channel names for {v.shape[1]} channels")
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "start_time", float(self.start_time))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "channel_names", names)

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_time + np.arange(len(self)) / self.sample_rate

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]

    def crop(self, lo: int, hi: int) -> "UniformSeries":
        """Rows ``[lo, hi)`` with the start time moved accordingly."""
        return UniformSeries(
            self.sample_rate,
            self.start_time + lo / self.sample_rate,
            self.values[lo:hi],
            self.channel_names,
        )


@dataclass(frozen=True)
class MultiModalTrace:
    """Accelerometer, gyroscope and camera angles on one shared 200 Hz grid."""

    accel: UniformSeries
    gyro: UniformSeries
    angles: UniformSeries
    label: int = NORMAL
    walk_id: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        streams = (self.accel, self.gyro, self.angles)
        if len({len(s) for s in streams}) != 1:
            raise ValueError("aligned streams must have equal length")
        if len({s.sample_rate for s in streams}) != 1:
            raise ValueError("aligned streams must share a sample rate")
        if len({s.start_time for s in streams}) != 1:
            raise ValueError("aligned streams must share a start time")
        object.__setattr__(self, "label", parse_label(self.label))

    @property
    def sample_rate(self) -> float:
        return self.accel.sample_rate

    def __len__(self):
        return len(self.accel)

    def stack(self) -> np.ndarray:
        """The 9 x N matrix: accel x/y/z, gyro x/y/z, roll/pitch/yaw."""
        return np.vstack([self.accel.values.T, self.gyro.values.T, self.angles.values.T])


def resample(series: TimedSeries, target_rate: float = 200.0) -> UniformSeries:
    """Linearly interpolate ``series`` onto a uniform grid.

    The grid starts at the first timestamp and never extends past the last
    one, so no value is extrapolated.
    """
    if not target_rate > 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    t = np.asarray(series.timestamps, dtype=float)
    if t.size < 2:
        raise InsufficientData(f"need at least 2 samples to resample, got {t.size}")
    if not np.all(np.diff(t) > 0):
        raise InvalidTimestamps("timestamps must be strictly increasing")
    span = t[-1] - t[0]
    # the epsilon keeps a grid point that lands on the last timestamp up to rounding
    n = int(np.floor(span * target_rate + 1e-9)) + 1
    grid = t[0] + np.arange(n) / target_rate
    grid[-1] = min(grid[-1], t[-1])
    out = np.empty((n, series.n_channels))
    for c in range(series.n_channels):
        out[:, c] = np.interp(grid, t, series.values[:, c])
    return UniformSeries(target_rate, t[0], out, series.channel_names)


def butter_lowpass_sos(cutoff: float, sample_rate: float, order: int = 4) -> np.ndarray:
    nyquist = 0.5 * sample_rate
    if not 0 < cutoff < nyquist:
        raise InvalidCutoff(
            f"cutoff {cutoff} Hz must lie in (0, {nyquist}) for fs={sample_rate} Hz"
        )
    return butter(order, cutoff / nyquist, btype="low", output="sos")


def lowpass(series: UniformSeries, cutoff: float = 40.0, order: int = 4) -> UniformSeries:
    """Zero-phase Butterworth low-pass, applied forward and backward.

    Edges are handled by even (mirror) extension so the first gait cycle is
    not corrupted by the filter's start-up transient.
    """
    sos = butter_lowpass_sos(cutoff, series.sample_rate, order)
    n = len(series)
    padlen = 3 * (2 * len(sos) + 1)
    if n <= padlen:
        raise InsufficientData(f"need more than {padlen} samples to filter, got {n}")
    filtered = sosfiltfilt(sos, series.values, axis=0, padtype="even", padlen=padlen)
    return UniformSeries(series.sample_rate, series.start_time, filtered, series.channel_names)


def _normalized_xcorr(x: np.ndarray, y: np.ndarray) -> float | None:
    if x.size < 2:
        return None
    x = x - x.mean()
    y = y - y.mean()
    denom = np.sqrt(np.dot(x, x) * np.dot(y, y))
    if denom <= 0 or not np.isfinite(denom):
        return None
    return float(np.dot(x, y) / denom)


def estimate_delay(
    a: UniformSeries,
    b: UniformSeries,
    max_lag: int,
    a_channel: int = 0,
    b_channel: int = 0,
) -> int:
    """Lag ``k`` such that ``b[n + k]`` best matches ``a[n]``.

    A positive lag means ``b`` is delayed with respect to ``a``. Lags whose
    overlap is empty or flat are skipped. Ties go to the smallest ``|k|``
    (and the positive lag when ``k`` and ``-k`` tie).
    """
    if a.sample_rate != b.sample_rate:
        raise ValueError("series must share a sample rate")
    max_lag = int(max_lag)
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    if len(a) <= max_lag or len(b) <= max_lag:
        raise InsufficientData(f"series shorter than max_lag={max_lag}")
    x = a.values[:, a_channel]
    y = b.values[:, b_channel]
    best_lag, best_score = None, -np.inf
    for k in sorted(range(-max_lag, max_lag + 1), key=lambda k: (abs(k), -k)):
        lo = max(0, -k)
        hi = min(x.size, y.size - k)
        if hi - lo < 2:
            continue
        score = _normalized_xcorr(x[lo:hi], y[lo + k:hi + k])
        if score is not None and score > best_score:
            best_lag, best_score = k, score
    if best_lag is None:
        raise AlignmentFailure("no lag produced a usable overlap")
    return best_lag


def _grid_offset(series: UniformSeries, ref: UniformSeries) -> int:
    return int(round((series.start_time - ref.start_time) * ref.sample_rate))


def align(
    accel: UniformSeries,
    gyro: UniformSeries,
    angles: UniformSeries,
    max_lag: int = 40,
    accel_channel: int = 2,
    angle_channel: int = 1,
    label=NORMAL,
    walk_id: str = "",
) -> MultiModalTrace:
    """Synchronize the video angles with the inertial streams.

    Accelerometer and gyroscope share the phone clock and are matched by
    timestamp. The angle stream is additionally shifted by the delay that
    maximizes its correlation (pitch by default) with the vertical
    accelerometer axis. All three are then cropped to their common support.
    """
    rate = accel.sample_rate
    if gyro.sample_rate != rate or angles.sample_rate != rate:
        raise ValueError("all streams must be resampled to the same rate first")

    off_g = _grid_offset(gyro, accel)
    off_a = _grid_offset(angles, accel)

    # timestamp-overlap views of accel and angles, used only for the delay search
    lo = max(0, off_a)
    hi = min(len(accel), off_a + len(angles))
    if hi - lo <= 2 * max_lag:
        raise AlignmentFailure("accelerometer and angle streams barely overlap")
    lag = estimate_delay(
        accel.crop(lo, hi),
        angles.crop(lo - off_a, hi - off_a),
        max_lag,
        a_channel=accel_channel,
        b_channel=angle_channel,
    )

    # in accelerometer index space, angles row m sits at m + off_a - lag
    shift_a = off_a - lag
    lo = max(0, off_g, shift_a)
    hi = min(len(accel), off_g + len(gyro), shift_a + len(angles))
    if hi <= lo:
        raise AlignmentFailure("streams have no common support")

    start = accel.start_time + lo / rate
    out = []
    for series, offset in ((accel, 0), (gyro, off_g), (angles, shift_a)):
        values = series.values[lo - offset:hi - offset]
        out.append(UniformSeries(rate, start, values, series.channel_names))
    return MultiModalTrace(*out, label=label, walk_id=walk_id, meta={"video_lag": lag})


def condition(
    series: TimedSeries,
    sample_rate: float = 200.0,
    cutoff: float | None = 40.0,
    order: int = 4,
) -> UniformSeries:
    """Resample and (optionally) low-pass one raw stream."""
    uniform = resample(series, sample_rate)
    if cutoff is None:
        return uniform
    return lowpass(uniform, cutoff, order)


def rms(x: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x ** 2)))
