"""
Gait-cycle segmentation and normalization.

Initial Contacts (ICs) are found on the vertical acceleration: a Difference of
Gaussians band-pass is followed by a continuous wavelet transform with the
(Mexican hat) second derivative of a Gaussian; ICs sit at local minima of the
transform, Final Contacts (FCs) at local maxima of its second difference. A
cycle runs from IC(i) to IC(i+2), is resampled to 200 samples, detrended and
z-normalized with dataset-wide channel statistics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateChannel, NoGaitDetected
from .signal import MultiModalTrace, UniformSeries, parse_label
from .validation import check_cycles

logger = logging.getLogger(__name__)

CYCLE_LENGTH = 200
N_CHANNELS = 9


@dataclass
class EventConfig:
    """Event detector settings; all times in seconds."""

    dog_sigmas: tuple = (0.02, 0.1)
    cwt_period: float = 0.5
    min_ic_interval: float = 0.7
    max_ic_interval: float = 1.6
    fc_window: float = 0.75
    min_duration: float = 2.0
    peak_fraction: float = 0.45
    amplitude_floor: float = 1e-6
    vertical_channel: int = 2


@dataclass(frozen=True)
class GaitEvents:
    ic: np.ndarray
    fc: np.ndarray

    def __post_init__(self):
        ic = np.asarray(self.ic, dtype=int).ravel()
        fc = np.asarray(self.fc, dtype=int).ravel()
        if np.any(np.diff(ic) <= 0) or np.any(np.diff(fc) <= 0):
            raise ValueError("event indices must be strictly increasing")
        object.__setattr__(self, "ic", ic)
        object.__setattr__(self, "fc", fc)


@dataclass
class GaitCycle:
    """One 9 x 200 walking cycle."""

    data: np.ndarray
    label: int = 0
    walk: str = ""
    start: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape != (N_CHANNELS, CYCLE_LENGTH):
            raise ValueError(f"cycle must be {N_CHANNELS}x{CYCLE_LENGTH}, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("cycle contains non-finite values")
        self.data = data
        self.label = parse_label(self.label)

    def to_record(self) -> dict:
        return {
            "label": int(self.label),
            "walk": self.walk,
            "start": int(self.start),
            "data": self.data.tolist(),
        }

    @classmethod
    def from_record(cls, record: dict) -> "GaitCycle":
        return cls(record["data"], record["label"], record.get("walk", ""), record.get("start", 0))


@dataclass
class RawCycle:
    data: np.ndarray
    label: int
    walk: str
    start: int


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        self.std = np.asarray(self.std, dtype=float).ravel()
        if self.mean.shape != self.std.shape:
            raise ValueError("mean and std must have the same length")
        if np.any(self.std <= 0):
            raise DegenerateChannel("standard deviations must be positive")

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(d["mean"], d["std"])


def ricker(sigma: float, half_width: int | None = None) -> np.ndarray:
    """Mexican hat (negated second derivative of a Gaussian), unit energy."""
    if half_width is None:
        half_width = int(np.ceil(5 * sigma))
    t = np.arange(-half_width, half_width + 1, dtype=float)
    u = (t / sigma) ** 2
    w = (1.0 - u) * np.exp(-0.5 * u)
    return w / np.sqrt(np.sum(w ** 2))


def gaussian_cwt(x: np.ndarray, sigma: float) -> np.ndarray:
    """Single-scale CWT with :func:`ricker`, mirror-padded, same length as ``x``."""
    w = ricker(sigma)
    h = w.size // 2
    pad = min(h, x.size - 1)
    xp = np.pad(x, pad, mode="reflect")
    if pad < h:
        xp = np.pad(xp, h - pad, mode="edge")
    return np.convolve(xp, w, mode="valid")


def local_extrema(x: np.ndarray, kind: str = "min") -> np.ndarray:
    """Indices of strict local minima/maxima; flat runs report their midpoint."""
    x = np.asarray(x, dtype=float)
    if kind == "max":
        x = -x
    elif kind != "min":
        raise ValueError("kind must be 'min' or 'max'")
    if x.size < 3:
        return np.empty(0, dtype=int)
    # collapse plateaus into runs
    change = np.flatnonzero(np.diff(x) != 0) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [x.size]]) - 1
    vals = x[starts]
    out = []
    for k in range(1, len(starts) - 1):
        if vals[k] < vals[k - 1] and vals[k] < vals[k + 1]:
            out.append((starts[k] + ends[k]) // 2)
    return np.asarray(out, dtype=int)


def transform_vertical(x: np.ndarray, sample_rate: float, config: EventConfig) -> np.ndarray:
    """DoG band-pass followed by the Gaussian CWT."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    s1, s2 = (s * sample_rate for s in config.dog_sigmas)
    dog = gaussian_filter1d(x, s1, mode="reflect") - gaussian_filter1d(x, s2, mode="reflect")
    # Mexican-hat peak frequency is 1 / (sqrt(2) * pi * sigma)
    sigma = np.sqrt(2.0) * config.cwt_period * sample_rate / (2 * np.pi)
    return gaussian_cwt(dog, sigma)


def _longest_run(ic: np.ndarray, max_gap: float) -> np.ndarray:
    if ic.size <= 1:
        return ic
    breaks = np.flatnonzero(np.diff(ic) > max_gap) + 1
    runs = np.split(ic, breaks)
    lengths = [r.size for r in runs]
    return runs[int(np.argmax(lengths))]


def detect_events(vertical, sample_rate: float | None = None, config: EventConfig | None = None) -> GaitEvents:
    """Initial and Final Contacts from a vertical acceleration trace.

    Parameters
    ----------
    vertical : UniformSeries or array_like
        Single-channel vertical acceleration (a multi-channel series uses
        ``config.vertical_channel``).
    sample_rate : float, optional
        Required when ``vertical`` is a plain array.
    config : EventConfig, optional

    Returns
    -------
    GaitEvents

    Raises
    ------
    NoGaitDetected
        The trace is too short or no IC survives the amplitude and interval gates.
    """
    config = config or EventConfig()
    if isinstance(vertical, UniformSeries):
        sample_rate = vertical.sample_rate
        ch = 0 if vertical.n_channels == 1 else config.vertical_channel
        x = vertical.values[:, ch]
    else:
        if sample_rate is None:
            raise ValueError("sample_rate is required for array input")
        x = np.asarray(vertical, dtype=float).ravel()
    duration = x.size / sample_rate
    if duration < config.min_duration:
        raise NoGaitDetected(f"trace lasts {duration:.2f} s, need {config.min_duration} s")

    w = transform_vertical(x, sample_rate, config)
    cand = local_extrema(w, "min")
    cand = cand[w[cand] < 0]
    # reference depth: median of the deepest minima a walk of this length must at least contain
    n_ref = max(1, int(np.ceil(duration / config.max_ic_interval)))
    depths = np.sort(-w[cand])[::-1][:n_ref]
    scale = float(np.median(depths)) if depths.size else 0.0
    if not scale > config.amplitude_floor:
        raise NoGaitDetected("vertical acceleration is flat")
    cand = cand[-w[cand] >= config.peak_fraction * scale]
    min_gap = config.min_ic_interval * sample_rate
    accepted: List[int] = []
    # deepest minima first; anything closer than the minimum step interval is suppressed
    for idx in cand[np.argsort(w[cand], kind="stable")]:
        if all(abs(idx - a) >= min_gap for a in accepted):
            accepted.append(int(idx))
    ic = _longest_run(np.sort(np.asarray(accepted, dtype=int)), config.max_ic_interval * sample_rate)
    if ic.size == 0:
        raise NoGaitDetected("no initial contact passed the gates")

    d2 = np.zeros_like(w)
    d2[1:-1] = w[2:] - 2 * w[1:-1] + w[:-2]
    fc = []
    for a, b in zip(ic[:-1], ic[1:]):
        lo = a + 1
        hi = max(lo + 1, a + int(np.ceil(config.fc_window * (b - a))))
        peaks = local_extrema(d2[lo - 1:hi + 1], "max") + lo - 1
        peaks = peaks[(peaks >= lo) & (peaks < hi)]
        if peaks.size:
            fc.append(int(peaks[np.argmax(d2[peaks])]))
        else:
            fc.append(lo + int(np.argmax(d2[lo:hi])))
    return GaitEvents(ic, np.asarray(fc, dtype=int))


def slice_cycles(trace: MultiModalTrace, events: GaitEvents) -> List[RawCycle]:
    """Cycles ``[IC(i), IC(i+2))`` over the 9 stacked channels."""
    ic = events.ic
    if ic.size < 3:
        raise NoGaitDetected(f"need 3 initial contacts for one cycle, got {ic.size}")
    data = trace.stack()
    return [
        RawCycle(data[:, ic[i]:ic[i + 2]], trace.label, trace.walk_id, int(ic[i]))
        for i in range(ic.size - 2)
    ]


def detrend_cycle(cycle) -> np.ndarray:
    """Remove each channel's least-squares slope about the cycle midpoint.

    The channel mean is left untouched.
    """
    x = np.asarray(cycle, dtype=float)
    L = x.shape[-1]
    if L < 2:
        raise ValueError("need at least 2 samples to detrend")
    t = np.arange(L) - (L - 1) / 2.0
    slope = (x @ t) / np.dot(t, t)
    return x - slope[..., None] * t


def normalize_length(cycle, target: int = CYCLE_LENGTH) -> np.ndarray:
    """Linear interpolation of every channel onto ``target`` points."""
    x = np.atleast_2d(np.asarray(cycle, dtype=float))
    L = x.shape[-1]
    if L < 2:
        raise ValueError("need at least 2 samples to resample")
    if L == target:
        return x.copy()
    grid = np.linspace(0.0, L - 1.0, target)
    src = np.arange(L, dtype=float)
    return np.vstack([np.interp(grid, src, row) for row in x])


def fit_norm_stats(cycles) -> NormStats:
    """Per-channel mean and population std pooled over cycles and time."""
    X = check_cycles(_cycle_array(cycles), n_channels=None, length=None)
    mean = X.mean(axis=(0, 2))
    std = X.std(axis=(0, 2))
    bad = np.flatnonzero(std < 1e-12)
    if bad.size:
        raise DegenerateChannel(f"channels {bad.tolist()} have zero variance")
    return NormStats(mean, std)


def apply_norm(cycle, stats: NormStats):
    """``(x - mean) / std`` per channel; accepts a GaitCycle or an array."""
    if isinstance(cycle, GaitCycle):
        data = apply_norm(cycle.data, stats)
        return GaitCycle(data, cycle.label, cycle.walk, cycle.start)
    x = np.asarray(cycle, dtype=float)
    return (x - stats.mean[:, None]) / stats.std[:, None]


def _cycle_array(cycles) -> np.ndarray:
    if isinstance(cycles, np.ndarray):
        return cycles
    cycles = list(cycles)
    if cycles and isinstance(cycles[0], GaitCycle):
        return np.stack([c.data for c in cycles])
    return np.asarray(cycles, dtype=float)


def stack_cycles(cycles: Sequence[GaitCycle]):
    """``(X, y)`` arrays of shape (n, 9, 200) and (n,)."""
    if len(cycles) == 0:
        return np.empty((0, N_CHANNELS, CYCLE_LENGTH)), np.empty(0, dtype=int)
    X = np.stack([c.data for c in cycles])
    y = np.array([c.label for c in cycles], dtype=int)
    return X, y


def extract_cycles(trace: MultiModalTrace, config: EventConfig | None = None,
                   length: int = CYCLE_LENGTH) -> List[GaitCycle]:
    """Events, slicing, length normalization and detrending for one walk."""
    config = config or EventConfig()
    events = detect_events(trace.accel, config=config)
    out = []
    for raw in slice_cycles(trace, events):
        data = detrend_cycle(normalize_length(raw.data, length))
        out.append(GaitCycle(data, raw.label, raw.walk, raw.start))
    return out


class CycleStandardizer(TransformerMixin, BaseEstimator):
    """Channel-wise z-normalization of (n, 9, T) cycle stacks.

    Attributes
    ----------
    mean_ : ndarray of shape (n_channels,)
    std_ : ndarray of shape (n_channels,)
    """

    def fit(self, X, y=None):
        stats = fit_norm_stats(check_cycles(X, n_channels=None, length=None))
        self.mean_ = stats.mean
        self.std_ = stats.std
        self.n_channels_ = stats.mean.size
        return self

    @property
    def stats_(self) -> NormStats:
        check_is_fitted(self)
        return NormStats(self.mean_, self.std_)

    def transform(self, X):
        check_is_fitted(self)
        X = check_cycles(X, n_channels=self.n_channels_, length=None)
        return apply_norm(X, self.stats_)

    def inverse_transform(self, X):
        check_is_fitted(self)
        X = check_cycles(X, n_channels=self.n_channels_, length=None)
        return X * self.std_[:, None] + self.mean_[:, None]

    @classmethod
    def from_stats(cls, stats: NormStats) -> "CycleStandardizer":
        est = cls()
        est.mean_ = stats.mean
        est.std_ = stats.std
        est.n_channels_ = stats.mean.size
        return est
