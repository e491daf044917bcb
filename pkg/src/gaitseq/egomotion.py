"""
Camera ego-motion from calibrated point correspondences.

For each pair of adjacent frames the essential matrix is estimated with a
RANSAC-wrapped normalized 8-point solver, decomposed into a relative rotation
and a unit translation direction (cheirality vote), and the relative poses are
chained. The roll/pitch/yaw of every relative rotation becomes a 3-channel
angle stream sampled at the video frame rate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence

import numpy as np

from .exceptions import (
    AmbiguousDecomposition,
    DegenerateInput,
    EstimationFailure,
    GimbalWarning,
)
from .signal import ANGLE_CHANNELS, TimedSeries

MIN_MATCHES = 8

_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class RansacConfig:
    """RANSAC settings; ``threshold`` is a Sampson distance in normalized units."""

    threshold: float = 1e-3
    max_iterations: int = 500
    min_inlier_ratio: float = 0.5
    confidence: float = 0.999
    chunk_size: int = 64
    seed: int = 0


@dataclass(frozen=True)
class FrameMatches:
    """Correspondences between frame ``frame_index - 1`` and ``frame_index``."""

    frame_index: int
    p_prev: np.ndarray
    p_curr: np.ndarray

    def __post_init__(self):
        prev = homogeneous(self.p_prev)
        curr = homogeneous(self.p_curr)
        if prev.shape != curr.shape:
            raise ValueError("p_prev and p_curr must have the same number of points")
        if int(self.frame_index) < 1:
            raise ValueError("frame_index starts at 1")
        object.__setattr__(self, "p_prev", prev)
        object.__setattr__(self, "p_curr", curr)

    @classmethod
    def from_record(cls, record: dict) -> "FrameMatches":
        m = np.asarray(record["matches"], dtype=float).reshape(-1, 4)
        return cls(int(record["frame"]), m[:, :2], m[:, 2:])

    def to_record(self) -> dict:
        m = np.hstack([self.p_prev[:, :2], self.p_curr[:, :2]])
        return {"frame": int(self.frame_index), "matches": m.tolist()}

    def __len__(self):
        return self.p_prev.shape[0]


@dataclass(frozen=True)
class RelativePose:
    R: np.ndarray
    t: np.ndarray


@dataclass
class PoseChain:
    rotations: List[np.ndarray] = field(default_factory=list)
    translations: List[np.ndarray] = field(default_factory=list)
    angles: List[tuple] = field(default_factory=list)

    def __len__(self):
        return len(self.rotations)


def homogeneous(points) -> np.ndarray:
    """(N, 2) or (N, 3) points as (N, 3) with the last coordinate 1."""
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] not in (2, 3):
        raise ValueError(f"points must have shape (N, 2) or (N, 3), got {p.shape}")
    if p.shape[1] == 2:
        return np.hstack([p, np.ones((p.shape[0], 1))])
    if not np.allclose(p[:, 2], 1.0, rtol=0, atol=0):
        raise ValueError("homogeneous points must have third coordinate 1")
    return p


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def compose_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Inverse of :func:`euler_angles`: roll about z, pitch about y, yaw about x."""
    return rot_z(roll) @ rot_y(pitch) @ rot_x(yaw)


def euler_angles(R, warn: bool = True) -> tuple:
    """Roll, pitch and yaw (radians) of a rotation matrix.

    ``roll = atan2(r21, r11)``, ``yaw = atan2(r32, r33)`` and
    ``pitch = atan2(-r31, hypot(r32, r33))`` with 1-based entry indices.
    A :class:`GimbalWarning` is issued when ``|pitch|`` is within 1e-6 of pi/2.
    """
    R = np.asarray(R, dtype=float)
    roll = math.atan2(R[1, 0], R[0, 0])
    yaw = math.atan2(R[2, 1], R[2, 2])
    pitch = math.atan2(-R[2, 0], math.hypot(R[2, 1], R[2, 2]))
    if warn and abs(pitch) > math.pi / 2 - 1e-6:
        warnings.warn(f"pitch {pitch:.9f} rad is at gimbal lock", GimbalWarning, stacklevel=2)
    return roll, pitch, yaw


def orthonormalize(R) -> np.ndarray:
    """Gram-Schmidt on the columns of ``R``, keeping a right-handed frame."""
    R = np.asarray(R, dtype=float)
    c0 = R[:, 0] / np.linalg.norm(R[:, 0])
    c1 = R[:, 1] - np.dot(c0, R[:, 1]) * c0
    c1 /= np.linalg.norm(c1)
    c2 = np.cross(c0, c1)
    return np.column_stack([c0, c1, c2])


def _hartley(points: np.ndarray) -> np.ndarray:
    """Similarity taking (N, 3) homogeneous points to zero mean, sqrt(2) spread."""
    xy = points[:, :2]
    centroid = xy.mean(axis=0)
    spread = np.sqrt(((xy - centroid) ** 2).sum(axis=1)).mean()
    scale = math.sqrt(2.0) / spread if spread > 0 else 1.0
    return np.array(
        [[scale, 0.0, -scale * centroid[0]], [0.0, scale, -scale * centroid[1]], [0.0, 0.0, 1.0]]
    )


def project_essential(E: np.ndarray) -> np.ndarray:
    """Closest matrix with singular values (1, 1, 0); works on stacks of 3x3."""
    U, _, Vt = np.linalg.svd(E)
    return U @ (np.array([1.0, 1.0, 0.0])[:, None] * Vt)


def eight_point(p_prev: np.ndarray, p_curr: np.ndarray, samples=None) -> np.ndarray:
    """Normalized 8-point estimate(s) of E with ``p_curr^T E p_prev = 0``.

    With ``samples`` of shape (K, m) the fit is done for every row of point
    indices at once and a (K, 3, 3) stack is returned.
    """
    T1 = _hartley(p_prev)
    T2 = _hartley(p_curr)
    q1 = p_prev @ T1.T
    q2 = p_curr @ T2.T
    rows = (q2[:, :, None] * q1[:, None, :]).reshape(-1, 9)
    A = rows[None] if samples is None else rows[np.asarray(samples)]
    _, _, Vt = np.linalg.svd(A)
    F = Vt[:, -1, :].reshape(-1, 3, 3)
    E = T2.T @ F @ T1
    E = project_essential(E)
    return E[0] if samples is None else E


def sampson_distance(E: np.ndarray, p_prev: np.ndarray, p_curr: np.ndarray) -> np.ndarray:
    """First-order geometric distance of each correspondence to ``E``.

    ``E`` may be a single matrix or a (K, 3, 3) stack; the result is (N,) or (K, N).
    """
    Ex1 = p_prev @ np.swapaxes(E, -1, -2)  # rows: E @ p_prev
    Etx2 = p_curr @ E  # rows: E^T @ p_curr
    num = np.sum(p_curr * Ex1, axis=-1)
    den = Ex1[..., 0] ** 2 + Ex1[..., 1] ** 2 + Etx2[..., 0] ** 2 + Etx2[..., 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.abs(num) / np.sqrt(den)
    return np.where(den > 0, d, np.inf)


def epipolar_residual(E, p_prev, p_curr) -> np.ndarray:
    """``|p_curr^T E p_prev|`` per correspondence."""
    return np.abs(np.einsum("ni,ij,nj->n", p_curr, E, p_prev))


def _required_iterations(inlier_ratio: float, confidence: float) -> float:
    if inlier_ratio >= 1.0:
        return 0.0
    if inlier_ratio <= 0.0:
        return math.inf
    p_good = inlier_ratio ** MIN_MATCHES
    return math.log(1.0 - confidence) / math.log1p(-p_good)


def estimate_essential(matches: FrameMatches, config: RansacConfig | None = None, seed=None):
    """Robust essential matrix for one frame pair.

    Hypotheses are drawn in chunks from a generator seeded by ``seed`` (or
    ``config.seed``); the first hypothesis with the largest inlier count wins
    and is refit on its inliers. Sampling stops early once the adaptive
    iteration bound for ``config.confidence`` is met.

    Returns
    -------
    E : ndarray, shape (3, 3)
    inliers : ndarray of bool, shape (N,)
    """
    config = config or RansacConfig()
    n = len(matches)
    if n < MIN_MATCHES:
        raise DegenerateInput(f"need at least {MIN_MATCHES} matches, got {n}")
    if config.max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    p1, p2 = matches.p_prev, matches.p_curr
    rng = np.random.default_rng(config.seed if seed is None else seed)

    best_count, best_E = -1, None
    done = 0
    needed = float(config.max_iterations)
    while done < min(needed, config.max_iterations):
        k = int(min(config.chunk_size, config.max_iterations - done))
        samples = np.argsort(rng.random((k, n)), axis=1)[:, :MIN_MATCHES]
        Es = eight_point(p1, p2, samples)
        counts = (sampson_distance(Es, p1, p2) < config.threshold).sum(axis=1)
        j = int(np.argmax(counts))
        if counts[j] > best_count:
            best_count, best_E = int(counts[j]), Es[j]
            needed = _required_iterations(best_count / n, config.confidence)
        done += k

    if best_count < max(MIN_MATCHES, config.min_inlier_ratio * n):
        raise EstimationFailure(
            f"best hypothesis has {best_count}/{n} inliers "
            f"(minimum ratio {config.min_inlier_ratio})"
        )

    E = best_E
    mask = sampson_distance(E, p1, p2) < config.threshold
    for _ in range(3):
        refit = eight_point(p1[mask], p2[mask])
        refit_mask = sampson_distance(refit, p1, p2) < config.threshold
        if refit_mask.sum() < mask.sum():
            break
        stable = np.array_equal(refit_mask, mask)
        E, mask = refit, refit_mask
        if stable:
            break
    return E, mask


def _triangulated_depths(R, t, p1, p2):
    """Depths (lambda1, lambda2) solving ``lambda2 p2 = lambda1 R p1 + t`` in least squares."""
    a = p1 @ R.T
    b = p2
    aa = np.sum(a * a, axis=1)
    bb = np.sum(b * b, axis=1)
    ab = np.sum(a * b, axis=1)
    at = a @ t
    bt = b @ t
    det = aa * bb - ab * ab
    with np.errstate(divide="ignore", invalid="ignore"):
        lam1 = (-at * bb + ab * bt) / det
        lam2 = (aa * bt - ab * at) / det
    return lam1, lam2


def pose_candidates(E: np.ndarray):
    """The four (R, t) factorizations of ``E = [t]x R`` with unit ``t``."""
    U, _, Vt = np.linalg.svd(E)
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    R1 = U @ _W @ Vt
    R2 = U @ _W.T @ Vt
    t = U[:, 2] / np.linalg.norm(U[:, 2])
    return [(R1, t), (R1, -t), (R2, t), (R2, -t)]


def decompose_essential(E, p_prev, p_curr) -> RelativePose:
    """Pick the factorization of ``E`` that puts most points in front of both cameras."""
    p1 = homogeneous(p_prev)
    p2 = homogeneous(p_curr)
    if p1.shape[0] < 1:
        raise DegenerateInput("need at least one inlier for the cheirality test")
    candidates = pose_candidates(np.asarray(E, dtype=float))
    votes = []
    for R, t in candidates:
        lam1, lam2 = _triangulated_depths(R, t, p1, p2)
        votes.append(int(np.sum((lam1 > 0) & (lam2 > 0))))
    best = max(votes)
    if best == 0 or votes.count(best) > 1:
        raise AmbiguousDecomposition(f"cheirality votes {votes} have no unique winner")
    R, t = candidates[votes.index(best)]
    return RelativePose(orthonormalize(R), t / np.linalg.norm(t))


def integrate_poses(relatives: Sequence[RelativePose]) -> PoseChain:
    """Chain relative poses starting from the identity.

    ``R_n = Rhat_n R_{n-1}`` (re-orthonormalized) and
    ``t_n = Rhat_n t_{n-1} + that_n``. ``angles[n]`` are the Euler angles of
    the relative rotation ``Rhat_n``; frame 0 gets zeros.
    """
    if len(relatives) == 0:
        raise ValueError("need at least one relative pose")
    R = np.eye(3)
    t = np.zeros(3)
    chain = PoseChain([R.copy()], [t.copy()], [(0.0, 0.0, 0.0)])
    for rel in relatives:
        Rh = np.asarray(rel.R, dtype=float)
        R = orthonormalize(Rh @ R)
        t = Rh @ t + np.asarray(rel.t, dtype=float)
        chain.rotations.append(R)
        chain.translations.append(t)
        chain.angles.append(euler_angles(Rh))
    return chain


def angles_to_series(chain: PoseChain, frame_rate: float = 30.0, t0: float = 0.0) -> TimedSeries:
    """Angle triplets stamped at ``t0 + n / frame_rate``."""
    if not frame_rate > 0:
        raise ValueError("frame_rate must be positive")
    n = len(chain.angles)
    timestamps = t0 + np.arange(n) / frame_rate
    return TimedSeries(timestamps, np.asarray(chain.angles, dtype=float), ANGLE_CHANNELS)


def relative_pose(matches: FrameMatches, config: RansacConfig | None = None, seed=None) -> RelativePose:
    E, mask = estimate_essential(matches, config, seed=seed)
    return decompose_essential(E, matches.p_prev[mask], matches.p_curr[mask])


def track(frames: Iterable[FrameMatches], config: RansacConfig | None = None) -> PoseChain:
    """Relative pose for every frame pair, chained.

    Each frame gets its own generator seeded with ``(config.seed, frame_index)``
    so a frame's estimate does not depend on the frames before it.
    """
    config = config or RansacConfig()
    frames = sorted(frames, key=lambda f: f.frame_index)
    for prev, cur in zip(frames, frames[1:]):
        if cur.frame_index != prev.frame_index + 1:
            raise ValueError(f"frame {prev.frame_index} is followed by {cur.frame_index}")
    relatives = [
        relative_pose(f, config, seed=[config.seed, f.frame_index]) for f in frames
    ]
    return integrate_poses(relatives)
