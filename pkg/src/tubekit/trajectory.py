"""Center-coordinate tracks for tubelets.

A trajectory is a ``(T, 2)`` array of sub-pixel ``(x, y)`` patch centers,
one row per frame, with ``0 <= x <= W`` and ``0 <= y <= H``.  Three motion
families are provided:

* static: one uniformly drawn center repeated for every frame;
* linear: centers drawn at a few keyframes and linearly interpolated, with
  consecutive keyframes constrained to a displacement band;
* nonlinear: many uniform samples, Gaussian-smoothed per axis and resampled
  down to ``T`` frames.

Frame indices are 0-based throughout the API: the first frame is ``0`` and
the last is ``T - 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import seeding
from .errors import GenerationFailedError, InvalidConfigError

MOTION_KINDS = ("static", "linear", "nonlinear")

#: per-keyframe attempt budget for the displacement band in linear motion
RETRY_CAP = 1000


@dataclass(frozen=True)
class MotionConfig:
    """Parameters for one trajectory family on a ``W x H`` frame.

    ``delta_min``/``delta_max`` are pixel displacements between consecutive
    keyframes (linear only); ``n`` and ``sigma`` are the oversample count and
    smoothing width in samples (nonlinear only).
    """

    kind: str
    T: int
    W: float
    H: float
    K: int = 3
    delta_min: float = 40.0
    delta_max: float = 80.0
    n: int = 48
    sigma: float = 8.0

    def __post_init__(self):
        if self.kind not in MOTION_KINDS:
            raise InvalidConfigError(f"unknown motion kind {self.kind!r}")
        if self.T < 1:
            raise InvalidConfigError(f"T must be >= 1, got {self.T}")
        if self.W <= 0 or self.H <= 0:
            raise InvalidConfigError(f"frame size must be positive, got {self.W}x{self.H}")
        if self.kind == "linear":
            if not 2 <= self.K <= self.T:
                raise InvalidConfigError(f"need 2 <= K <= T, got K={self.K}, T={self.T}")
            if not 0 < self.delta_min <= self.delta_max:
                raise InvalidConfigError(
                    f"need 0 < delta_min <= delta_max, got [{self.delta_min}, {self.delta_max}]")
        if self.kind == "nonlinear":
            if self.n <= self.T:
                raise InvalidConfigError(f"need n > T, got n={self.n}, T={self.T}")
            if self.sigma <= 0:
                raise InvalidConfigError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class Trajectory:
    centers: np.ndarray  # (T, 2) float64, columns x, y

    @property
    def length(self) -> int:
        return len(self.centers)

    @property
    def x(self) -> np.ndarray:
        return self.centers[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.centers[:, 1]

    def in_bounds(self, W, H) -> bool:
        c = self.centers
        return bool(np.all((c[:, 0] >= 0) & (c[:, 0] <= W) & (c[:, 1] >= 0) & (c[:, 1] <= H)))


def sample_keyframes(T: int, K: int, seed: int) -> np.ndarray:
    """Return ``K`` sorted keyframe indices: ``0``, ``T-1`` and ``K-2`` distinct
    interior frames drawn uniformly without replacement."""
    if K < 2 or K > T:
        raise InvalidConfigError(f"need 2 <= K <= T, got K={K}, T={T}")
    interior = seeding.rng(seed).choice(np.arange(1, T - 1), size=K - 2, replace=False)
    return np.concatenate([[0], np.sort(interior), [T - 1]]).astype(np.int64)


def interpolate_keyframes(keyframes: np.ndarray, values: np.ndarray, T: int) -> np.ndarray:
    """Piecewise-linear fill of ``values`` (one row per keyframe) over ``T`` frames.

    Keyframe rows are copied verbatim, so the interpolant hits them exactly.
    """
    values = np.asarray(values, dtype=np.float64)
    out = np.empty((T,) + values.shape[1:], dtype=np.float64)
    for (k0, k1), v0, v1 in zip(zip(keyframes[:-1], keyframes[1:]), values[:-1], values[1:]):
        frac = (np.arange(k0, k1) - k0) / (k1 - k0)
        frac = frac.reshape((-1,) + (1,) * (values.ndim - 1))
        out[k0:k1] = v0 + frac * (v1 - v0)
    out[keyframes] = values
    return out


def _require_kind(cfg, kind):
    if cfg.kind != kind:
        raise InvalidConfigError(f"expected a {kind} motion config, got {cfg.kind!r}")


def static_trajectory(cfg: MotionConfig, seed: int) -> Trajectory:
    _require_kind(cfg, "static")
    r = seeding.rng(seed)
    center = np.array([r.uniform(0, cfg.W), r.uniform(0, cfg.H)])
    return Trajectory(np.tile(center, (cfg.T, 1)))


def linear_trajectory(cfg: MotionConfig, seed: int) -> Trajectory:
    _require_kind(cfg, "linear")
    keyframes = sample_keyframes(cfg.T, cfg.K, seeding.split(seed, "keyframes"))
    r = seeding.rng(seeding.split(seed, "centers"))
    size = np.array([cfg.W, cfg.H])
    points = [r.uniform(0, 1, 2) * size]
    for k in range(1, len(keyframes)):
        for _ in range(RETRY_CAP):
            candidate = r.uniform(0, 1, 2) * size
            d = math.hypot(*(candidate - points[-1]))
            if cfg.delta_min <= d <= cfg.delta_max:
                points.append(candidate)
                break
        else:
            raise GenerationFailedError(
                f"no keyframe {k} center within displacement [{cfg.delta_min}, {cfg.delta_max}] "
                f"on a {cfg.W}x{cfg.H} frame", RETRY_CAP)
    return Trajectory(interpolate_keyframes(keyframes, np.array(points), cfg.T))


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-k ** 2 / (2 * sigma ** 2))
    return w / w.sum()


def gaussian_smooth(values, sigma: float) -> np.ndarray:
    """Convolve with a normalized Gaussian truncated at ``ceil(3*sigma)``.

    Boundaries are mirrored with the edge sample repeated (``d c b a | a b c d``),
    which keeps constant sequences exact.
    """
    values = np.asarray(values, dtype=np.float64)
    kernel = gaussian_kernel(sigma)
    radius = len(kernel) // 2
    padded = np.pad(values, radius, mode="symmetric")
    return np.convolve(padded, kernel, mode="valid")


def resample(values, T: int) -> np.ndarray:
    """Evaluate the linear interpolant of ``values`` at ``T`` evenly spaced
    positions over ``[0, N-1]``, endpoints included."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n == T:
        return values.copy()
    pos = np.linspace(0, n - 1, T)
    return np.interp(pos, np.arange(n), values)


def nonlinear_trajectory(cfg: MotionConfig, seed: int, return_raw: bool = False):
    """Smooth random path; with ``return_raw`` also returns the ``(n, 2)`` raw samples."""
    _require_kind(cfg, "nonlinear")
    r = seeding.rng(seed)
    raw = r.uniform(0, 1, (cfg.n, 2)) * np.array([cfg.W, cfg.H])
    xs = resample(gaussian_smooth(raw[:, 0], cfg.sigma), cfg.T)
    ys = resample(gaussian_smooth(raw[:, 1], cfg.sigma), cfg.T)
    centers = np.stack([np.clip(xs, 0, cfg.W), np.clip(ys, 0, cfg.H)], axis=1)
    traj = Trajectory(centers)
    return (traj, raw) if return_raw else traj


def generate(cfg: MotionConfig, seed: int) -> Trajectory:
    if cfg.kind == "static":
        return static_trajectory(cfg, seed)
    if cfg.kind == "linear":
        return linear_trajectory(cfg, seed)
    return nonlinear_trajectory(cfg, seed)


def mean_sq_second_difference(values) -> float:
    """Mean squared second difference; a roughness measure for paths."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 3:
        return 0.0
    d2 = np.diff(values, n=2, axis=0)
    return float(np.mean(d2 ** 2))
