"""Pseudo-object patches and their per-frame affine transformations.

Coordinates follow image conventions: ``x`` grows to the right, ``y`` grows
downward, and pixel ``(i, j)`` covers ``[j, j+1) x [i, i+1)`` with its center
at ``(j + 0.5, i + 0.5)``.  All transforms act about the patch center.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .clip import Clip
from .errors import DegenerateTransformError, InvalidConfigError, InvalidInputError
from .trajectory import Trajectory, interpolate_keyframes, sample_keyframes

SHAPES = ("rectangle", "ellipse", "triangle", "rounded-rectangle")
TRANSFORM_KINDS = ("none", "scale", "rotation", "shear")

IDENTITY_PARAMS = {
    "none": (),
    "scale": (1.0, 1.0),
    "rotation": (0.0,),
    "shear": (0.0, 0.0),
}

#: (Min, Max) per kind; shear uses the narrower range of the hyperparameter table
DEFAULT_BOUNDS = {
    "scale": (0.5, 1.5),
    "rotation": (-90.0, 90.0),
    "shear": (-1.0, 1.0),
}

MIN_ABS_DET = 1e-6
_SUPERSAMPLE = 4


@dataclass(eq=False)
class Patch:
    pixels: np.ndarray  # (h, w, 3) float64 intensities in [0, 255]
    mask: np.ndarray    # (h, w) float64 coverage in [0, 1]

    def __post_init__(self):
        if self.pixels.shape[:2] != self.mask.shape:
            raise InvalidInputError(
                f"patch pixels {self.pixels.shape[:2]} and mask {self.mask.shape} differ")

    @property
    def size(self):
        return self.mask.shape


@dataclass(frozen=True, eq=False)
class TransformTrack:
    kind: str
    params: np.ndarray  # (T, n_params)

    @property
    def length(self) -> int:
        return len(self.params)


@dataclass(eq=False)
class TubeletSpec:
    patch: Patch
    trajectory: Trajectory
    track: TransformTrack | tuple = ()
    shape: str = "rectangle"
    jitter: np.ndarray | None = None  # per-frame channel gains (control pairs only)

    @property
    def tracks(self) -> tuple:
        return (self.track,) if isinstance(self.track, TransformTrack) else tuple(self.track)


@dataclass(frozen=True, eq=False)
class TubeletFrame:
    pixels: np.ndarray
    mask: np.ndarray
    center: tuple


@dataclass(eq=False)
class RenderedTubelet:
    frames: list = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.frames)


def crop_patch(clip: Clip, size_min: int, size_max: int, seed: int) -> Patch:
    """Crop a random ``h x w`` patch from the first frame, with ``h`` and ``w``
    drawn independently from ``[size_min, size_max]``."""
    _, H, W, _ = clip.shape
    if size_min < 1 or size_max < size_min:
        raise InvalidConfigError(f"bad patch size range [{size_min}, {size_max}]")
    if size_max > min(H, W):
        raise InvalidConfigError(f"patch size {size_max} exceeds frame {H}x{W}")
    r = seeding.rng(seed)
    h, w = (int(v) for v in r.integers(size_min, size_max + 1, size=2))
    top = int(r.integers(0, H - h + 1))
    left = int(r.integers(0, W - w + 1))
    pixels = clip.pixels[0, top:top + h, left:left + w].astype(np.float64)
    return Patch(pixels, np.ones((h, w)))


def shape_mask(shape: str, h: int, w: int) -> np.ndarray:
    """Fractional coverage of ``shape`` inscribed in an ``h x w`` box,
    estimated on a 4x4 sub-pixel grid."""
    s = _SUPERSAMPLE
    ys = (np.arange(h * s) + 0.5) / s
    xs = (np.arange(w * s) + 0.5) / s
    y, x = np.meshgrid(ys, xs, indexing="ij")
    if shape == "rectangle":
        return np.ones((h, w))
    if shape == "ellipse":
        inside = ((x - w / 2) / (w / 2)) ** 2 + ((y - h / 2) / (h / 2)) ** 2 <= 1.0
    elif shape == "triangle":
        # apex at top center, base along the bottom edge
        inside = np.abs(x - w / 2) <= (w / 2) * (y / h)
    elif shape == "rounded-rectangle":
        rad = 0.25 * min(h, w)
        dx = np.maximum(np.maximum(rad - x, x - (w - rad)), 0.0)
        dy = np.maximum(np.maximum(rad - y, y - (h - rad)), 0.0)
        inside = dx ** 2 + dy ** 2 <= rad ** 2
    else:
        raise InvalidConfigError(f"unknown shape {shape!r}")
    cover = inside.reshape(h, s, w, s).mean(axis=(1, 3))
    if not cover.any():
        cover[h // 2, w // 2] = 1.0
    return cover


def apply_shape(patch: Patch, shape: str) -> Patch:
    return Patch(patch.pixels, shape_mask(shape, *patch.size))


def _check_bounds(kind, bounds):
    lo, hi = bounds
    if not lo <= hi:
        raise InvalidConfigError(f"{kind} bounds must satisfy Min <= Max, got {bounds}")
    if kind == "scale" and lo <= 0:
        raise InvalidConfigError(f"scale bounds must be positive, got {bounds}")


def sample_transform_track(kind: str, T: int, K: int, bounds=None, seed: int = 0) -> TransformTrack:
    """Keyframed parameter track: identity at frame 0, uniform draws in
    ``bounds`` at the remaining keyframes, linear interpolation in between."""
    if kind not in TRANSFORM_KINDS:
        raise InvalidConfigError(f"unknown transform kind {kind!r}")
    identity = np.array(IDENTITY_PARAMS[kind], dtype=np.float64)
    if kind == "none":
        return TransformTrack(kind, np.zeros((T, 0)))
    bounds = DEFAULT_BOUNDS[kind] if bounds is None else tuple(bounds)
    _check_bounds(kind, bounds)
    keyframes = sample_keyframes(T, K, seeding.split(seed, "keyframes"))
    r = seeding.rng(seeding.split(seed, "values"))
    values = r.uniform(bounds[0], bounds[1], (len(keyframes), len(identity)))
    values[0] = identity
    return TransformTrack(kind, interpolate_keyframes(keyframes, values, T))


def identity_track(kind: str, T: int) -> TransformTrack:
    return TransformTrack(kind, np.tile(np.array(IDENTITY_PARAMS[kind], dtype=np.float64), (T, 1)))


def affine_matrix(kind: str, theta) -> np.ndarray:
    """2x2 linear part of the transform for one parameter vector."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if kind == "none":
        return np.eye(2)
    if kind == "scale":
        return np.diag(theta[:2])
    if kind == "rotation":
        a = math.radians(theta[0])
        c, s = math.cos(a), math.sin(a)
        return np.array([[c, -s], [s, c]])
    if kind == "shear":
        return np.array([[1.0, theta[0]], [theta[1], 1.0]])
    raise InvalidConfigError(f"unknown transform kind {kind!r}")


def _bilinear_zero(img: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample ``img`` (h, w, c) at fractional index coordinates; zero outside."""
    h, w = img.shape[:2]
    padded = np.zeros((h + 2, w + 2) + img.shape[2:])
    padded[1:-1, 1:-1] = img
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    # shift by one for the zero border; anything further out lands on the border
    xa = np.minimum(np.maximum(x0.astype(np.int64) + 1, 0), w + 1)
    xb = np.minimum(np.maximum(x0.astype(np.int64) + 2, 0), w + 1)
    ya = np.minimum(np.maximum(y0.astype(np.int64) + 1, 0), h + 1)
    yb = np.minimum(np.maximum(y0.astype(np.int64) + 2, 0), h + 1)
    top = padded[ya, xa] * (1 - fx) + padded[ya, xb] * fx
    bottom = padded[yb, xa] * (1 - fx) + padded[yb, xb] * fx
    return top * (1 - fy) + bottom * fy


def warp_matrix(patch: Patch, A: np.ndarray) -> Patch:
    """Apply the linear map ``A`` about the patch center onto a canvas that
    holds the whole transformed patch."""
    A = np.asarray(A, dtype=np.float64)
    if np.array_equal(A, np.eye(2)):
        return Patch(patch.pixels.copy(), patch.mask.copy())
    if abs(np.linalg.det(A)) < MIN_ABS_DET:
        raise DegenerateTransformError(f"non-invertible transform, det={np.linalg.det(A):.3g}")
    h, w = patch.size
    corners = np.array([[-w, -h], [w, -h], [-w, h], [w, h]], dtype=np.float64).T / 2
    moved = A @ corners
    ext = moved.max(axis=1) - moved.min(axis=1)
    cw = max(1, math.ceil(ext[0] - 1e-9))
    ch = max(1, math.ceil(ext[1] - 1e-9))
    inv = np.round(np.linalg.inv(A), 12)
    v, u = np.meshgrid(np.arange(ch) + 0.5 - ch / 2, np.arange(cw) + 0.5 - cw / 2, indexing="ij")
    sx = inv[0, 0] * u + inv[0, 1] * v + w / 2 - 0.5
    sy = inv[1, 0] * u + inv[1, 1] * v + h / 2 - 0.5
    stacked = np.concatenate([patch.mask[..., None], patch.pixels * patch.mask[..., None]], axis=-1)
    sampled = _bilinear_zero(stacked, sx, sy)
    mask, premult = sampled[..., 0], sampled[..., 1:]
    mask = np.where(mask < 1e-9, 0.0, np.minimum(mask, 1.0))
    safe = np.where(mask > 0, mask, 1.0)
    pixels = np.where(mask[..., None] > 0, premult / safe[..., None], 0.0)
    return Patch(np.clip(pixels, 0.0, 255.0), mask)


def warp(patch: Patch, kind: str, theta) -> Patch:
    return warp_matrix(patch, affine_matrix(kind, theta))


def _frame_matrix(tracks, i):
    A = np.eye(2)
    for track in tracks:
        A = affine_matrix(track.kind, track.params[i]) @ A
    return A


def build_tubelet(patch: Patch, trajectory: Trajectory, track=()) -> RenderedTubelet:
    """Render ``patch`` at every frame of ``trajectory`` under ``track``.

    ``track`` may be one :class:`TransformTrack` or a sequence of them, applied
    in order.  Frame 0 always carries the untransformed patch.
    """
    tracks = (track,) if isinstance(track, TransformTrack) else tuple(track)
    T = trajectory.length
    for t in tracks:
        if t.length != T:
            raise InvalidInputError(f"trajectory has {T} frames but {t.kind} track has {t.length}")
    frames = []
    for i in range(T):
        center = (float(trajectory.centers[i, 0]), float(trajectory.centers[i, 1]))
        if i == 0:
            warped = Patch(patch.pixels.copy(), patch.mask.copy())
        else:
            try:
                warped = warp_matrix(patch, _frame_matrix(tracks, i))
            except DegenerateTransformError as exc:
                raise DegenerateTransformError(str(exc), frame=i) from exc
        frames.append(TubeletFrame(warped.pixels, warped.mask, center))
    return RenderedTubelet(frames)


def render(spec: TubeletSpec) -> RenderedTubelet:
    return build_tubelet(spec.patch, spec.trajectory, spec.tracks)
