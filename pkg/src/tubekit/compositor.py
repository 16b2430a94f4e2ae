"""Clip augmentation, tubelet overlay and positive-pair construction.

A positive pair is two clips from different source videos that carry the
same rendered tubelets.  Augmentation happens on the source clips *before*
the tubelets are pasted, so the pasted content is pixel-identical on both
sides of a pair.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import seeding
from .clip import Clip
from .errors import InvalidConfigError, InvalidInputError
from .trajectory import MotionConfig, Trajectory, generate
from .tubelet import (
    DEFAULT_BOUNDS,
    SHAPES,
    RenderedTubelet,
    TransformTrack,
    TubeletFrame,
    TubeletSpec,
    apply_shape,
    build_tubelet,
    crop_patch,
    sample_transform_track,
    warp,
)


@dataclass(frozen=True)
class AugmentConfig:
    crop_scale_range: tuple = (0.5, 1.0)  # fraction of frame area kept by the crop
    output_size: tuple | None = None      # (H, W); None keeps the source size
    flip_probability: float = 0.5
    jitter: tuple = (0.6, 1.4)            # per-channel multiplicative range

    def __post_init__(self):
        lo, hi = self.crop_scale_range
        if not 0 < lo <= hi <= 1:
            raise InvalidConfigError(f"crop_scale_range must satisfy 0 < min <= max <= 1, got {self.crop_scale_range}")
        if not 0 <= self.flip_probability <= 1:
            raise InvalidConfigError(f"flip_probability must be in [0, 1], got {self.flip_probability}")
        if not 0 < self.jitter[0] <= self.jitter[1]:
            raise InvalidConfigError(f"jitter range must be positive and ordered, got {self.jitter}")
        if self.output_size is not None and min(self.output_size) < 1:
            raise InvalidConfigError(f"output_size must be positive, got {self.output_size}")


IDENTITY_AUGMENT = AugmentConfig(crop_scale_range=(1.0, 1.0), flip_probability=0.0, jitter=(1.0, 1.0))


@dataclass(frozen=True)
class PairConfig:
    """Everything :func:`make_pair` needs, in pixels of the actual clip."""

    m: int = 2
    motion: str = "nonlinear"
    K: int = 3
    delta: tuple = (40.0, 80.0)
    n: int = 48
    sigma: float = 8.0
    transforms: tuple = ("rotation",)
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    patch_size: tuple = (16, 64)
    shapes: tuple = SHAPES
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.m < 0:
            raise InvalidConfigError(f"m must be >= 0, got {self.m}")
        for s in self.shapes:
            if s not in SHAPES:
                raise InvalidConfigError(f"unknown shape {s!r}")
        if not self.shapes:
            raise InvalidConfigError("shapes must not be empty")

    def motion_config(self, T, H, W) -> MotionConfig:
        return MotionConfig(self.motion, T, W, H, K=self.K, delta_min=self.delta[0],
                            delta_max=self.delta[1], n=self.n, sigma=self.sigma)


@dataclass(eq=False)
class PairSample:
    clip_a: Clip
    clip_b: Clip
    specs: list
    union_a: np.ndarray  # (T, H, W) float32 coverage
    union_b: np.ndarray
    seed: int
    base_a: Clip | None = None  # augmented sources before overlay
    base_b: Clip | None = None
    mode: str = "tubelet"


def _round_u8(x):
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def _resize_bilinear(frames: np.ndarray, top, left, ch, cw, oh, ow) -> np.ndarray:
    """Resample the crop window of ``frames`` (T, H, W, C) to (T, oh, ow, C)."""
    sy = np.clip((np.arange(oh) + 0.5) * (ch / oh) - 0.5, 0, ch - 1) + top
    sx = np.clip((np.arange(ow) + 0.5) * (cw / ow) - 0.5, 0, cw - 1) + left
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, top + ch - 1)
    x1 = np.minimum(x0 + 1, left + cw - 1)
    fy = (sy - y0)[None, :, None, None]
    fx = (sx - x0)[None, None, :, None]
    f = frames.astype(np.float64)
    rows0 = f[:, y0]
    rows1 = f[:, y1]
    top_row = rows0[:, :, x0] * (1 - fx) + rows0[:, :, x1] * fx
    bot_row = rows1[:, :, x0] * (1 - fx) + rows1[:, :, x1] * fx
    return top_row * (1 - fy) + bot_row * fy


def sample_augment(cfg: AugmentConfig, H: int, W: int, seed: int) -> dict:
    """Draw one crop window, flip decision and jitter triple for a clip."""
    oh, ow = cfg.output_size or (H, W)
    if oh > H or ow > W:
        raise InvalidConfigError(f"output size {oh}x{ow} exceeds source {H}x{W}")
    r = seeding.rng(seed)
    scale = math.sqrt(r.uniform(*cfg.crop_scale_range))
    ch = min(H, max(1, round(H * scale)))
    cw = min(W, max(1, round(W * scale)))
    top = int(r.integers(0, H - ch + 1))
    left = int(r.integers(0, W - cw + 1))
    flip = bool(r.uniform() < cfg.flip_probability)
    gains = r.uniform(cfg.jitter[0], cfg.jitter[1], 3)
    return dict(top=top, left=left, height=ch, width=cw, out=(oh, ow), flip=flip, gains=gains)


def apply_augment(clip: Clip, params: dict) -> Clip:
    oh, ow = params["out"]
    f = _resize_bilinear(clip.pixels, params["top"], params["left"],
                         params["height"], params["width"], oh, ow)
    if params["flip"]:
        f = f[:, :, ::-1]
    f = f * np.asarray(params["gains"])[None, None, None, :]
    return Clip(_round_u8(f), clip.frame_rate)


def spatial_augment(clip: Clip, cfg: AugmentConfig, seed: int) -> Clip:
    """Random crop + resize, horizontal flip and per-channel gain, sampled once
    per clip and applied to every frame."""
    return apply_augment(clip, sample_augment(cfg, clip.H, clip.W, seed))


def hflip(clip: Clip) -> Clip:
    return Clip(np.ascontiguousarray(clip.pixels[:, :, ::-1]), clip.frame_rate)


def _paste(frame: np.ndarray, cover: np.ndarray, pixels, mask, center):
    """Alpha-composite one warped patch onto ``frame`` (float, in place)."""
    H, W = frame.shape[:2]
    ch, cw = mask.shape
    top = math.floor(center[1] - ch / 2 + 0.5)
    left = math.floor(center[0] - cw / 2 + 0.5)
    y0, y1 = max(top, 0), min(top + ch, H)
    x0, x1 = max(left, 0), min(left + cw, W)
    if y0 >= y1 or x0 >= x1:
        return
    m = mask[y0 - top:y1 - top, x0 - left:x1 - left]
    p = pixels[y0 - top:y1 - top, x0 - left:x1 - left]
    region = frame[y0:y1, x0:x1]
    frame[y0:y1, x0:x1] = _round_u8(m[..., None] * p + (1 - m[..., None]) * region)
    c = cover[y0:y1, x0:x1]
    cover[y0:y1, x0:x1] = 1 - (1 - c) * (1 - m)


def overlay(clip: Clip, tubelet: RenderedTubelet, cover: np.ndarray | None = None):
    """Paste ``tubelet`` onto ``clip``; return the new clip and its coverage.

    ``cover`` is an existing (T, H, W) coverage grid to accumulate into, used
    when several tubelets are pasted in sequence.
    """
    if tubelet.length != clip.T:
        raise InvalidInputError(f"clip has {clip.T} frames but tubelet has {tubelet.length}")
    out = clip.pixels.copy()
    cover = np.zeros(clip.shape[:3], dtype=np.float32) if cover is None else cover.copy()
    for t, fr in enumerate(tubelet.frames):
        _paste(out[t], cover[t], fr.pixels, fr.mask, fr.center)
    return Clip(out, clip.frame_rate), cover


def overlay_all(clip: Clip, tubelets: Sequence[RenderedTubelet]):
    cover = np.zeros(clip.shape[:3], dtype=np.float32)
    for tub in tubelets:
        clip, cover = overlay(clip, tub, cover)
    return clip, cover


def _patch_with_shape(clip, cfg, seed):
    lo, hi = cfg.patch_size
    patch = crop_patch(clip, lo, hi, seeding.split(seed, "patch"))
    shape = cfg.shapes[int(seeding.rng(seeding.split(seed, "shape")).integers(len(cfg.shapes)))]
    return apply_shape(patch, shape), shape


def _check_pair_inputs(v1, v2):
    if v1.shape != v2.shape:
        raise InvalidInputError(f"pair clips differ in shape: {v1.shape} vs {v2.shape}")


def _assemble(base_a, base_b, specs, rendered, seed, mode):
    clip_a, union_a = overlay_all(base_a, rendered)
    clip_b, union_b = overlay_all(base_b, rendered)
    return PairSample(clip_a, clip_b, specs, union_a, union_b, seed, base_a, base_b, mode)


def make_pair(v1: Clip, v2: Clip, cfg: PairConfig, seed: int, mode: str = "tubelet") -> PairSample:
    """Augment both clips independently, then paste the same ``cfg.m`` tubelets
    (patches cropped from augmented ``v1``) onto each, in index order."""
    _check_pair_inputs(v1, v2)
    a = spatial_augment(v1, cfg.augment, seeding.split(seed, "augment-a"))
    b = spatial_augment(v2, cfg.augment, seeding.split(seed, "augment-b"))
    T, H, W = a.shape[:3]
    motion = cfg.motion_config(T, H, W)
    specs, rendered = [], []
    for i in range(cfg.m):
        ts = seeding.split(seed, f"tubelet-{i}")
        patch, shape = _patch_with_shape(a, cfg, ts)
        traj = generate(motion, seeding.split(ts, "trajectory"))
        tracks = tuple(
            sample_transform_track(kind, T, cfg.K, cfg.bounds.get(kind), seeding.split(ts, f"track-{kind}"))
            for kind in cfg.transforms)
        spec = TubeletSpec(patch, traj, tracks[0] if len(tracks) == 1 else tracks, shape)
        specs.append(spec)
        rendered.append(build_tubelet(patch, traj, tracks))
    return _assemble(a, b, specs, rendered, seed, mode)


def make_scaled_crop_control(v1: Clip, v2: Clip, cfg: PairConfig, seed: int) -> PairSample:
    """Control pairs: each frame re-draws the patch position, its scale and a
    per-channel gain independently, so there is no smooth motion to learn."""
    _check_pair_inputs(v1, v2)
    a = spatial_augment(v1, cfg.augment, seeding.split(seed, "augment-a"))
    b = spatial_augment(v2, cfg.augment, seeding.split(seed, "augment-b"))
    T, H, W = a.shape[:3]
    lo, hi = cfg.bounds.get("scale", DEFAULT_BOUNDS["scale"])
    specs, rendered = [], []
    for i in range(cfg.m):
        ts = seeding.split(seed, f"tubelet-{i}")
        patch, shape = _patch_with_shape(a, cfg, ts)
        r = seeding.rng(seeding.split(ts, "control"))
        centers = r.uniform(0, 1, (T, 2)) * np.array([W, H])
        scales = r.uniform(lo, hi, (T, 2))
        gains = r.uniform(cfg.augment.jitter[0], cfg.augment.jitter[1], (T, 3))
        frames = []
        for t in range(T):
            w = warp(patch, "scale", scales[t])
            pix = np.clip(w.pixels * gains[t], 0, 255)
            frames.append(TubeletFrame(pix, w.mask, (float(centers[t, 0]), float(centers[t, 1]))))
        spec = TubeletSpec(patch, Trajectory(centers), TransformTrack("scale", scales), shape, gains)
        specs.append(spec)
        rendered.append(RenderedTubelet(frames))
    return _assemble(a, b, specs, rendered, seed, "scaled-crop-control")


def check_shared_tubelets(sample: PairSample) -> list[str]:
    """Return a list of violated pair invariants (empty when the pair is valid)."""
    problems = []
    a, b = sample.clip_a.pixels, sample.clip_b.pixels
    if a.shape != b.shape:
        return [f"clip shapes differ: {a.shape} vs {b.shape}"]
    full = sample.union_a == 1
    if not np.array_equal(sample.union_a, sample.union_b):
        problems.append("union masks differ between the two clips")
    diff = np.any(a != b, axis=-1) & full
    if diff.any():
        problems.append(f"{int(diff.sum())} fully covered pixels differ between clips")
    for name, clip, base, union in (("a", a, sample.base_a, sample.union_a),
                                    ("b", b, sample.base_b, sample.union_b)):
        if base is None:
            continue
        free = union == 0
        bad = np.any(clip != base.pixels, axis=-1) & free
        if bad.any():
            problems.append(f"clip {name}: {int(bad.sum())} uncovered pixels differ from the augmented source")
    return problems
