"""Procedural background videos.

Stand-ins for a real pretraining corpus.  Each kind either carries no motion
or only globally coherent motion, so anything a model learns to match across
a positive pair has to come from the pasted tubelets.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from .clip import Clip
from .errors import InvalidConfigError

logger = logging.getLogger(__name__)

CLIP_KINDS = ("uniform-noise", "moving-gradient", "drifting-blobs", "static-texture")


@dataclass(frozen=True)
class CorpusSpec:
    count: int = 256
    clip_shape: tuple = (16, 32, 32)  # T, H, W
    kinds: dict = field(default_factory=lambda: {k: 1.0 for k in CLIP_KINDS})
    seed: int = 0

    def __post_init__(self):
        if self.count < 2:
            raise InvalidConfigError(f"corpus needs at least 2 videos, got {self.count}")
        if len(self.clip_shape) != 3 or min(self.clip_shape) < 1:
            raise InvalidConfigError(f"clip_shape must be (T, H, W) with positive entries, got {self.clip_shape}")
        if not self.kinds:
            raise InvalidConfigError("kinds must not be empty")
        for k, w in self.kinds.items():
            if k not in CLIP_KINDS:
                raise InvalidConfigError(f"unknown clip kind {k!r}")
            if not w > 0:
                raise InvalidConfigError(f"weight for {k!r} must be positive, got {w}")


def _gradient(shape, r):
    T, H, W = shape
    # integer wave numbers and velocities keep the pattern exactly periodic,
    # so frame t+1 is a cyclic shift of frame t
    kx, ky = r.integers(1, 4, size=2) * r.choice([-1, 1], size=2)
    vx, vy = 0, 0
    while vx == 0 and vy == 0:
        vx, vy = (int(v) for v in r.integers(-2, 3, size=2))
    phase = r.uniform(0, 2 * np.pi, 3)
    t = np.arange(T)[:, None, None, None]
    y = np.arange(H)[None, :, None, None]
    x = np.arange(W)[None, None, :, None]
    arg = 2 * np.pi * (kx * (x - vx * t) / W + ky * (y - vy * t) / H) + phase
    return 127.5 + 127.0 * np.sin(arg), (vx, vy)


def _blobs(shape, r):
    T, H, W = shape
    n = int(r.integers(3, 7))
    bg = r.uniform(20, 110, 3)
    img = np.tile(bg, (T, H, W, 1))
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    for _ in range(n):
        color = r.uniform(0, 255, 3)
        sigma = r.uniform(0.08, 0.2) * min(H, W)
        p0 = r.uniform(0, 1, 2) * (W, H)
        vel = r.uniform(-1.0, 1.0, 2)
        for t in range(T):
            cx, cy = p0 + vel * t
            g = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma ** 2))
            img[t] = img[t] * (1 - g[..., None]) + color * g[..., None]
    return img


def gen_clip(kind: str, clip_shape, seed: int) -> Clip:
    T, H, W = clip_shape
    r = seeding.rng(seed)
    if kind == "uniform-noise":
        px = r.integers(0, 256, (T, H, W, 3), dtype=np.uint8)
    elif kind == "static-texture":
        frame = r.integers(0, 256, (1, H, W, 3), dtype=np.uint8)
        px = np.repeat(frame, T, axis=0)
    elif kind == "moving-gradient":
        px = np.floor(_gradient(clip_shape, r)[0] + 0.5).astype(np.uint8)
    elif kind == "drifting-blobs":
        px = np.clip(np.floor(_blobs(clip_shape, r) + 0.5), 0, 255).astype(np.uint8)
    else:
        raise InvalidConfigError(f"unknown clip kind {kind!r}")
    return Clip(px)


def gradient_velocity(clip_shape, seed: int):
    """The per-frame (vx, vy) shift used by ``gen_clip("moving-gradient", ...)``."""
    return _gradient(clip_shape, seeding.rng(seed))[1]


def plan_corpus(spec: CorpusSpec) -> list[dict]:
    """Kind and seed for every video, without generating pixels."""
    kinds = list(spec.kinds)
    w = np.array([spec.kinds[k] for k in kinds], dtype=np.float64)
    w /= w.sum()
    entries = []
    for i in range(spec.count):
        r = seeding.rng(seeding.split(spec.seed, f"kind-{i}"))
        kind = kinds[int(r.choice(len(kinds), p=w))]
        entries.append(dict(id=f"clip-{i:05d}", kind=kind,
                            seed=seeding.split(spec.seed, f"clip-{i}"),
                            shape=list(spec.clip_shape)))
    return entries


def generate_corpus(spec: CorpusSpec) -> list[Clip]:
    return [gen_clip(e["kind"], spec.clip_shape, e["seed"]) for e in plan_corpus(spec)]


def _write_entry(args):
    from .storage import write_clip
    entry, shape, path = args
    write_clip(gen_clip(entry["kind"], shape, entry["seed"]), path)


def build_corpus(spec: CorpusSpec, out_dir, jobs: int = 1) -> list[dict]:
    """Write every clip to ``out_dir`` plus ``manifest.jsonl``; return the records."""
    from .storage import write_manifest

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = plan_corpus(spec)
    tasks = []
    for e in entries:
        e["path"] = f"{e['id']}.tbc"
        tasks.append((e, spec.clip_shape, out_dir / e["path"]))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            list(pool.map(_write_entry, tasks))
    else:
        for t in tasks:
            _write_entry(t)
    write_manifest(entries, out_dir / "manifest.jsonl")
    logger.info("wrote %d clips to %s", len(entries), out_dir)
    return entries
