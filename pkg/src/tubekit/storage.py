"""On-disk formats.

TBC1 clip container (little-endian)::

    offset  size  field
    0       4     magic b"TBC1"
    4       2     version (uint16, currently 1)
    6       4     T (uint32)
    10      4     H (uint32)
    14      4     W (uint32)
    18      4     C (uint32, always 3)
    22      T*H*W*C  uint8 payload, frame-major, row-major, channels interleaved

TBCK checkpoint (little-endian)::

    0       4     magic b"TBCK"
    4       2     version (uint16, currently 1)
    6       40    ten uint32: T, H, W, pool_t, pool_h, pool_w,
                  hidden1, hidden2, head_hidden, embed_dim
    46      ...   float64 parameters W1 b1 W2 b2 W3 b3 W4 b4, each row-major

Manifests are JSON Lines, one object per record.  Training history is CSV
with header ``epoch,mean_loss,lr``.  Plots are binary PPM (P6).
"""
from __future__ import annotations

import csv
import io
import json
import re
import struct
from pathlib import Path

import numpy as np

from .clip import Clip
from .errors import BadMagicError, FormatError, TruncatedPayloadError, VersionMismatchError

CLIP_MAGIC = b"TBC1"
CKPT_MAGIC = b"TBCK"
CLIP_VERSION = 1
CKPT_VERSION = 1
_CLIP_HEADER = struct.Struct("<4sHIIII")
_CKPT_HEADER = struct.Struct("<4sH10I")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def _write_bytes(path, data: bytes):
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def clip_to_bytes(clip: Clip) -> bytes:
    T, H, W, C = clip.shape
    header = _CLIP_HEADER.pack(CLIP_MAGIC, CLIP_VERSION, T, H, W, C)
    return header + np.ascontiguousarray(clip.pixels).tobytes()


def clip_from_bytes(data: bytes, source="<bytes>") -> Clip:
    if len(data) < 4 or data[:4] != CLIP_MAGIC:
        raise BadMagicError(f"{source}: not a TBC1 clip (magic {data[:4]!r})")
    if len(data) < _CLIP_HEADER.size:
        raise TruncatedPayloadError(f"{source}: header truncated ({len(data)} bytes)")
    _, version, T, H, W, C = _CLIP_HEADER.unpack_from(data)
    if version != CLIP_VERSION:
        raise VersionMismatchError(f"{source}: clip format version {version}, expected {CLIP_VERSION}")
    if C != 3:
        raise FormatError(f"{source}: expected 3 channels, header says {C}")
    need = T * H * W * C
    have = len(data) - _CLIP_HEADER.size
    if have != need:
        raise TruncatedPayloadError(f"{source}: payload has {have} bytes, header declares {need}")
    px = np.frombuffer(data, dtype=np.uint8, offset=_CLIP_HEADER.size).reshape(T, H, W, C).copy()
    return Clip(px)


def write_clip(clip: Clip, path):
    _write_bytes(path, clip_to_bytes(clip))


def read_clip(path) -> Clip:
    return clip_from_bytes(_read_bytes(path), source=path)


# checkpoints

def checkpoint_to_bytes(params) -> bytes:
    from .contrastive import PARAM_ORDER
    a = params.arch
    header = _CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, *a.clip_shape, *a.pool, *a.hidden,
                               a.head_hidden, a.embed_dim)
    body = b"".join(np.ascontiguousarray(params.tensors[k], dtype="<f8").tobytes() for k in PARAM_ORDER)
    return header + body


def checkpoint_from_bytes(data: bytes, source="<bytes>"):
    from .contrastive import EncoderArch, EncoderParams, PARAM_ORDER
    if len(data) < 4 or data[:4] != CKPT_MAGIC:
        raise BadMagicError(f"{source}: not a TBCK checkpoint (magic {data[:4]!r})")
    if len(data) < _CKPT_HEADER.size:
        raise TruncatedPayloadError(f"{source}: header truncated ({len(data)} bytes)")
    _, version, *dims = _CKPT_HEADER.unpack_from(data)
    if version != CKPT_VERSION:
        raise VersionMismatchError(f"{source}: checkpoint version {version}, expected {CKPT_VERSION}")
    try:
        arch = EncoderArch(tuple(dims[0:3]), tuple(dims[3:6]), tuple(dims[6:8]), dims[8], dims[9])
    except ValueError as exc:
        raise FormatError(f"{source}: inconsistent architecture header: {exc}") from exc
    shapes = arch.layer_shapes
    need = 8 * sum(int(np.prod(shapes[k])) for k in PARAM_ORDER)
    have = len(data) - _CKPT_HEADER.size
    if have != need:
        raise TruncatedPayloadError(f"{source}: parameter block has {have} bytes, architecture needs {need}")
    flat = np.frombuffer(data, dtype="<f8", offset=_CKPT_HEADER.size).astype(np.float64)
    tensors, pos = {}, 0
    for k in PARAM_ORDER:
        n = int(np.prod(shapes[k]))
        tensors[k] = flat[pos:pos + n].reshape(shapes[k]).copy()
        pos += n
    return EncoderParams(arch, tensors)


def write_checkpoint(params, path):
    _write_bytes(path, checkpoint_to_bytes(params))


def read_checkpoint(path):
    return checkpoint_from_bytes(_read_bytes(path), source=path)


# manifests

def write_manifest(records, path):
    ids = [r["id"] for r in records]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate manifest ids")
    text = "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records)
    _write_bytes(path, text.encode("utf-8"))


def read_manifest(path) -> list[dict]:
    """Records with ``path`` resolved against the manifest's directory
    (kept as the original string under ``relpath``)."""
    path = Path(path)
    base = path.parent
    records, seen = [], set()
    for lineno, line in enumerate(_read_bytes(path).decode("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: {exc.msg}") from exc
        if not isinstance(rec, dict) or "id" not in rec:
            raise FormatError(f"{path}:{lineno}: record without an id")
        if rec["id"] in seen:
            raise FormatError(f"{path}:{lineno}: duplicate id {rec['id']!r}")
        seen.add(rec["id"])
        if "path" in rec:
            rec["relpath"] = rec["path"]
            rec["path"] = str(base / rec["path"])
        records.append(rec)
    return records


# training history

def history_to_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "mean_loss", "lr"])
    for rec in history:
        w.writerow([rec.epoch, repr(float(rec.mean_loss)), repr(float(rec.lr))])
    return buf.getvalue()


def write_history(history, path):
    _write_bytes(path, history_to_csv(history).encode("utf-8"))


def read_history(path):
    from .contrastive import EpochRecord
    rows = list(csv.reader(io.StringIO(_read_bytes(path).decode("utf-8"))))
    if not rows or rows[0] != ["epoch", "mean_loss", "lr"]:
        raise FormatError(f"{path}: missing history header")
    return [EpochRecord(int(e), float(l), float(r)) for e, l, r in rows[1:]]


# plots

PALETTE = [
    (228, 26, 28), (55, 126, 184), (77, 175, 74), (152, 78, 163), (255, 127, 0),
    (166, 86, 40), (247, 129, 191), (0, 139, 139), (60, 60, 60), (200, 180, 0),
]


_PPM_HEADER = re.compile(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s")


def write_ppm(image: np.ndarray, path):
    h, w = image.shape[:2]
    _write_bytes(path, f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    data = _read_bytes(path)
    if data[:2] != b"P6":
        raise BadMagicError(f"{path}: not a binary PPM")
    m = _PPM_HEADER.match(data)
    if m is None:
        raise TruncatedPayloadError(f"{path}: incomplete PPM header")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    body = data[m.end():]
    if len(body) != w * h * 3:
        raise TruncatedPayloadError(f"{path}: pixel block has {len(body)} bytes, expected {w * h * 3}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()


def _draw_line(img, p0, p1, color):
    h, w = img.shape[:2]
    n = int(max(abs(p1[0] - p0[0]), abs(p1[1] - p0[1]))) * 2 + 1
    for t in np.linspace(0.0, 1.0, n):
        x = int(min(w - 1, max(0, p0[0] + t * (p1[0] - p0[0]))))
        y = int(min(h - 1, max(0, p0[1] + t * (p1[1] - p0[1]))))
        img[y, x] = color


def _marker(img, p, color, filled):
    h, w = img.shape[:2]
    cx = int(min(w - 1, max(0, p[0])))
    cy = int(min(h - 1, max(0, p[1])))
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if filled or dx == 0 or dy == 0:
                y, x = cy + dy, cx + dx
                if 0 <= y < h and 0 <= x < w:
                    img[y, x] = color


def trajectory_image(trajectories, frame, scale: int = 1) -> np.ndarray:
    W, H = frame
    img = np.full((int(H * scale), int(W * scale), 3), 255, dtype=np.uint8)
    for i, traj in enumerate(trajectories):
        color = PALETTE[i % len(PALETTE)]
        pts = np.asarray(traj.centers) * scale
        for a, b in zip(pts[:-1], pts[1:]):
            _draw_line(img, a, b, color)
        _marker(img, pts[0], color, filled=True)   # start: filled square
        _marker(img, pts[-1], color, filled=False)  # end: plus sign
        if len(pts) == 1 or np.allclose(pts, pts[0]):
            _marker(img, pts[0], color, filled=True)
    return img


def render_trajectory_plot(trajectories, frame, path, scale: int = 1):
    """Draw each trajectory as a colored polyline on a white ``W x H`` canvas
    (times ``scale``), with start and end markers, and save it as PPM."""
    if len(trajectories) == 0:
        raise ValueError("nothing to plot")
    write_ppm(trajectory_image(trajectories, frame, scale), path)


def parse_config(path):
    from .config import parse_config as _parse
    return _parse(path)


# pair datasets
#
#   <dir>/pairs.jsonl             one record per pair: id, path, mode, seed, m
#   <dir>/<id>/a.tbc, b.tbc       composited clips
#   <dir>/<id>/base_a.tbc, ...    augmented sources before overlay
#   <dir>/<id>/union_a.npy, ...   float32 coverage grids
#   <dir>/<id>/specs.json         per tubelet: shape, patch size, centers, tracks

def spec_to_dict(spec) -> dict:
    return {
        "shape": spec.shape,
        "patch_size": list(spec.patch.pixels.shape[:2]),
        "centers": np.asarray(spec.trajectory.centers).tolist(),
        "tracks": [{"kind": t.kind, "params": np.asarray(t.params).tolist()} for t in spec.tracks],
        "jitter": None if spec.jitter is None else np.asarray(spec.jitter).tolist(),
    }


def _save_npy(path, arr):
    buf = io.BytesIO()
    np.save(buf, arr, allow_pickle=False)
    _write_bytes(path, buf.getvalue())


def _load_npy(path):
    try:
        return np.load(path, allow_pickle=False)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_pair_dataset(samples, out_dir) -> list[dict]:
    """Write pair samples under ``out_dir`` with a ``pairs.jsonl`` manifest."""
    out_dir = Path(out_dir)
    records = []
    for i, s in enumerate(samples):
        pid = f"pair-{i:05d}"
        d = out_dir / pid
        d.mkdir(parents=True, exist_ok=True)
        write_clip(s.clip_a, d / "a.tbc")
        write_clip(s.clip_b, d / "b.tbc")
        if s.base_a is not None:
            write_clip(s.base_a, d / "base_a.tbc")
            write_clip(s.base_b, d / "base_b.tbc")
        _save_npy(d / "union_a.npy", s.union_a.astype(np.float32))
        _save_npy(d / "union_b.npy", s.union_b.astype(np.float32))
        specs = json.dumps([spec_to_dict(sp) for sp in s.specs], sort_keys=True)
        _write_bytes(d / "specs.json", specs.encode("utf-8"))
        records.append({"id": pid, "path": pid, "mode": s.mode, "seed": int(s.seed), "m": len(s.specs)})
    write_manifest(records, out_dir / "pairs.jsonl")
    return records


def read_pair(pair_dir, seed=0, mode="tubelet"):
    """Load one pair directory; specs come back as plain dicts (see
    :func:`spec_to_dict`) since patch pixels are not stored."""
    from .compositor import PairSample
    d = Path(pair_dir)
    base_a = read_clip(d / "base_a.tbc") if (d / "base_a.tbc").exists() else None
    base_b = read_clip(d / "base_b.tbc") if (d / "base_b.tbc").exists() else None
    try:
        specs = json.loads(_read_bytes(d / "specs.json").decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{d / 'specs.json'}: {exc.msg}") from exc
    return PairSample(read_clip(d / "a.tbc"), read_clip(d / "b.tbc"), specs,
                      _load_npy(d / "union_a.npy"), _load_npy(d / "union_b.npy"),
                      seed, base_a, base_b, mode)


def read_pair_dataset(path) -> list:
    """Load a directory (or its ``pairs.jsonl``) written by :func:`write_pair_dataset`."""
    path = Path(path)
    manifest = path / "pairs.jsonl" if path.is_dir() else path
    return [read_pair(rec["path"], rec["seed"], rec.get("mode", "tubelet")) for rec in read_manifest(manifest)]


def coverage_image(union: np.ndarray, scale: int = 1) -> np.ndarray:
    """Frames of a ``(T, H, W)`` coverage grid side by side, white = covered."""
    T, H, W = union.shape
    strip = np.concatenate([np.pad(u, ((0, 0), (0, 1)), constant_values=0.5) for u in union], axis=1)
    g = np.floor(np.clip(strip, 0, 1) * 255 + 0.5).astype(np.uint8)
    g = np.repeat(np.repeat(g, scale, axis=0), scale, axis=1)
    return np.repeat(g[..., None], 3, axis=-1)
