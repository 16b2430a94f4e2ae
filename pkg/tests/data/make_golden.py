"""Regenerate the golden files in this directory.

Written against the byte layouts directly (struct + numpy only) so the
format tests do not compare the library with itself.
"""
import json
import struct
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent


def golden_clip():
    T, H, W, C = 2, 3, 4, 3
    px = (np.arange(T * H * W * C, dtype=np.int64) * 37 % 256).astype(np.uint8).reshape(T, H, W, C)
    header = b"TBC1" + struct.pack("<H", 1) + struct.pack("<4I", T, H, W, C)
    (HERE / "golden.tbc").write_bytes(header + px.tobytes())
    np.save(HERE / "golden_pixels.npy", px)


def golden_checkpoint():
    dims = dict(T=2, H=4, W=4, pt=1, ph=2, pw=2, h1=3, h2=2, hh=2, d=2)
    din = (dims["T"] // dims["pt"]) * (dims["H"] // dims["ph"]) * (dims["W"] // dims["pw"]) * 6
    shapes = [(din, 3), (3,), (3, 2), (2,), (2, 2), (2,), (2, 2), (2,)]
    rng = np.random.default_rng(20240101)
    tensors = [rng.standard_normal(s) for s in shapes]
    header = b"TBCK" + struct.pack("<H", 1) + struct.pack("<10I", *dims.values())
    body = b"".join(t.astype("<f8").tobytes() for t in tensors)
    (HERE / "golden.tbck").write_bytes(header + body)
    np.savez(HERE / "golden_params.npz", **{n: t for n, t in zip(["W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4"], tensors)})


def golden_manifest():
    recs = [
        {"id": "clip-00000", "kind": "uniform-noise", "path": "golden.tbc", "seed": 11, "shape": [2, 3, 4]},
        {"id": "clip-00001", "kind": "static-texture", "path": "sub/other.tbc", "seed": 12, "shape": [2, 3, 4]},
    ]
    text = "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in recs)
    (HERE / "golden_manifest.jsonl").write_text(text)


if __name__ == "__main__":
    golden_clip()
    golden_checkpoint()
    golden_manifest()
