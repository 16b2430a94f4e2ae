"""Run configuration: TOML file -> validated, fully defaulted settings.

Spatial magnitudes (keyframe displacement, patch size) are written at the
``reference_size`` frame width of 112 pixels and rescaled to the actual clip
size when pair configs are built, so the same file drives 32-pixel desk runs
and full-size runs.  Sample counts (``n``, ``sigma``, ``K``) are not rescaled.

Example::

    seed = 7

    [motion]
    kind = "nonlinear"
    sigma = 8.0

    [train]
    tau = 0.2
    epochs = 30
"""
from __future__ import annotations

import copy
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .compositor import AugmentConfig, PairConfig
from .contrastive import EncoderArch, TrainConfig
from .errors import ConfigConstraintError, ConfigParseError, InvalidConfigError
from .synthcorpus import CLIP_KINDS, CorpusSpec
from .trajectory import MOTION_KINDS
from .tubelet import SHAPES, TRANSFORM_KINDS

DEFAULTS = {
    "seed": 0,
    "motion": {"kind": "nonlinear", "K": 3, "delta": [40.0, 80.0], "n": 48, "sigma": 8.0},
    "transform": {"kinds": ["rotation"], "scale": [0.5, 1.5], "rotation": [-90.0, 90.0], "shear": [-1.0, 1.0]},
    "pair": {"m": 2, "patch_size": [16, 64], "shapes": list(SHAPES), "reference_size": 112},
    "augment": {"crop_scale": [0.5, 1.0], "flip": 0.5, "jitter": [0.6, 1.4]},
    "train": {
        "tau": 0.2, "lr": 0.01, "momentum": 0.9, "weight_decay": 1e-4, "key_momentum": 0.999,
        "batch_size": 32, "epochs": 30, "queue": 256,
        "pool": [1, 4, 4], "hidden": [256, 256], "head_hidden": 256, "embed_dim": 128,
    },
    "corpus": {"count": 256, "shape": [16, 32, 32], "kinds": {k: 1.0 for k in CLIP_KINDS}},
    "eval": {"probes": 128, "probe_mode": "tubelet"},
}

PAIR_MODES = ("tubelet", "static", "linear", "nonlinear", "nonlinear+rotation", "scaled-crop-control")


def _merge(defaults, given, path=""):
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        kp = f"{path}{key}"
        if key not in defaults:
            raise ConfigConstraintError(kp, "unknown key")
        d = defaults[key]
        if isinstance(d, dict) and key != "kinds":
            if not isinstance(value, dict):
                raise ConfigConstraintError(kp, "expected a table")
            out[key] = _merge(d, value, kp + ".")
        else:
            out[key] = value
    return out


def _num(cfg, path, lo=None, hi=None, lo_open=False, integer=False):
    sec, key = path.split(".") if "." in path else (None, path)
    v = cfg[sec][key] if sec else cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
        raise ConfigConstraintError(path, f"expected {'an integer' if integer else 'a number'}, got {v!r}")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigConstraintError(path, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigConstraintError(path, f"must be <= {hi}, got {v}")
    return v


def _range(cfg, path, positive=False):
    sec, key = path.split(".")
    v = cfg[sec][key]
    if (not isinstance(v, list) or len(v) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
        raise ConfigConstraintError(path, f"expected [min, max], got {v!r}")
    if v[0] > v[1]:
        raise ConfigConstraintError(path, f"min exceeds max in {v}")
    if positive and v[0] <= 0:
        raise ConfigConstraintError(path, f"values must be positive, got {v}")
    return v


def _ints(cfg, path, n):
    sec, key = path.split(".")
    v = cfg[sec][key]
    if not isinstance(v, list) or len(v) != n or not all(isinstance(x, int) and x >= 1 for x in v):
        raise ConfigConstraintError(path, f"expected {n} positive integers, got {v!r}")
    return v


def _choice(value, allowed, path):
    if value not in allowed:
        raise ConfigConstraintError(path, f"must be one of {', '.join(allowed)}; got {value!r}")


def validate(cfg: dict) -> dict:
    _num(cfg, "seed", lo=0, integer=True)
    _choice(cfg["motion"]["kind"], MOTION_KINDS, "motion.kind")
    _num(cfg, "motion.K", lo=2, integer=True)
    _range(cfg, "motion.delta", positive=True)
    _num(cfg, "motion.n", lo=2, integer=True)
    _num(cfg, "motion.sigma", lo=0, lo_open=True)
    if cfg["motion"]["n"] <= cfg["corpus"]["shape"][0]:
        raise ConfigConstraintError("motion.n", "must exceed the clip length")
    kinds = cfg["transform"]["kinds"]
    if not isinstance(kinds, list):
        raise ConfigConstraintError("transform.kinds", "expected a list")
    for k in kinds:
        _choice(k, TRANSFORM_KINDS, "transform.kinds")
    _range(cfg, "transform.scale", positive=True)
    _range(cfg, "transform.rotation")
    _range(cfg, "transform.shear")
    _num(cfg, "pair.m", lo=0, integer=True)
    _range(cfg, "pair.patch_size", positive=True)
    for s in cfg["pair"]["shapes"]:
        _choice(s, SHAPES, "pair.shapes")
    if not cfg["pair"]["shapes"]:
        raise ConfigConstraintError("pair.shapes", "must not be empty")
    _num(cfg, "pair.reference_size", lo=0, lo_open=True)
    cs = _range(cfg, "augment.crop_scale", positive=True)
    if cs[1] > 1:
        raise ConfigConstraintError("augment.crop_scale", f"area fraction cannot exceed 1, got {cs}")
    _num(cfg, "augment.flip", lo=0, hi=1)
    _range(cfg, "augment.jitter", positive=True)
    _num(cfg, "train.tau", lo=0, lo_open=True)
    _num(cfg, "train.lr", lo=0)
    _num(cfg, "train.momentum", lo=0, hi=0.999999)
    _num(cfg, "train.weight_decay", lo=0)
    _num(cfg, "train.key_momentum", lo=0, hi=1)
    _num(cfg, "train.batch_size", lo=1, integer=True)
    _num(cfg, "train.epochs", lo=1, integer=True)
    _num(cfg, "train.queue", lo=1, integer=True)
    _ints(cfg, "train.pool", 3)
    _ints(cfg, "train.hidden", 2)
    _num(cfg, "train.head_hidden", lo=1, integer=True)
    _num(cfg, "train.embed_dim", lo=1, integer=True)
    _num(cfg, "corpus.count", lo=2, integer=True)
    _ints(cfg, "corpus.shape", 3)
    ck = cfg["corpus"]["kinds"]
    if not isinstance(ck, dict) or not ck:
        raise ConfigConstraintError("corpus.kinds", "expected a non-empty table of weights")
    for k, w in ck.items():
        _choice(k, CLIP_KINDS, f"corpus.kinds.{k}")
        if isinstance(w, bool) or not isinstance(w, (int, float)) or w <= 0:
            raise ConfigConstraintError(f"corpus.kinds.{k}", f"weight must be positive, got {w!r}")
    _num(cfg, "eval.probes", lo=2, integer=True)
    _choice(cfg["eval"]["probe_mode"], PAIR_MODES, "eval.probe_mode")
    T, H, W = cfg["corpus"]["shape"]
    for n, p, name in zip((T, H, W), cfg["train"]["pool"], "THW"):
        if n % p:
            raise ConfigConstraintError("train.pool", f"pool factor {p} does not divide clip {name}={n}")
    return cfg


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration tree; ``data`` mirrors the TOML layout."""

    data: dict

    def __getitem__(self, section):
        return self.data[section]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def clip_shape(self) -> tuple:
        return tuple(self.data["corpus"]["shape"])

    def spatial_scale(self, H=None, W=None) -> float:
        if H is None:
            _, H, W = self.clip_shape
        return min(H, W) / self.data["pair"]["reference_size"]

    def augment_config(self) -> AugmentConfig:
        a = self.data["augment"]
        return AugmentConfig(tuple(a["crop_scale"]), None, a["flip"], tuple(a["jitter"]))

    def pair_config(self, mode: str = "tubelet", H=None, W=None) -> PairConfig:
        """Pixel-level pair settings for ``mode`` on an ``H x W`` clip."""
        if mode not in PAIR_MODES:
            raise InvalidConfigError(f"unknown pair mode {mode!r}; expected one of {', '.join(PAIR_MODES)}")
        s = self.spatial_scale(H, W)
        mo, tr, pr = self.data["motion"], self.data["transform"], self.data["pair"]
        lo, hi = pr["patch_size"]
        if H is None:
            _, H, W = self.clip_shape
        patch = (max(1, round(lo * s)), min(min(H, W), max(1, round(hi * s))))
        motion, transforms = {
            "tubelet": (mo["kind"], tuple(k for k in tr["kinds"] if k != "none")),
            "static": ("static", ()),
            "linear": ("linear", ()),
            "nonlinear": ("nonlinear", ()),
            "nonlinear+rotation": ("nonlinear", ("rotation",)),
            "scaled-crop-control": ("nonlinear", ()),
        }[mode]
        return PairConfig(
            m=pr["m"], motion=motion, K=mo["K"],
            delta=(mo["delta"][0] * s, mo["delta"][1] * s), n=mo["n"], sigma=float(mo["sigma"]),
            transforms=transforms,
            bounds={k: tuple(tr[k]) for k in ("scale", "rotation", "shear")},
            patch_size=patch, shapes=tuple(pr["shapes"]), augment=self.augment_config())

    def train_config(self, seed=None) -> TrainConfig:
        t = self.data["train"]
        arch = EncoderArch(self.clip_shape, tuple(t["pool"]), tuple(t["hidden"]), t["head_hidden"], t["embed_dim"])
        return TrainConfig(tau=float(t["tau"]), lr=float(t["lr"]), momentum=float(t["momentum"]),
                           weight_decay=float(t["weight_decay"]), key_momentum=float(t["key_momentum"]),
                           batch_size=t["batch_size"], epochs=t["epochs"], queue=t["queue"],
                           seed=self.seed if seed is None else seed, arch=arch)

    def corpus_spec(self, seed=None, count=None) -> CorpusSpec:
        c = self.data["corpus"]
        return CorpusSpec(count=c["count"] if count is None else count, clip_shape=tuple(c["shape"]),
                          kinds=dict(c["kinds"]), seed=self.seed if seed is None else seed)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """New config with ``{"train.tau": 0.1, ...}`` applied and re-validated."""
        data = copy.deepcopy(self.data)
        for path, value in overrides.items():
            if value is None:
                continue
            node = data
            *head, last = path.split(".")
            for h in head:
                node = node[h]
            node[last] = value
        return RunConfig(validate(data))


def loads_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(getattr(exc, "msg", str(exc)), getattr(exc, "lineno", None),
                               getattr(exc, "colno", None)) from exc
    return RunConfig(validate(_merge(DEFAULTS, raw)))


def parse_config(path=None) -> RunConfig:
    """Read and validate a TOML config; ``None`` gives the built-in defaults."""
    if path is None:
        return loads_config("")
    return loads_config(Path(path).read_text(encoding="utf-8"))


def default_config() -> RunConfig:
    return loads_config("")
