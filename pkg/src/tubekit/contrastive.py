"""Momentum-contrastive training on tubelet pairs, in plain numpy.

The encoder is a small MLP over a pooled spatiotemporal grid.  Each grid cell
carries the three pooled color channels plus their frame-to-frame difference,
so motion is visible to the very first layer.  A two-layer projection head
maps the trunk output to a unit-norm embedding.

Training follows the usual momentum-contrast recipe: a query encoder trained
by SGD, a key encoder that tracks it as an exponential moving average, and a
FIFO queue of past keys that supplies the negatives for InfoNCE.  All
gradients are written out by hand.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import seeding
from .clip import Clip
from .errors import InvalidConfigError, InvalidInputError, TrainingDivergedError

logger = logging.getLogger(__name__)

PARAM_ORDER = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")


# --------------------------------------------------------------------------
# encoder


@dataclass(frozen=True)
class EncoderArch:
    clip_shape: tuple = (16, 32, 32)  # T, H, W of accepted clips
    pool: tuple = (1, 4, 4)           # average-pool factors along T, H, W
    hidden: tuple = (256, 256)        # trunk widths
    head_hidden: int = 256
    embed_dim: int = 128

    def __post_init__(self):
        if len(self.hidden) != 2:
            raise InvalidConfigError(f"trunk has exactly two hidden layers, got {self.hidden}")
        for n, p in zip(self.clip_shape, self.pool):
            if p < 1 or n % p:
                raise InvalidConfigError(f"pool {self.pool} does not divide clip shape {self.clip_shape}")
        if min(self.hidden + (self.head_hidden, self.embed_dim)) < 1:
            raise InvalidConfigError("layer widths must be positive")

    @property
    def grid(self) -> tuple:
        return tuple(n // p for n, p in zip(self.clip_shape, self.pool))

    @property
    def input_dim(self) -> int:
        t, h, w = self.grid
        return t * h * w * 6

    @property
    def layer_shapes(self) -> dict:
        h1, h2 = self.hidden
        return {
            "W1": (self.input_dim, h1), "b1": (h1,),
            "W2": (h1, h2), "b2": (h2,),
            "W3": (h2, self.head_hidden), "b3": (self.head_hidden,),
            "W4": (self.head_hidden, self.embed_dim), "b4": (self.embed_dim,),
        }


@dataclass(eq=False)
class EncoderParams:
    arch: EncoderArch
    tensors: dict  # name -> float64 array, keys in PARAM_ORDER

    def __getitem__(self, name):
        return self.tensors[name]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[k].ravel() for k in PARAM_ORDER])

    @property
    def size(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def __eq__(self, other):
        return (isinstance(other, EncoderParams) and self.arch == other.arch
                and all(np.array_equal(self.tensors[k], other.tensors[k]) for k in PARAM_ORDER))

    __hash__ = None


def init_params(arch: EncoderArch, seed: int) -> EncoderParams:
    """Glorot-uniform weights, zero biases."""
    r = seeding.rng(seed)
    tensors = {}
    for name, shape in arch.layer_shapes.items():
        if name.startswith("W"):
            bound = math.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = r.uniform(-bound, bound, shape)
        else:
            tensors[name] = np.zeros(shape)
    return EncoderParams(arch, tensors)


def clip_features(arch: EncoderArch, clips) -> np.ndarray:
    """Pooled color + temporal-difference features, shape ``(B, input_dim)``.

    Accepts one :class:`Clip`, a sequence of them, or a raw uint8 array of shape
    ``(B, T, H, W, 3)``.
    """
    if isinstance(clips, Clip):
        px = clips.pixels[None]
    elif isinstance(clips, np.ndarray):
        px = clips if clips.ndim == 5 else clips[None]
    else:
        px = np.stack([c.pixels for c in clips])
    if tuple(px.shape[1:4]) != tuple(arch.clip_shape) or px.shape[-1] != 3:
        raise InvalidInputError(f"encoder expects clips of shape {arch.clip_shape} x 3, got {px.shape[1:]}")
    B = px.shape[0]
    (T, H, W), (pt, ph, pw) = arch.clip_shape, arch.pool
    x = px.astype(np.float64) / 255.0
    g = x.reshape(B, T // pt, pt, H // ph, ph, W // pw, pw, 3).mean(axis=(2, 4, 6))
    diff = np.zeros_like(g)
    diff[:, 1:] = g[:, 1:] - g[:, :-1]
    feats = np.concatenate([g - 0.5, diff], axis=-1)
    return feats.reshape(B, -1)


def forward(params: EncoderParams, X: np.ndarray, keep: bool = False):
    """Embed feature rows ``X``.  With ``keep`` also return the activations
    needed by :func:`backward`."""
    p = params.tensors
    a1 = X @ p["W1"] + p["b1"]
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ p["W2"] + p["b2"]
    h2 = np.maximum(a2, 0.0)
    a3 = h2 @ p["W3"] + p["b3"]
    h3 = np.maximum(a3, 0.0)
    z = h3 @ p["W4"] + p["b4"]
    # floor keeps an all-dead head (z = 0) finite instead of NaN
    norm = np.maximum(np.sqrt(np.sum(z * z, axis=1, keepdims=True)), 1e-12)
    e = z / norm
    if keep:
        return e, (X, a1, h1, a2, h2, a3, h3, norm, e)
    return e


def backward(params: EncoderParams, cache, d_e: np.ndarray) -> dict:
    """Gradients of a scalar loss w.r.t. every parameter, given dL/d(embedding)."""
    p = params.tensors
    X, a1, h1, a2, h2, a3, h3, norm, e = cache
    dz = (d_e - e * np.sum(e * d_e, axis=1, keepdims=True)) / norm
    g = {"W4": h3.T @ dz, "b4": dz.sum(axis=0)}
    d3 = (dz @ p["W4"].T) * (a3 > 0)
    g["W3"], g["b3"] = h2.T @ d3, d3.sum(axis=0)
    d2 = (d3 @ p["W3"].T) * (a2 > 0)
    g["W2"], g["b2"] = h1.T @ d2, d2.sum(axis=0)
    d1 = (d2 @ p["W2"].T) * (a1 > 0)
    g["W1"], g["b1"] = X.T @ d1, d1.sum(axis=0)
    return g


def encode(params: EncoderParams, clip) -> np.ndarray:
    """Unit-norm embedding of one clip (or a ``(B, D)`` block for several)."""
    e = forward(params, clip_features(params.arch, clip))
    return e[0] if isinstance(clip, Clip) else e


# --------------------------------------------------------------------------
# loss


def _check_tau(tau):
    if not tau > 0:
        raise InvalidConfigError(f"temperature must be positive, got {tau}")


def infonce_from_logits(pos: float, negs, tau: float = 1.0) -> float:
    """``-log softmax`` of the positive among ``[pos] + negs``, after dividing
    every similarity by ``tau``.  Shift-stabilized."""
    _check_tau(tau)
    negs = np.asarray(negs, dtype=np.float64)
    if negs.size == 0:
        raise InvalidInputError("InfoNCE needs at least one negative")
    s = np.concatenate([[pos], negs.ravel()]) / tau
    return float(_logsumexp(s[None])[0] - s[0])


def _logsumexp(s: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp.  The largest term contributes exactly 1, so the
    rest go through log1p and keep their precision when one logit dominates."""
    top = np.argmax(s, axis=1)
    rows = np.arange(len(s))
    mx = s[rows, top]
    ex = np.exp(s - mx[:, None])
    ex[rows, top] = 0.0
    return mx + np.log1p(ex.sum(axis=1))


def infonce(zq, zk, negatives, tau: float = 0.2) -> float:
    zq = np.asarray(zq, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64).reshape(-1, zq.shape[-1]) \
        if len(negatives) else np.zeros((0, zq.shape[-1]))
    _check_dims(zq, zk, negatives)
    return infonce_from_logits(float(zq @ np.asarray(zk)), negatives @ zq, tau)


def _check_dims(zq, zk, negatives):
    zk = np.asarray(zk)
    if zq.shape != zk.shape or negatives.shape[1:] != zq.shape:
        raise InvalidInputError(
            f"dimension mismatch: query {zq.shape}, key {zk.shape}, negatives {negatives.shape}")
    if len(negatives) == 0:
        raise InvalidInputError("InfoNCE needs at least one negative")


def infonce_grad(zq, zk, negatives, tau: float = 0.2):
    """Analytic gradients ``(d/dzq, d/dzk, d/dnegatives)`` of :func:`infonce`."""
    _check_tau(tau)
    zq = np.asarray(zq, dtype=np.float64)
    zk = np.asarray(zk, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64)
    _check_dims(zq, zk, negatives)
    cand = np.vstack([zk[None], negatives])
    s = cand @ zq / tau
    prob = np.exp(s - s.max())
    prob /= prob.sum()
    g_q = (prob @ cand - zk) / tau
    g_k = (prob[0] - 1.0) * zq / tau
    g_n = prob[1:, None] * zq[None] / tau
    return g_q, g_k, g_n


def infonce_batch(q: np.ndarray, k: np.ndarray, queue: np.ndarray, tau: float):
    """Mean InfoNCE over rows of ``q`` with positives ``k`` and shared negatives
    ``queue``; returns ``(loss, dloss/dq)``.  Keys and queue get no gradient."""
    B = len(q)
    pos = np.sum(q * k, axis=1, keepdims=True)
    s = np.concatenate([pos, q @ queue.T], axis=1) / tau
    lse = _logsumexp(s)
    loss = float(np.mean(lse - s[:, 0]))
    prob = np.exp(s - lse[:, None])
    dq = ((prob[:, :1] - 1.0) * k + prob[:, 1:] @ queue) / (tau * B)
    return loss, dq


# --------------------------------------------------------------------------
# momentum machinery


class NegativeQueue:
    """Fixed-capacity FIFO of unit-norm key embeddings."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise InvalidConfigError(f"queue capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.dim = dim
        self._buf = np.zeros((capacity, dim))
        self._head = 0  # next write slot
        self._size = 0

    def __len__(self):
        return self._size

    def enqueue(self, keys: np.ndarray):
        keys = np.asarray(keys, dtype=np.float64).reshape(-1, self.dim)
        if len(keys) >= self.capacity:
            keys = keys[-self.capacity:]
        n = len(keys)
        idx = (self._head + np.arange(n)) % self.capacity
        self._buf[idx] = keys
        self._head = (self._head + n) % self.capacity
        self._size = min(self.capacity, self._size + n)

    def contents(self) -> np.ndarray:
        """Entries oldest first."""
        start = (self._head - self._size) % self.capacity
        idx = (start + np.arange(self._size)) % self.capacity
        return self._buf[idx]


def random_unit_vectors(n: int, dim: int, seed: int) -> np.ndarray:
    v = seeding.rng(seed).standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def momentum_update(query: EncoderParams, key: EncoderParams, m: float) -> EncoderParams:
    """``key <- m * key + (1 - m) * query`` for every tensor; returns a new object."""
    if not 0 <= m <= 1:
        raise InvalidConfigError(f"key momentum must be in [0, 1], got {m}")
    out = {}
    for name in PARAM_ORDER:
        q, k = query.tensors[name], key.tensors[name]
        if q.shape != k.shape:
            raise InvalidInputError(f"shape mismatch for {name}: {q.shape} vs {k.shape}")
        out[name] = m * k + (1.0 - m) * q
    return EncoderParams(key.arch, out)


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 0.2
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    key_momentum: float = 0.999
    batch_size: int = 32
    epochs: int = 30
    queue: int = 256
    seed: int = 0
    arch: EncoderArch = field(default_factory=EncoderArch)

    def __post_init__(self):
        _check_tau(self.tau)
        if not 0 <= self.key_momentum <= 1:
            raise InvalidConfigError(f"key_momentum must be in [0, 1], got {self.key_momentum}")
        if self.batch_size < 1 or self.epochs < 1 or self.queue < 1:
            raise InvalidConfigError("batch_size, epochs and queue must be positive")
        if self.lr < 0 or self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise InvalidConfigError("lr and weight_decay must be >= 0, momentum in [0, 1)")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_loss: float
    lr: float


def cosine_lr(base: float, epoch: int, epochs: int) -> float:
    """Cosine decay from ``base`` at epoch 0 to 0 at the last epoch."""
    if epochs <= 1:
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * epoch / (epochs - 1)))


class SGD:
    """SGD with heavy-ball momentum and L2 weight decay (decay folded into the gradient)."""

    def __init__(self, momentum: float, weight_decay: float):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buf = {}

    def step(self, params: EncoderParams, grads: dict, lr: float):
        for name in PARAM_ORDER:
            p = params.tensors[name]
            g = grads[name] + self.weight_decay * p
            b = self.buf.get(name)
            b = g.copy() if b is None else self.momentum * b + g
            self.buf[name] = b
            p -= lr * b


def pair_step(query: EncoderParams, key: EncoderParams, xa, xb, negatives, tau):
    """Symmetric loss and query gradients for one batch of pair features."""
    B = len(xa)
    q, cache = forward(query, np.vstack([xa, xb]), keep=True)
    k = forward(key, np.vstack([xb, xa]))
    loss_ab, dq_ab = infonce_batch(q[:B], k[:B], negatives, tau)
    loss_ba, dq_ba = infonce_batch(q[B:], k[B:], negatives, tau)
    grads = backward(query, cache, 0.5 * np.vstack([dq_ab, dq_ba]))
    return 0.5 * (loss_ab + loss_ba), grads, k[:B]


def train(dataset, cfg: TrainConfig, on_step: Callable | None = None, init: EncoderParams | None = None):
    """Train a query encoder on pairs; returns ``(params, history)``.

    ``dataset`` is a sequence of :class:`~tubekit.compositor.PairSample` reused
    every epoch, or a callable ``epoch -> sequence`` for freshly generated pairs.
    ``on_step(epoch, batch, loss)`` is called after every optimizer step.
    """
    arch = cfg.arch
    query = init.copy() if init is not None else init_params(arch, seeding.split(cfg.seed, "init"))
    key = query.copy()
    queue = NegativeQueue(cfg.queue, arch.embed_dim)
    queue.enqueue(random_unit_vectors(cfg.queue, arch.embed_dim, seeding.split(cfg.seed, "queue")))
    opt = SGD(cfg.momentum, cfg.weight_decay)
    history = []
    for epoch in range(cfg.epochs):
        pairs = dataset(epoch) if callable(dataset) else dataset
        if len(pairs) == 0:
            raise InvalidInputError("training dataset is empty")
        lr = cosine_lr(cfg.lr, epoch, cfg.epochs)
        order = seeding.rng(seeding.split(cfg.seed, f"shuffle-{epoch}")).permutation(len(pairs))
        losses = []
        for bi, start in enumerate(range(0, len(pairs), cfg.batch_size)):
            batch = [pairs[i] for i in order[start:start + cfg.batch_size]]
            xa = clip_features(arch, [s.clip_a for s in batch])
            xb = clip_features(arch, [s.clip_b for s in batch])
            loss, grads, keys = pair_step(query, key, xa, xb, queue.contents(), cfg.tau)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, bi, loss)
            opt.step(query, grads, lr)
            key = momentum_update(query, key, cfg.key_momentum)
            queue.enqueue(keys)
            losses.append(loss)
            if on_step is not None:
                on_step(epoch, bi, loss)
        rec = EpochRecord(epoch, float(np.mean(losses)), lr)
        history.append(rec)
        logger.info("epoch %d  loss %.4f  lr %.5f", epoch, rec.mean_loss, lr)
    return query, history


# --------------------------------------------------------------------------
# evaluation


def retrieval_topk(queries: np.ndarray, gallery: np.ndarray, ks=(1, 5)) -> dict:
    """Fraction of queries whose partner (same row index) ranks within ``k``
    by cosine similarity.  Ties go to the lower gallery index."""
    qn = queries / np.linalg.norm(queries, axis=1, keepdims=True)
    gn = gallery / np.linalg.norm(gallery, axis=1, keepdims=True)
    sims = qn @ gn.T
    n = len(sims)
    true = sims[np.arange(n), np.arange(n)][:, None]
    idx = np.arange(sims.shape[1])[None, :]
    ahead = (sims > true) | ((sims == true) & (idx < np.arange(n)[:, None]))
    rank = ahead.sum(axis=1)
    return {k: float(np.mean(rank < k)) for k in ks}


def retrieval_eval(params: EncoderParams, probes: Sequence) -> tuple:
    """Top-1 and top-5 retrieval of each probe's ``clip_b`` from its ``clip_a``."""
    if len(probes) < 2:
        raise InvalidInputError("retrieval needs at least 2 probes")
    qa = encode(params, [p.clip_a for p in probes])
    gb = encode(params, [p.clip_b for p in probes])
    res = retrieval_topk(qa, gb, (1, 5))
    return res[1], res[5]
