"""Dataset assembly and end-to-end experiments.

Every pair, probe and training epoch derives its randomness from one run
seed through :func:`tubekit.seeding.split`, so results do not depend on the
number of worker processes.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import seeding
from .compositor import PairSample, make_pair, make_scaled_crop_control
from .config import RunConfig
from .contrastive import retrieval_eval, train
from .synthcorpus import generate_corpus

logger = logging.getLogger(__name__)

ABLATION_MODES = ("static", "linear", "nonlinear", "nonlinear+rotation", "scaled-crop-control")


def make_sample(v1, v2, pair_cfg, seed: int, mode: str) -> PairSample:
    if mode == "scaled-crop-control":
        return make_scaled_crop_control(v1, v2, pair_cfg, seed)
    return make_pair(v1, v2, pair_cfg, seed, mode=mode)


def _other_video(n: int, first: int, seed: int) -> int:
    j = int(seeding.rng(seed).integers(n - 1))
    return j if j < first else j + 1


def _pair_job(args):
    clips, pair_cfg, mode, seed, idx = args
    n = len(clips)
    out = []
    for j in idx:
        r = seeding.rng(seeding.split(seed, f"videos-{j}"))
        i1 = int(r.integers(n))
        i2 = _other_video(n, i1, seeding.split(seed, f"partner-{j}"))
        out.append(make_sample(clips[i1], clips[i2], pair_cfg, seeding.split(seed, f"pair-{j}"), mode))
    return out


def build_pairs(clips, pair_cfg, mode: str, seed: int, count: int, jobs: int = 1) -> list[PairSample]:
    """``count`` pairs, each from two distinct randomly chosen corpus clips."""
    if jobs <= 1 or count < 2:
        return _pair_job((clips, pair_cfg, mode, seed, range(count)))
    chunks = [list(c) for c in np.array_split(np.arange(count), jobs) if len(c)]
    with ProcessPoolExecutor(jobs) as pool:
        parts = pool.map(_pair_job, [(clips, pair_cfg, mode, seed, c) for c in chunks])
    return [p for part in parts for p in part]


class EpochPairs:
    """Callable dataset: every epoch pairs each corpus clip (as ``v1``) with a
    random partner and fresh tubelets."""

    def __init__(self, clips, pair_cfg, mode: str, seed: int):
        self.clips = clips
        self.pair_cfg = pair_cfg
        self.mode = mode
        self.seed = seed

    def __call__(self, epoch: int) -> list[PairSample]:
        es = seeding.split(self.seed, f"epoch-{epoch}")
        n = len(self.clips)
        return [make_sample(self.clips[i], self.clips[_other_video(n, i, seeding.split(es, f"partner-{i}"))],
                            self.pair_cfg, seeding.split(es, f"pair-{i}"), self.mode)
                for i in range(n)]


def probe_pairs(run: RunConfig, seed: int, count: int | None = None, mode: str | None = None):
    """Held-out probes on a separate corpus: probe ``j`` pairs videos ``2j``
    and ``2j+1``, so no background appears in two probes."""
    count = run["eval"]["probes"] if count is None else count
    mode = run["eval"]["probe_mode"] if mode is None else mode
    ps = seeding.split(seed, "probes")
    clips = generate_corpus(run.corpus_spec(seed=seeding.split(ps, "corpus"), count=2 * count))
    cfg = run.pair_config(mode)
    return [make_sample(clips[2 * j], clips[2 * j + 1], cfg, seeding.split(ps, f"pair-{j}"), mode)
            for j in range(count)]


@dataclass
class ExperimentResult:
    mode: str
    top1: float
    top5: float
    history: list
    params: object
    seconds: float


def run_experiment(run: RunConfig, mode: str, seed: int | None = None, probes=None,
                   clips=None) -> ExperimentResult:
    """Train on on-the-fly pairs of ``mode`` and score retrieval on ``probes``."""
    seed = run.seed if seed is None else seed
    t0 = time.perf_counter()
    if clips is None:
        clips = generate_corpus(run.corpus_spec(seed=seeding.split(seed, "corpus")))
    if probes is None:
        probes = probe_pairs(run, seed)
    data = EpochPairs(clips, run.pair_config(mode), mode, seeding.split(seed, f"train-{mode}"))
    params, history = train(data, run.train_config(seed=seeding.split(seed, "train")))
    top1, top5 = retrieval_eval(params, probes)
    dt = time.perf_counter() - t0
    logger.info("%s: top1 %.3f top5 %.3f (%.0fs)", mode, top1, top5, dt)
    return ExperimentResult(mode, top1, top5, history, params, dt)


def ablate(run: RunConfig, seed: int | None = None, modes=ABLATION_MODES) -> list[ExperimentResult]:
    """Train every mode with the same seed, corpus and probe set."""
    seed = run.seed if seed is None else seed
    clips = generate_corpus(run.corpus_spec(seed=seeding.split(seed, "corpus")))
    probes = probe_pairs(run, seed)
    return [run_experiment(run, m, seed, probes=probes, clips=clips) for m in modes]


def ablation_table(results) -> str:
    lines = ["mode,top1,top5,final_loss,seconds"]
    for r in results:
        lines.append(f"{r.mode},{r.top1:.4f},{r.top5:.4f},{r.history[-1].mean_loss:.4f},{r.seconds:.1f}")
    return "\n".join(lines) + "\n"
