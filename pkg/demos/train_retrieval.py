"""
Learning to match tubelets
==========================

Trains the numpy encoder on freshly generated tubelet pairs for a few epochs
and measures how often a clip retrieves its partner among held-out probes.
A full 30-epoch run is what ``tubekit train`` does; this one is shortened.
"""
import sys

from tubekit import seeding
from tubekit.config import default_config
from tubekit.contrastive import init_params, retrieval_eval
from tubekit.pipeline import probe_pairs, run_experiment

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 8

# %%
# 256 background videos, queue of 256 negatives, temperature 0.2.
run = default_config().with_overrides({"train.epochs": epochs})
probes = probe_pairs(run, run.seed)

# %%
# Baseline: a randomly initialised encoder is close to chance (1/128).
tc = run.train_config(seed=seeding.split(run.seed, "train"))
print("untrained top-1 / top-5: %.3f / %.3f" % retrieval_eval(init_params(tc.arch, 0), probes))

# %%
# Training; the history holds one mean loss per epoch.
res = run_experiment(run, "tubelet", probes=probes)
for rec in res.history:
    print(f"epoch {rec.epoch:2d}  loss {rec.mean_loss:.3f}  lr {rec.lr:.4f}")
print(f"trained  top-1 / top-5: {res.top1:.3f} / {res.top5:.3f}  ({res.seconds:.0f}s)")
