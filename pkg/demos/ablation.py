"""
Which motion matters
====================

Trains one encoder per pair construction (static patches, linear motion,
non-linear motion, non-linear motion with rotation, and per-frame random
crops) and scores all of them on the same held-out probes.
"""
import sys

from tubekit.config import default_config
from tubekit.pipeline import ablate, ablation_table

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 10

run = default_config().with_overrides({"train.epochs": epochs})
results = ablate(run)

# %%
# Smooth non-linear motion should beat static patches, and adding rotation
# should not hurt; per-frame random placement gives little to learn from.
print(ablation_table(results))
best = max(results, key=lambda r: r.top1)
print("best mode:", best.mode)
