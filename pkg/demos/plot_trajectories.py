"""
Linear and non-linear tubelet motion
====================================

Samples a handful of linear (keyframe) and non-linear (smoothed random walk)
trajectories on a 112 x 112 frame and draws each family into a PPM image.
"""
import sys
from pathlib import Path

import numpy as np

from tubekit import seeding
from tubekit.storage import render_trajectory_plot
from tubekit.trajectory import MotionConfig, generate, mean_sq_second_difference

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

# %%
# Linear motion: K = 3 keyframes, consecutive keyframes 40 to 80 pixels apart,
# straight segments in between.
linear = MotionConfig("linear", T=16, W=112, H=112, K=3, delta_min=40, delta_max=80)
lin = [generate(linear, seeding.split(0, f"linear-{i}")) for i in range(5)]
for tr in lin:
    steps = np.linalg.norm(np.diff(tr.centers, axis=0), axis=1)
    print(f"linear    path length {steps.sum():6.1f}px")

# %%
# Non-linear motion: 48 uniform points, Gaussian smoothing with sigma = 8,
# then resampled to the 16 frames of the clip.
nonlinear = MotionConfig("nonlinear", T=16, W=112, H=112, n=48, sigma=8)
non = [generate(nonlinear, seeding.split(0, f"nonlinear-{i}")) for i in range(5)]
for tr in non:
    print(f"nonlinear roughness {mean_sq_second_difference(tr.centers):6.2f}")

# %%
# One picture per family; squares mark the first frame, plus signs the last.
render_trajectory_plot(lin, (112, 112), out / "linear.ppm", scale=3)
render_trajectory_plot(non, (112, 112), out / "nonlinear.ppm", scale=3)
print("wrote", out / "linear.ppm", "and", out / "nonlinear.ppm")
