"""
Regression trajectories with and without the ICR penalty
========================================================

A 30x30 prediction starts just below a 100x60 vehicle box and descends
toward a 12x6 plate inside it. We calibrate the step size, compare the two
arms on the canonical start and then look at a randomized suite.
"""

# %%
import numpy as np

from icrloss.simulate import (
    censored_iters,
    delta_sweep,
    randomized_suite,
    run,
    scenario_config,
)

# %%
# Calibration sweep. The canonical preset freezes the step size at 150,
# chosen so plain CIoU reaches IoU 0.5 within the 50-100 iteration band.
print("step   ciou   icr-ciou")
for step in [50, 100, 150, 200, 300]:
    cfg = scenario_config("canonical", "ciou", step_size=float(step))
    b, i = run(cfg).converged_at, run(cfg.with_icr(2.5)).converged_at
    print(f"{step:4d}   {b!s:>4}   {i!s:>4}")

# %%
# The frozen canonical configuration.
cfg = scenario_config("canonical", "ciou")
base, icr = run(cfg), run(cfg.with_icr(2.5))
print(f"CIoU converges at {base.converged_at}, ICR-CIoU at {icr.converged_at}")

# Containment ratio over the first steps of the penalized run: the box is
# pushed into the vehicle first.
print("ratio:", np.round([s.ratio for s in icr.steps[:12]], 3))

# %%
# Starting from the far upper-left corner instead, plain CIoU inflates the
# box while in transit and runs out of iterations.
far = scenario_config("far-corner", "ciou")
print("far-corner:", run(far).converged_at, run(far.with_icr(2.5)).converged_at)

# %%
# Randomized starts: centers uniform over the annulus around the vehicle,
# sides scaled by a log-uniform factor in [1/2, 2].
b = censored_iters(randomized_suite(cfg, 100))
i = censored_iters(randomized_suite(cfg.with_icr(2.5), 100))
print(f"ICR no slower in {np.mean(i <= b):.0%} of pairs; medians {np.median(i)} vs {np.median(b)}")

# %%
# Sweep over the penalty weight. Row delta=0 reproduces the unpenalized arm.
for row in delta_sweep(cfg, [0.0, 1.0, 1.5, 2.0, 2.5, 3.0], 40):
    print(f"delta {row.delta:4.2f}  median {row.median_converged_at:6.1f}  rate {row.convergence_rate:.2f}")
