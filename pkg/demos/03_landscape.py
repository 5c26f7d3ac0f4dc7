"""
Loss landscapes over box centers
================================

Evaluate CIoU with and without the ICR penalty on a grid of prediction
centers and summarize how the penalty reshapes the surface. Pass a directory
as the first argument to export the grids as CSV/JSON for plotting.
"""

# %%
import sys

import numpy as np

from icrloss.landscape import canonical_spec, compare, evaluate, export_grid, ray_profile

spec = canonical_spec(101)
base = evaluate(spec)
icr = evaluate(spec.with_icr(2.5))

summary = compare(base, icr)
for k, v in summary.to_dict().items():
    print(f"{k:18s} {v}")

# %%
# A coarse ASCII view of the gradient-magnitude ratio. Inside the vehicle
# the two surfaces coincide; outside, the penalized one is steeper.
ratio = icr.grad_mag / np.where(base.grad_mag > 0, base.grad_mag, np.nan)
for row in ratio[::-10]:
    print(" ".join(" ." if not np.isfinite(v) else f"{min(v, 99):2.0f}" for v in row[::10]))

# %%
# One ray leaving the target toward the upper-left.
p = ray_profile(spec.with_icr(2.5), 3 * np.pi / 4, n=8)
for t, b, c, r in zip(p["t"], p["base"], p["icr"], p["ratio"]):
    print(f"t={t:6.1f}  base={b:.3f}  icr={c:.3f}  R={r:.2f}")

# %%
if len(sys.argv) > 1:
    for g in (base, icr):
        for path in export_grid(g, sys.argv[1]):
            print("wrote", path)
