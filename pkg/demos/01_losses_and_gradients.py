"""
IoU-family losses and their gradients
=====================================

A predicted box slides past a small target. Plain IoU goes flat once the
boxes separate, while the enclosing-box variants keep pulling.
"""

# %%
import numpy as np

from icrloss import Box, LossKind, fd_grad, loss_grad, loss_value

gt = Box(20.0, -10.0, 12.0, 6.0)

print(f"{'offset':>7s}" + "".join(f"{k.value:>9s}" for k in LossKind))
for dx in [0.0, 4.0, 8.0, 12.0, 20.0, 40.0]:
    pred = gt.translate(dx, 0.0)
    print(f"{dx:7.1f}" + "".join(f"{loss_value(k, pred, gt):9.4f}" for k in LossKind))

# %%
# Gradients are taken with respect to (cx, cy, w, h). Once the prediction
# is disjoint, the IoU gradient is exactly zero.
far = gt.translate(40.0, 0.0)
for k in LossKind:
    print(f"{k.value:5s}", np.round(loss_grad(k, far, gt).grad, 5))

# %%
# The analytic gradient agrees with a central difference. CIoU's alpha
# weight is held fixed in both.
pred = Box(24.3, -8.1, 15.0, 9.0)
for k in LossKind:
    a = loss_grad(k, pred, gt).grad
    f = fd_grad(k, pred, gt, 1e-6)
    print(f"{k.value:5s} max |analytic - fd| = {np.max(np.abs(a - f)):.2e}")

# %%
# Where an edge of the prediction lines up with an edge of the target, the
# min/max terms switch branch. The returned gradient is then the one-sided
# derivative along +e_j and the result is flagged.
aligned = Box(26.0, -10.0, 12.0, 6.0)
print("kink flagged:", loss_grad("iou", aligned, gt).kink)
