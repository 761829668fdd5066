"""Reproduce the order-parameter figure at desk scale.

Pool-method curves for t = 1..4 over six measurement strengths, overlaid
with simulated protocol estimates (a scaled-down version of the hardware
run: fewer circuits, same estimator).  Writes order_parameter.svg next to
this script.
"""
import os

import numpy as np

from qtree.estimator import EXPERIMENT_THETAS, run_protocol
from qtree.pool import pool_run
from qtree.svgplot import render_curves

thetas = list(EXPERIMENT_THETAS)
print("thetas (rad):", np.round(thetas, 4))

print("pool curves (size 2e4, t <= 4) ...")
curves = pool_run(thetas, t_max=4, size=20_000, seed=11)
for j, t in enumerate(curves.ts):
    row = " ".join(f"{curves.z_mean[i, j]:.4f}" for i in range(len(thetas)))
    print(f"  Z_{int(t)}(theta) = [{row}]")

print("simulated protocol at t = 4 (Nc = 200, Ns = 8) ...")
estimates = []
for i, theta in enumerate(thetas):
    per_depth = run_protocol(4, theta, n_circuits=200, n_shots=8, seed=500 + i)
    for t_prime, res in per_depth.items():
        estimates.append({
            "t": t_prime, "theta": theta, "z_hat": res.z_hat, "se": res.se,
        })
    r4 = per_depth[4]
    pool_val = curves.z_mean[i, 3]
    pull = abs(r4.z_hat - pool_val) / max(r4.se, 1e-12)
    print(f"  theta={theta:.3f}: Z^hat_4 = {r4.z_hat:+.4f} +- {r4.se:.4f} "
          f"(pool {pool_val:.4f}, pull {pull:.2f} SE)")

out = os.path.join(os.path.dirname(__file__), "order_parameter.svg")
with open(out, "w") as fh:
    fh.write(render_curves(curves, estimates, title="order parameter vs measurement strength"))
print(f"wrote {out}")
