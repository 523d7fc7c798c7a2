"""
Ridge regularization on Kolter's two-state chain
================================================

The TD fixed point solves ``A w = b``.  On Kolter's chain ``A`` is a scalar
that crosses zero as the sampling weight ``d1`` of the first state moves, so
the unregularized fixed point blows up near that crossing.  Adding a ridge
term ``eta`` keeps ``A + eta`` away from zero and bounds the error.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from targetnet_lab import build_evaluation_operators, evaluation_fixed_point_discounted, make_kolter

# One feature per state, values v = [1, 1.05] and a feature slightly off v.
k = make_kolter(epsilon=0.01, gamma=0.99)
print("features", k.X.X.ravel(), "values", k.v_pi)

# Sweep d1 and solve (A + eta) w = b for a few ridge weights.
grid = np.arange(0.005, 0.996, 0.005)
etas = [0.0, 0.01, 0.03, 0.1]
errors = {eta: [] for eta in etas}
A_of_d1 = []
for d1 in grid:
    inst = k.with_d1(d1)
    ops = build_evaluation_operators(inst.mdp, inst.X, inst.pi, inst.pi, d=inst.d)
    A_of_d1.append(ops.A[0, 0])
    for eta in etas:
        w = evaluation_fixed_point_discounted(ops, eta)
        errors[eta].append(np.linalg.norm(inst.X.X @ w - inst.v_pi))

# A changes sign between two grid points; that is where eta = 0 fails.
A_of_d1 = np.array(A_of_d1)
crossing = np.flatnonzero(np.diff(np.sign(A_of_d1)))
print("A changes sign between d1 =", grid[crossing], "and", grid[crossing + 1])
for eta in etas:
    e = np.array(errors[eta])
    print(f"eta={eta:<5g} max error {e.max():9.4g}   median {np.median(e):.4g}")

fig, ax = plt.subplots(figsize=(6.4, 4.0))
for eta in etas:
    ax.semilogy(grid, errors[eta], label=f"eta={eta:g}")
ax.set_xlabel("d1")
ax.set_ylabel("||X w - v||")
ax.legend()
fig.tight_layout()
fig.savefig("kolter_sweep.png", dpi=120)
print("wrote kolter_sweep.png")
