"""
Off-policy evaluation on Baird's star
=====================================

Semi-gradient TD with importance sampling is the textbook example of the
deadly triad.  Here it is compared with the same learner bootstrapping from
a slowly moving target network.  The textbook behavior policy (solid with
probability 1/7) makes the baseline blow up within a few thousand steps.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from targetnet_lab.harness.config import parse_config
from targetnet_lab.harness.simulate import run

TEMPLATE = """
environment: {{name: baird-eval, behavior: {behavior}}}
algorithm: {{name: {name}, alpha: 0.01, beta: 0.01}}
horizon: {horizon}
replications: 5
sweep: {{eta: [0.0, 0.1]}}
"""

fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
for ax, behavior in zip(axes, ["mostly-dashed", "mostly-solid"]):
    for name in ["baseline_td_ridge", "alg1_td_variant"]:
        cfg = parse_config(TEMPLATE.format(behavior=behavior, name=name, horizon=20000))
        for pr in run(cfg):
            v = pr.stacked("value_error")
            ax.semilogy(pr.t, v.mean(axis=0), label=f"{name} eta={pr.eta:g}")
            r = pr.runs[0]
            print(f"{behavior:12s} {name:17s} eta={pr.eta:<4g} {r.termination:20s} "
                  f"final ||Xw|| {v[:, -1].mean():.4g}")
    ax.set_title(f"behavior: {behavior}")
    ax.set_xlabel("step")
axes[0].set_ylabel("||X w||")
axes[1].legend(fontsize=7)
fig.tight_layout()
fig.savefig("baird_evaluation.png", dpi=120)
print("wrote baird_evaluation.png")

# Whether theta converges is decided by the linear map theta -> w*(theta).
# Its spectral radius is printed below: close to 0.99 means slow progress,
# above 1 means the target network drifts away too.
from targetnet_lab import make_baird
from targetnet_lab.mdp import state_value_reduction

for behavior in ["mostly-dashed", "mostly-solid"]:
    b = make_baird(behavior=behavior)
    reduced, d = state_value_reduction(b.mdp, b.pi_target, b.mu0)
    X, D, P = b.X_eval.X, np.diag(d), reduced.p[:, 0, :]
    for eta in [0.0, 0.01, 0.1, 1.0]:
        M = np.linalg.pinv(X.T @ D @ X + eta * np.eye(8)) @ X.T @ D @ (0.99 * P) @ X
        print(f"{behavior:12s} eta={eta:<4g} spectral radius {max(abs(np.linalg.eigvals(M))):.4f}")
