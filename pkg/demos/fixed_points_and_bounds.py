"""
Fixed points, mean-field limits and error bounds
================================================

Each target-network learner converges to a regularized fixed point that can
be computed without simulation.  This script builds a small random MDP,
computes those fixed points, checks them against the deterministic
two-timescale iteration of the expected updates, and evaluates the error
bound for the discounted evaluation learner.
"""

import numpy as np

from targetnet_lab import exact_q_pi, make_random_mdp
from targetnet_lab.harness.checks import FIVE, control_instance, theorem2_instance
from targetnet_lab.oracles import (
    contraction_probe,
    evaluation_fixed_point_discounted,
    mean_field_iterate,
    theorem2_constants_and_bound,
    theorem_fixed_point,
)

eta = 0.5
print("algorithm              |w*|      mean-field gap   certified")
for alg in FIVE:
    prob = control_instance(0, alg)
    fp = theorem_fixed_point(alg, prob, eta)
    theta, _, n_outer = mean_field_iterate(alg, prob, eta)
    w = theta[1:] if alg in ("alg2_diff_q_eval", "alg5_diff_q_learning") else theta
    print(f"{alg:22s} {np.linalg.norm(fp.w):8.4f}  {np.abs(w - fp.w).max():14.3g}   {fp.certified}")

# The bound needs ||X|| below a constant C0 that depends on eta and on the
# chain.  theorem2_instance scales a random feature matrix to C0 / 2.
inst = theorem2_instance(seed=1, xi=0.5, eta=1.0)
ops = inst.problem.operators()
w = evaluation_fixed_point_discounted(ops, 1.0)
q = exact_q_pi(inst.problem.mdp, inst.pi)
rep = theorem2_constants_and_bound(inst.problem.X, inst.d, inst.P, ops.r, 0.9, 1.0, 0.5, q, w)
print(f"\nC0 = {rep.C0:.4f}, ||X|| = {rep.X_norm:.4f}")
print(f"achieved error {rep.achieved_error:.4f} <= bound {rep.bound_value:.4f}: {rep.holds}")

# Below C0 the map theta -> w*(theta) contracts with modulus at most 1 - xi.
for fraction in (0.5, 0.9, 10.0):
    inst = theorem2_instance(seed=1, fraction=fraction)
    lip = contraction_probe("alg1_q_eval", inst.problem, 1.0, n_pairs=100)
    print(f"||X|| = {fraction:>4} C0: largest observed ratio {lip:.4f}")

# Off the shelf random MDP for experimenting further.
mdp, X = make_random_mdp(seed=3, n_states=6, n_actions=2, feature_dim=3)
print("\nrandom MDP:", mdp.p.shape, "features", X.shape, "||X|| =", round(X.norm, 3))
