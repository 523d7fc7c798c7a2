"""Cross-module invariant suites behind ``lab check``, plus generators for
random instances that satisfy the norm preconditions of the bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..agents import PolicySpec
from ..environments import make_random_mdp
from ..features import center_features, scale_to_norm, spectral_norm, weighted_operator_norm
from ..mdp import (
    Policy,
    build_transition_matrix,
    exact_q_pi,
    exact_q_star,
    reward_rate_and_differential_q,
    stationary_distribution,
)
from ..oracles import (
    LinearProblem,
    build_evaluation_operators,
    contraction_probe,
    evaluation_fixed_point_average,
    evaluation_fixed_point_discounted,
    expected_dynamics,
    mean_field_iterate,
    theorem2_constants_and_bound,
    theorem3_bound,
    theorem3_constant,
    theorem_fixed_point,
    tracked_solution,
)
from .config import parse_config
from .simulate import run

__all__ = [
    "SUITES",
    "CheckResult",
    "Instance",
    "random_policy",
    "theorem2_instance",
    "theorem3_instance",
    "control_instance",
    "run_checks",
]


@dataclass
class CheckResult:
    suite: str
    name: str
    ok: bool
    detail: str = ""

    def to_dict(self):
        return {"suite": self.suite, "name": self.name, "ok": self.ok, "detail": self.detail}


@dataclass
class Instance:
    """A random evaluation problem with its exact quantities."""

    problem: LinearProblem
    mu: Policy
    pi: Policy
    d: np.ndarray
    P: np.ndarray
    C0: float


def random_policy(rng, n_states, n_actions):
    return Policy(rng.dirichlet(np.ones(n_actions), size=n_states))


def theorem2_instance(seed, xi=0.5, eta=1.0, gamma=0.9, n_states=5, n_actions=2, K=3, fraction=0.5,
                      on_policy=False):
    """Random MDP with ``||X|| = fraction * C0`` for the discounted bound."""
    mdp, fm = make_random_mdp(seed, n_states, n_actions, K, mixing=0.2, gamma=gamma)
    rng = np.random.default_rng([seed, 1])
    pi = random_policy(rng, n_states, n_actions)
    mu = pi if on_policy else random_policy(rng, n_states, n_actions)
    d = stationary_distribution(build_transition_matrix(mdp, mu))
    P = build_transition_matrix(mdp, pi)
    C0 = 2 * (1 - xi) * math.sqrt(eta) / (gamma * weighted_operator_norm(P, d))
    X = scale_to_norm(fm, fraction * C0).X
    prob = LinearProblem(mdp, X, PolicySpec("fixed", mu), PolicySpec("fixed", pi), gamma)
    return Instance(prob, mu, pi, d, P, C0)


def theorem3_instance(seed, xi=0.5, eta=1.0, n_states=5, n_actions=2, K=3, fraction=0.5, on_policy=False):
    """Random MDP with features centered under ``d_mu`` and scaled below the
    average-reward constant."""
    mdp, fm = make_random_mdp(seed, n_states, n_actions, K, mixing=0.2, gamma=None)
    rng = np.random.default_rng([seed, 2])
    pi = random_policy(rng, n_states, n_actions)
    mu = pi if on_policy else random_policy(rng, n_states, n_actions)
    d = stationary_distribution(build_transition_matrix(mdp, mu))
    P = build_transition_matrix(mdp, pi)
    Xc = center_features(fm, d)
    C0 = theorem3_constant(Xc.X, d, P, eta, xi)
    X = scale_to_norm(Xc, fraction * C0).X
    prob = LinearProblem(mdp, X, PolicySpec("fixed", mu), PolicySpec("fixed", pi), None)
    return Instance(prob, mu, pi, d, P, C0)


def control_instance(seed, algorithm, norm=0.3, n_states=4, n_actions=2, K=3, gamma=0.9):
    """Random control problem with small features for the given learner."""
    mdp, fm = make_random_mdp(seed, n_states, n_actions, K, mixing=0.3, gamma=gamma)
    X = scale_to_norm(fm, norm).X
    uniform = Policy.uniform(n_states, n_actions)
    rng = np.random.default_rng([seed, 3])
    fixed_pi = random_policy(rng, n_states, n_actions)
    if algorithm in ("alg1_q_eval", "alg2_diff_q_eval"):
        behavior, target = PolicySpec("fixed", uniform), PolicySpec("fixed", fixed_pi)
    elif algorithm == "alg4_gradient_q":
        behavior, target = PolicySpec("mixture", uniform, weight=0.5), PolicySpec("softmax")
    else:
        behavior, target = PolicySpec("mixture", uniform, weight=0.1), PolicySpec("greedy")
    if algorithm in ("alg2_diff_q_eval", "alg5_diff_q_learning"):
        mdp = mdp.with_gamma(None)
        gamma = None
    return LinearProblem(mdp, X, behavior, target, gamma)


FIVE = ("alg1_q_eval", "alg2_diff_q_eval", "alg3_q_learning", "alg4_gradient_q", "alg5_diff_q_learning")


def _suite_mdp(seeds):
    out = []
    for seed in seeds:
        mdp, _ = make_random_mdp(seed, 5, 2, 3, mixing=0.1, gamma=0.9)
        pi = Policy.uniform(5, 2)
        P = build_transition_matrix(mdp, pi)
        d = stationary_distribution(P)
        q = exact_q_pi(mdp, pi)
        qs = exact_q_star(mdp)
        bell = np.abs(mdp.r_vec + 0.9 * mdp.p.reshape(10, 5) @ qs.reshape(5, 2).max(axis=1) - qs).max()
        rate, qbar = reward_rate_and_differential_q(mdp, pi)
        errs = {
            "stationary": float(np.abs(d @ P - d).max()),
            "q_pi": float(np.abs(q - mdp.r_vec - 0.9 * P @ q).max()),
            "q_star": float(bell),
            "differential": float(np.abs(qbar - (mdp.r_vec - rate + P @ qbar)).max()),
        }
        out.append(CheckResult("mdp", f"residuals seed={seed}", max(errs.values()) <= 1e-10, repr(errs)))
    return out


def _suite_oracles(seeds, perturb):
    out = []
    for seed in seeds:
        for alg in FIVE:
            prob = control_instance(seed, alg)
            eta = 0.5
            fp = theorem_fixed_point(alg, prob, eta)
            w_fp = fp.w + perturb
            theta, params, _ = mean_field_iterate(alg, prob, eta)
            w_mf = theta[1:] if alg in ("alg2_diff_q_eval", "alg5_diff_q_learning") else theta
            gap = float(np.abs(w_mf - w_fp).max())
            rng = np.random.default_rng(seed)
            dim = prob.K + 1 if alg in ("alg2_diff_q_eval", "alg5_diff_q_learning") else prob.K
            th = rng.standard_normal(dim)
            zero = float(np.abs(expected_dynamics(alg, prob, th, tracked_solution(alg, prob, th, eta), eta)).max())
            ok = fp.certified and gap <= 1e-8 and zero <= 1e-10
            out.append(CheckResult("oracles", f"{alg} seed={seed}", ok,
                                   f"mean-field gap {gap:.3g}, increment at w*(theta) {zero:.3g}"))
    return out


def _suite_bounds(seeds):
    out = []
    for seed in seeds:
        inst = theorem2_instance(seed)
        ops = inst.problem.operators()
        w = evaluation_fixed_point_discounted(ops, 1.0)
        q = exact_q_pi(inst.problem.mdp, inst.pi)
        rep = theorem2_constants_and_bound(inst.problem.X, inst.d, inst.P, ops.r, 0.9, 1.0, 0.5, q, w)
        out.append(CheckResult("bounds", f"discounted seed={seed}", rep.preconditions_met and rep.holds,
                               f"error {rep.achieved_error:.4g} <= bound {rep.bound_value:.4g}"))
        inst = theorem3_instance(seed)
        ops = inst.problem.operators()
        w, rbar = evaluation_fixed_point_average(ops, 1.0)
        rate, qbar = reward_rate_and_differential_q(inst.problem.mdp, inst.pi)
        rep3 = theorem3_bound(inst.problem.X, inst.d, inst.P, 1.0, 0.5, qbar, rate, w, rbar)
        out.append(CheckResult("bounds", f"average seed={seed}", rep3.preconditions_met and rep3.holds,
                               f"error {rep3.achieved_error:.4g} <= {rep3.bound_value:.4g}, "
                               f"rate gap {rep3.rate_error:.3g} <= {rep3.rate_bound:.3g}"))
    return out


def _suite_contraction(seeds):
    out = []
    for seed in seeds:
        inst = theorem2_instance(seed, fraction=0.9)
        lip = contraction_probe("alg1_q_eval", inst.problem, 1.0, n_pairs=100, seed=seed)
        out.append(CheckResult("contraction", f"probe seed={seed}", lip <= 0.5, f"max ratio {lip:.4g} <= 0.5"))
    return out


def _suite_drift(horizon):
    cfg = parse_config(f"""
environment: {{name: baird-control}}
algorithm:
  name: alg3_q_learning
  alpha: 0.01
  beta: 0.001
  projection: {{r1: 100, r2: 99}}
horizon: {horizon}
replications: 3
sweep: {{eta: [0.0, 0.1]}}
""")
    out = []
    for pr in run(cfg):
        viol = sum(r.drift_violations for r in pr.runs)
        out.append(CheckResult("drift", f"baird-control eta={pr.eta:g}", viol == 0,
                               f"{viol} steps above beta*(R1+R2)"))
    return out


SUITES = ("mdp", "oracles", "bounds", "contraction", "drift")


def run_checks(selector=None, seeds=(0, 1, 2), perturb=0.0, drift_horizon=2000):
    """Run the named suites (all when ``selector`` is empty).

    ``perturb`` shifts every oracle fixed point before comparison; a nonzero
    value is a fault injection that the ``oracles`` suite must catch.
    """
    names = list(SUITES) if not selector else [s for s in SUITES if s in set(selector)]
    unknown = set(selector or ()) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown suite(s) {sorted(unknown)}; choose from {', '.join(SUITES)}")
    results = []
    for name in names:
        if name == "mdp":
            results += _suite_mdp(seeds)
        elif name == "oracles":
            results += _suite_oracles(seeds, perturb)
        elif name == "bounds":
            results += _suite_bounds(seeds)
        elif name == "contraction":
            results += _suite_contraction(seeds)
        elif name == "drift":
            results += _suite_drift(drift_horizon)
    return results
