"""Turn config sections into environments, policies and learner configs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..agents import CONTROL, AlgorithmConfig, PolicySpec, Schedule
from ..environments import DASHED, SOLID, make_baird, make_kolter, make_random_mdp
from ..container import load_mdp
from ..errors import ConfigError, InvalidInputError
from ..features import as_matrix
from ..mdp import (
    Mdp,
    Policy,
    exact_q_pi,
    exact_q_star,
    reward_rate_and_differential_q,
)
from ..oracles import LinearProblem

__all__ = ["SimProblem", "build_problem", "build_algorithm", "named_table"]

STATE_VALUE_ALGS = ("alg1_td_variant", "baseline_td_ridge")


@dataclass(frozen=True)
class SimProblem:
    """Everything the simulator needs for one environment.

    ``state_features`` marks the importance-sampled state-value setting
    (``X`` has one row per state); otherwise ``X`` has one row per
    state-action pair.  ``q_ref`` is the value the error metric measures
    against; with ``offset_free`` the best constant shift is removed first
    (differential values are only defined up to a constant).
    """

    env: str
    mdp: Mdp
    X: np.ndarray
    state_features: bool
    w0: np.ndarray
    behavior: PolicySpec
    target: PolicySpec
    q_ref: np.ndarray
    offset_free: bool = False

    @property
    def K(self):
        return self.X.shape[1]

    def linear_problem(self, gamma=None):
        return LinearProblem(self.mdp, self.X, self.behavior, self.target, gamma)


def named_table(spec, n_states, n_actions, baird=None):
    """A fixed policy from a name (uniform, mu0, solid, dashed) or a nested list."""
    if isinstance(spec, str):
        if spec == "uniform":
            return Policy.uniform(n_states, n_actions)
        if baird is not None and spec == "mu0":
            return baird.mu0
        if baird is not None and spec in ("solid", "dashed"):
            return Policy.deterministic(np.full(n_states, SOLID if spec == "solid" else DASHED), n_actions)
        raise ConfigError(f"unknown policy table {spec!r}", field="table")
    try:
        return Policy(np.asarray(spec, dtype=float))
    except Exception as exc:  # noqa: BLE001 - reported as a config error
        raise ConfigError(f"invalid policy table: {exc}", field="table") from None


def _spec(section, default_kind, default_table, n_states, n_actions, baird, tau):
    section = dict(section or {})
    kind = section.get("kind", default_kind)
    fixed = None
    if kind in ("fixed", "mixture"):
        fixed = named_table(section.get("table", default_table), n_states, n_actions, baird)
    return PolicySpec(kind, fixed, section.get("weight", 0.0), section.get("tau", tau))


def build_algorithm(alg: dict, gamma, eta=None) -> AlgorithmConfig:
    proj = alg.get("projection", "disabled")
    r1, r2 = (math.inf, math.inf) if proj == "disabled" else (proj["r1"], proj["r2"])
    return AlgorithmConfig(
        algorithm=alg["name"],
        eta=alg["eta"] if eta is None else eta,
        r1=r1,
        r2=r2,
        alpha=Schedule(**alg["alpha"]),
        beta=Schedule(**alg["beta"]),
        tau=alg.get("tau", 1.0),
        gamma=gamma,
    )


def build_problem(env: dict, alg: dict) -> SimProblem:
    name, algorithm = env["name"], alg["name"]
    tau = alg.get("tau", 1.0)
    control = algorithm in CONTROL
    target_kind = "softmax" if algorithm == "alg4_gradient_q" else ("greedy" if control else "fixed")

    if name in ("baird-eval", "baird-control"):
        mode = "evaluation" if name == "baird-eval" else "control"
        inst = make_baird(mode, env.get("behavior", "mostly-solid"))
        S, A = 7, 2
        behavior = _spec(alg.get("behavior"), "fixed", "mu0", S, A, inst, tau)
        target = _spec(alg.get("target"), target_kind, "solid", S, A, inst, tau)
        mdp = inst.mdp
        state_features = mode == "evaluation"
        if state_features and algorithm not in STATE_VALUE_ALGS:
            raise ConfigError(f"baird-eval uses state features; algorithm must be one of {STATE_VALUE_ALGS}",
                              field="algorithm.name")
        X = as_matrix(inst.X)
        w0 = inst.w0
        # every reward is zero, so v_pi, q_pi and q_* all vanish
        q_ref = np.zeros(X.shape[0])
        offset_free = False
    elif name in ("random", "file"):
        if name == "random":
            mdp, fm = make_random_mdp(
                env.get("seed", 0), env.get("n_states", 5), env.get("n_actions", 2), env.get("feature_dim", 3),
                env.get("mixing", 0.1), env.get("gamma", 0.9), env.get("center", False), env.get("feature_norm"),
            )
        else:
            mdp, fm = _load_container(env["path"])
        if algorithm in STATE_VALUE_ALGS:
            raise ConfigError("state-value learners need the baird-eval environment", field="algorithm.name")
        S, A = mdp.n_states, mdp.n_actions
        behavior = _spec(alg.get("behavior"), "fixed", "uniform", S, A, None, tau)
        target = _spec(alg.get("target"), target_kind, "uniform", S, A, None, tau)
        X = as_matrix(fm)
        w0 = np.asarray(alg.get("w0", np.zeros(X.shape[1])), dtype=float)
        state_features = False
        offset_free = algorithm in ("alg2_diff_q_eval", "alg5_diff_q_learning", "baseline_diff_td",
                                    "baseline_diff_q")
        if control and offset_free:
            q_ref = _differential_q_star(mdp)
        elif control:
            q_ref = exact_q_star(mdp)
        elif offset_free:
            pi = target.policy(X, np.zeros(X.shape[1]), A)
            q_ref = reward_rate_and_differential_q(mdp, pi)[1]
        else:
            q_ref = exact_q_pi(mdp, target.policy(X, np.zeros(X.shape[1]), A))
    elif name == "kolter":
        raise ConfigError("the kolter environment has no simulation; use the fixed-point sweep",
                          field="environment.name")
    else:  # pragma: no cover - rejected by the schema
        raise ConfigError(f"unknown environment {name!r}", field="environment.name")

    if "w0" in alg:
        w0 = np.asarray(alg["w0"], dtype=float)
    if w0.shape != (X.shape[1],):
        raise ConfigError(f"w0 must have length {X.shape[1]}", field="algorithm.w0")
    return SimProblem(name, mdp, X, state_features, w0, behavior, target, q_ref, offset_free)


def _load_container(path):
    try:
        with open(path, encoding="utf-8") as fh:
            mdp, fm, _ = load_mdp(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read MDP container {path}: {exc.strerror}", field="environment.path") from None
    except InvalidInputError as exc:
        raise ConfigError(f"{path}: {exc}", field="environment.path") from None
    if fm is None or fm.shape[0] != mdp.n_states * mdp.n_actions:
        raise ConfigError(f"{path}: needs features with one row per state-action pair",
                          field="environment.path")
    return mdp, fm


def _differential_q_star(mdp: Mdp, tol=1e-12, max_iter=1_000_000):
    """Relative value iteration for the optimal differential values, then the
    exact differential values of the resulting greedy policy."""
    S, A = mdp.n_states, mdp.n_actions
    pflat = mdp.p.reshape(S * A, S)
    q = np.zeros(S * A)
    for _ in range(max_iter):
        v = q.reshape(S, A).max(axis=1)
        nxt = mdp.r_vec + pflat @ v
        nxt -= nxt[0]
        if np.abs(nxt - q).max() < tol:
            q = nxt
            break
        q = nxt
    pi = Policy.deterministic(q.reshape(S, A).argmax(axis=1), A)
    return reward_rate_and_differential_q(mdp, pi)[1]


def kolter_instance(env: dict):
    return make_kolter(env.get("epsilon", 0.01), env.get("d1", 0.5), env.get("gamma", 0.99))
