"""Online learners with a target network, their semi-gradient baselines, and
the policy and learning-rate helpers they share.

Every step function is pure: it maps ``(LearnerState, config, transition,
rates)`` to a new ``LearnerState``.  Arrays may carry a leading batch axis
(one row per independent run); all arithmetic is row-wise, so a run's
trajectory does not depend on which other runs share its batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, InvalidInputError
from .features import as_matrix
from .mdp import Policy

__all__ = [
    "ALGORITHMS",
    "TARGET_ALGORITHMS",
    "BASELINES",
    "AVERAGE_REWARD",
    "CONTROL",
    "Schedule",
    "ScheduleReport",
    "check_schedules",
    "PolicySpec",
    "AlgorithmConfig",
    "LearnerState",
    "Transition",
    "project_ball",
    "target_update",
    "greedy_policy",
    "softmax_policy",
    "mixture_policy",
    "greedy_probs",
    "softmax_probs",
    "step_alg1",
    "step_alg1_td_variant",
    "step_alg2",
    "step_alg3",
    "step_alg4",
    "step_alg5",
    "step_baseline",
    "step",
]

TARGET_ALGORITHMS = (
    "alg1_q_eval",
    "alg1_td_variant",
    "alg2_diff_q_eval",
    "alg3_q_learning",
    "alg4_gradient_q",
    "alg5_diff_q_learning",
)
BASELINES = ("baseline_td_ridge", "baseline_q_ridge", "baseline_diff_td", "baseline_diff_q")
ALGORITHMS = TARGET_ALGORITHMS + BASELINES
AVERAGE_REWARD = ("alg2_diff_q_eval", "alg5_diff_q_learning", "baseline_diff_td", "baseline_diff_q")
CONTROL = ("alg3_q_learning", "alg4_gradient_q", "alg5_diff_q_learning", "baseline_q_ridge", "baseline_diff_q")

TIE_TOL = 1e-12


def _dot(a, b):
    return np.sum(a * b, axis=-1)


# ---------------------------------------------------------------------------
# learning rates


@dataclass(frozen=True)
class Schedule:
    """``constant``: ``scale``; ``polynomial``: ``scale * (t + 1) ** -exponent``."""

    kind: str = "constant"
    scale: float = 0.01
    exponent: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "polynomial"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}", field="kind")
        if not self.scale > 0:
            raise ConfigError("schedule scale must be positive", field="scale")
        if self.kind == "polynomial" and self.exponent < 0:
            raise ConfigError("polynomial exponent must be nonnegative", field="exponent")

    @classmethod
    def constant(cls, value):
        return cls("constant", value)

    @classmethod
    def polynomial(cls, scale, exponent):
        return cls("polynomial", scale, exponent)

    def __call__(self, t):
        if self.kind == "constant":
            return self.scale
        return self.scale * (t + 1.0) ** (-self.exponent)


@dataclass(frozen=True)
class ScheduleReport:
    status: str  # "pass" | "fail" | "experiment"
    messages: tuple = ()

    @property
    def ok(self):
        return self.status != "fail"


def check_schedules(alpha: Schedule, beta: Schedule) -> ScheduleReport:
    """Certify the step-size conditions from the exponents alone.

    A sequence ``(t+1)^-p`` is non-summable iff ``p <= 1`` and square-summable
    iff ``p > 1/2``.  ``sum (beta/alpha)^d`` converges for some ``d > 0``
    exactly when the beta exponent exceeds the alpha exponent (take any
    ``d > 1/(q - p)``).  Constant rates are accepted in experiment mode only.
    """
    if alpha.kind == "constant" or beta.kind == "constant":
        return ScheduleReport("experiment", ("constant learning rate: experiment mode, no convergence guarantee",))
    failures = []
    for name, sch in (("alpha", alpha), ("beta", beta)):
        if not 0.5 < sch.exponent <= 1.0:
            failures.append(f"{name} exponent {sch.exponent} violates 1/2 < p <= 1 "
                            "(needs a non-summable, square-summable sequence)")
    gap = beta.exponent - alpha.exponent
    if gap <= 0:
        failures.append("beta must decay strictly faster than alpha for sum (beta/alpha)^d < inf")
    if failures:
        return ScheduleReport("fail", tuple(failures))
    return ScheduleReport("pass", (f"ratio condition holds for any d > {1.0 / gap:.6g}",))


# ---------------------------------------------------------------------------
# policies


def _rows(X, n_actions, theta):
    """Action values ``x(s, .)^T theta`` with shape ``(..., S, A)``."""
    X = as_matrix(X)
    q = np.tensordot(np.asarray(theta, dtype=float), X.T, axes=([-1], [0]))
    return q.reshape(q.shape[:-1] + (-1, n_actions))


def greedy_probs(q):
    """Uniform over the (tolerance-)maximizing entries of the last axis."""
    q = np.asarray(q, dtype=float)
    mask = q >= q.max(axis=-1, keepdims=True) - TIE_TOL
    return mask / mask.sum(axis=-1, keepdims=True)


def softmax_probs(q, tau=1.0):
    if not tau > 0:
        raise InvalidInputError("softmax temperature must be positive")
    z = (np.asarray(q, dtype=float) - np.max(q, axis=-1, keepdims=True)) / tau
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def greedy_policy(X, theta, n_actions) -> Policy:
    theta = np.asarray(theta, dtype=float)
    return Policy(greedy_probs(_rows(X, n_actions, theta)), "greedy", {"theta": theta.copy()})


def softmax_policy(X, theta, n_actions, tau=1.0) -> Policy:
    theta = np.asarray(theta, dtype=float)
    return Policy(softmax_probs(_rows(X, n_actions, theta), tau), "softmax", {"theta": theta.copy(), "tau": tau})


def mixture_policy(p_fixed: Policy, p_soft: Policy, epsilon_mix) -> Policy:
    """``(1 - epsilon_mix) * p_fixed + epsilon_mix * p_soft``."""
    if not 0.0 <= epsilon_mix <= 1.0:
        raise InvalidInputError("mixture weight must lie in [0, 1]")
    table = (1.0 - epsilon_mix) * p_fixed.table + epsilon_mix * p_soft.table
    return Policy(table, "mixture", {"weights": (1.0 - epsilon_mix, epsilon_mix),
                                     "components": (p_fixed, p_soft)})


@dataclass(frozen=True)
class PolicySpec:
    """How a behavior or target policy is obtained from the parameters.

    ``fixed`` ignores the parameters, ``greedy``/``softmax`` act on
    ``x(s, .)^T theta``, ``mixture`` is ``(1 - weight) * fixed + weight *
    softmax``.
    """

    kind: str = "fixed"
    fixed: Policy | None = None
    weight: float = 0.0
    tau: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "greedy", "softmax", "mixture"):
            raise ConfigError(f"unknown policy kind {self.kind!r}", field="kind")
        if self.kind in ("fixed", "mixture") and self.fixed is None:
            raise ConfigError(f"policy kind {self.kind!r} needs a fixed component", field="fixed")
        if not 0.0 <= self.weight <= 1.0:
            raise ConfigError("mixture weight must lie in [0, 1]", field="weight")
        if not self.tau > 0:
            raise ConfigError("temperature must be positive", field="tau")

    @property
    def depends_on_params(self):
        return self.kind != "fixed"

    def probs(self, s, q):
        """Action probabilities at states ``s`` given action values ``q`` (..., A)."""
        if self.kind == "fixed":
            return self.fixed.table[s]
        if self.kind == "greedy":
            return greedy_probs(q)
        soft = softmax_probs(q, self.tau)
        if self.kind == "softmax":
            return soft
        return (1.0 - self.weight) * self.fixed.table[s] + self.weight * soft

    def policy(self, X, theta, n_actions) -> Policy:
        if self.kind == "fixed":
            return self.fixed
        if self.kind == "greedy":
            return greedy_policy(X, theta, n_actions)
        soft = softmax_policy(X, theta, n_actions, self.tau)
        if self.kind == "softmax":
            return soft
        return mixture_policy(self.fixed, soft, self.weight)


# ---------------------------------------------------------------------------
# configuration and state


@dataclass(frozen=True)
class AlgorithmConfig:
    """One learner's hyper-parameters.  ``r1 = r2 = inf`` disables projections."""

    algorithm: str
    eta: float = 0.0
    r1: float = math.inf
    r2: float = math.inf
    alpha: Schedule = field(default_factory=lambda: Schedule.constant(0.01))
    beta: Schedule = field(default_factory=lambda: Schedule.constant(0.01))
    behavior: PolicySpec | None = None
    target: PolicySpec | None = None
    tau: float = 1.0
    gamma: float | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}", field="algorithm")
        # eta may be a per-run column (B, 1) when runs are batched
        if np.any(np.asarray(self.eta) < 0):
            raise ConfigError("ridge weight eta must be nonnegative", field="eta")
        if self.projections_enabled and not (self.r1 > self.r2 > 0):
            raise ConfigError("projection radii must satisfy R_B1 > R_B2 > 0", field="projection")
        if self.tau <= 0:
            raise ConfigError("softmax temperature must be positive", field="tau")

    @property
    def projections_enabled(self):
        return math.isfinite(self.r1) or math.isfinite(self.r2)

    @property
    def average_reward(self):
        return self.algorithm in AVERAGE_REWARD

    @property
    def uses_target(self):
        return self.algorithm in TARGET_ALGORITHMS

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class LearnerState:
    """Main weights ``w``, target ``theta`` (stacked ``[theta_r; theta_w]`` in
    the average-reward learners), reward rate ``rbar``, auxiliary ``u`` and
    the step counter.  ``s``/``a`` hold the pair about to be executed."""

    w: np.ndarray
    theta: np.ndarray
    rbar: np.ndarray | float = 0.0
    u: np.ndarray | None = None
    t: int = 0
    s: np.ndarray | int | None = None
    a: np.ndarray | int | None = None

    @classmethod
    def initial(cls, cfg: AlgorithmConfig, w0, rbar0=0.0, theta0=None, s=None, a=None):
        w0 = np.array(w0, dtype=float)
        rbar0 = np.asarray(rbar0, dtype=float) + np.zeros(w0.shape[:-1])
        if theta0 is None:
            theta0 = np.concatenate([rbar0[..., None], w0], axis=-1) if cfg.average_reward else w0.copy()
        theta0 = project_ball(np.array(theta0, dtype=float), cfg.r1)
        u0 = np.zeros_like(w0) if cfg.algorithm == "alg4_gradient_q" else None
        return cls(w0, theta0, rbar0 if rbar0.ndim else float(rbar0), u0, 0, s, a)

    @property
    def theta_r(self):
        return self.theta[..., 0]

    @property
    def theta_w(self):
        return self.theta[..., 1:]


@dataclass(frozen=True)
class Transition:
    """Data for one update.

    ``x`` is the executed pair's feature, ``x_next`` the bootstrap feature
    (expected next feature under the target policy, or the next state's
    feature in the state-value variant), ``next_rows`` the next state's
    per-action features for max-bootstraps, and ``rho`` the importance ratio.
    """

    x: np.ndarray
    reward: np.ndarray | float
    x_next: np.ndarray | None = None
    next_rows: np.ndarray | None = None
    rho: np.ndarray | float = 1.0


# ---------------------------------------------------------------------------
# projections and the target update


def project_ball(x, R):
    """Euclidean projection of the last axis onto the ball of radius ``R``."""
    x = np.asarray(x, dtype=float)
    if not math.isfinite(R):
        return x
    if R <= 0:
        raise InvalidInputError("ball radius must be positive")
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    scale = np.where(n > R, R / np.where(n > 0, n, 1.0), 1.0)
    return x * scale


def target_update(theta, w, beta, r1=math.inf, r2=math.inf):
    """``Gamma_B1(theta + beta * (Gamma_B2(w) - theta))``."""
    if (math.isfinite(r1) or math.isfinite(r2)) and not r1 > r2 > 0:
        raise ConfigError("projection radii must satisfy R_B1 > R_B2 > 0", field="projection")
    beta = np.asarray(beta, dtype=float)
    if beta.ndim:
        beta = beta[..., None]
    return project_ball(theta + beta * (project_ball(w, r2) - theta), r1)


def _rate(x, v):
    """Broadcast a per-run scalar against feature vectors."""
    v = np.asarray(v, dtype=float)
    return v[..., None] if v.ndim else v


def _max_next(rows, theta):
    return np.max(np.sum(rows * theta[..., None, :], axis=-1), axis=-1)


def _gamma(cfg):
    if cfg.gamma is None:
        raise ConfigError("a discounted learner needs gamma", field="gamma")
    return cfg.gamma


# ---------------------------------------------------------------------------
# target-network learners


def _ridge_td_step(state, cfg, tr, alpha, beta, bootstrap):
    delta = tr.reward + _gamma(cfg) * bootstrap - _dot(tr.x, state.w)
    w = state.w + alpha * _rate(tr.x, tr.rho * delta) * tr.x - alpha * cfg.eta * state.w
    theta = target_update(state.theta, state.w, beta, cfg.r1, cfg.r2)
    return replace(state, w=w, theta=theta, t=state.t + 1)


def step_alg1(state, cfg, tr, alpha, beta):
    """Q-evaluation with a target network (expected-SARSA bootstrap on theta)."""
    return _ridge_td_step(state, cfg, replace(tr, rho=1.0), alpha, beta, _dot(tr.x_next, state.theta))


def step_alg1_td_variant(state, cfg, tr, alpha, beta):
    """State-value form with per-step importance ratio ``tr.rho``.

    The ratio multiplies the TD term only; the ridge shrinkage is unweighted.
    """
    rho = np.asarray(tr.rho, dtype=float)
    if not np.all(np.isfinite(rho)):
        raise InvalidInputError("importance ratio undefined: behavior probability of the taken action is zero")
    return _ridge_td_step(state, cfg, tr, alpha, beta, _dot(tr.x_next, state.theta))


def _diff_step(state, cfg, tr, alpha, beta, boot_next):
    """Shared body of the two average-reward learners.

    ``boot_next`` is the next-state value under the target weights.
    """
    theta_r, theta_w = state.theta_r, state.theta_w
    delta = tr.reward - theta_r + boot_next - _dot(tr.x, state.w)
    w = state.w + alpha * _rate(tr.x, delta) * tr.x - alpha * cfg.eta * state.w
    delta_r = tr.reward + boot_next - _dot(tr.x, theta_w) - state.rbar
    rbar = state.rbar + alpha * delta_r
    stacked = np.concatenate([np.asarray(state.rbar, dtype=float)[..., None], state.w], axis=-1)
    theta = target_update(state.theta, stacked, beta, cfg.r1, cfg.r2)
    return replace(state, w=w, theta=theta, rbar=rbar, t=state.t + 1)


def step_alg2(state, cfg, tr, alpha, beta):
    """Differential Q-evaluation with a stacked ``[theta_r; theta_w]`` target."""
    return _diff_step(state, cfg, tr, alpha, beta, _dot(tr.x_next, state.theta_w))


def step_alg3(state, cfg, tr, alpha, beta):
    """Q-learning with a target network: max-bootstrap on theta."""
    return _ridge_td_step(state, cfg, replace(tr, rho=1.0), alpha, beta, _max_next(tr.next_rows, state.theta))


def step_alg4(state, cfg, tr, alpha, beta):
    """Gradient Q-learning with a target network.

    ``tr.x_next`` must be the expected next feature under the softmax policy
    of the current target weights.  The TD error bootstraps from ``w``.
    """
    g = _gamma(cfg)
    delta = tr.reward + g * _dot(tr.x_next, state.w) - _dot(tr.x, state.w)
    xu = _dot(tr.x, state.u)
    u = state.u + alpha * _rate(tr.x, delta - xu) * tr.x
    w = state.w + alpha * (tr.x - g * tr.x_next) * _rate(tr.x, xu) - alpha * cfg.eta * state.w
    theta = target_update(state.theta, state.w, beta, cfg.r1, cfg.r2)
    return replace(state, w=w, u=u, theta=theta, t=state.t + 1)


def step_alg5(state, cfg, tr, alpha, beta):
    """Differential Q-learning with a stacked target network."""
    return _diff_step(state, cfg, tr, alpha, beta, _max_next(tr.next_rows, state.theta_w))


# ---------------------------------------------------------------------------
# semi-gradient baselines (bootstrap from w itself)


def step_baseline(state, cfg, tr, alpha, beta=None):
    alg = cfg.algorithm
    w = state.w
    if alg == "baseline_td_ridge":
        delta = tr.reward + _gamma(cfg) * _dot(tr.x_next, w) - _dot(tr.x, w)
        w_new = w + alpha * _rate(tr.x, tr.rho * delta) * tr.x - alpha * cfg.eta * w
        return replace(state, w=w_new, theta=w_new, t=state.t + 1)
    if alg == "baseline_q_ridge":
        delta = tr.reward + _gamma(cfg) * _max_next(tr.next_rows, w) - _dot(tr.x, w)
        w_new = w + alpha * _rate(tr.x, delta) * tr.x - alpha * cfg.eta * w
        return replace(state, w=w_new, theta=w_new, t=state.t + 1)
    if alg == "baseline_diff_td":
        boot = _dot(tr.x_next, w) - _dot(tr.x, w)
        delta = tr.reward - state.rbar + boot
        w_new = w + alpha * _rate(tr.x, delta) * tr.x - alpha * cfg.eta * w
        rbar = state.rbar + alpha * (tr.reward + boot - state.rbar)
    elif alg == "baseline_diff_q":
        delta = tr.reward - state.rbar + _max_next(tr.next_rows, w) - _dot(tr.x, w)
        w_new = w + alpha * _rate(tr.x, delta) * tr.x - alpha * cfg.eta * w
        rbar = state.rbar + alpha * delta
    else:
        raise ConfigError(f"{alg!r} is not a baseline", field="algorithm")
    theta = np.concatenate([np.asarray(rbar, dtype=float)[..., None], w_new], axis=-1)
    return replace(state, w=w_new, rbar=rbar, theta=theta, t=state.t + 1)


_STEPS = {
    "alg1_q_eval": step_alg1,
    "alg1_td_variant": step_alg1_td_variant,
    "alg2_diff_q_eval": step_alg2,
    "alg3_q_learning": step_alg3,
    "alg4_gradient_q": step_alg4,
    "alg5_diff_q_learning": step_alg5,
}


def step(state, cfg, tr, alpha, beta):
    """Dispatch on ``cfg.algorithm``."""
    fn = _STEPS.get(cfg.algorithm)
    if fn is None:
        return step_baseline(state, cfg, tr, alpha)
    return fn(state, cfg, tr, alpha, beta)
