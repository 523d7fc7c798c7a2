"""Closed-form and iterative fixed points, mean-field dynamics, and the error
bounds the simulations are checked against.

Every learner in :mod:`targetnet_lab.agents` has a mean-field form
``params' = params + alpha * (h(theta) - G(theta) @ params)`` once the target
weights ``theta`` are frozen.  :func:`mean_field_terms` builds ``(G, h)``;
everything else here is derived from it or from the operators ``A, b, C``.

Parameter layouts: ``w`` for the discounted learners, ``[rbar, w]`` for the
average-reward ones and ``[u, w]`` for gradient Q-learning.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .agents import PolicySpec, project_ball
from .errors import InvalidInputError, SingularSystemError
from .features import as_matrix, projection_matrix, spectral_norm, weighted_operator_norm
from .mdp import Mdp, Policy, build_transition_matrix, is_ergodic, stationary_distribution

__all__ = [
    "EvaluationOperators",
    "LinearProblem",
    "FixedPointResult",
    "BoundReport",
    "AverageRewardBoundReport",
    "EigenReport",
    "build_evaluation_operators",
    "evaluation_fixed_point_discounted",
    "evaluation_fixed_point_average",
    "mean_field_terms",
    "expected_dynamics",
    "tracked_solution",
    "w_star_map",
    "mean_field_iterate",
    "control_fixed_point_discounted",
    "gradient_q_fixed_point",
    "diff_q_control_fixed_point",
    "theorem_fixed_point",
    "contraction_probe",
    "theorem2_constants_and_bound",
    "theorem3_constant",
    "theorem3_bound",
    "mspbe",
    "gradient_q_objective",
    "divergence_certificate",
]

SOLVE_TOL = 1e-10
EIG_TOL = 1e-12


@dataclass(frozen=True)
class EvaluationOperators:
    """``A = X^T D (I - gamma P) X``, ``b = X^T D r``, ``C = X^T D X`` and the
    average-reward pair ``Abar = X^T (D - d d^T)(I - P) X``,
    ``bbar = X^T (D - d d^T) r``.  ``A``/``b`` are ``None`` without a discount."""

    A: np.ndarray | None
    b: np.ndarray | None
    C: np.ndarray
    Abar: np.ndarray
    bbar: np.ndarray
    X: np.ndarray
    d: np.ndarray
    P: np.ndarray
    r: np.ndarray
    gamma: float | None

    @property
    def D(self):
        return np.diag(self.d)

    @property
    def K(self):
        return self.X.shape[1]


def build_evaluation_operators(mdp: Mdp, X, mu: Policy, pi: Policy, gamma=None, d=None) -> EvaluationOperators:
    """Operators for sampling under ``mu`` and bootstrapping with ``pi``.

    ``d`` overrides the sampling distribution (otherwise the stationary
    distribution of the chain induced by ``mu``).
    """
    X = as_matrix(X)
    if X.shape[0] != mdp.n_pairs:
        raise InvalidInputError(f"feature matrix has {X.shape[0]} rows, MDP has {mdp.n_pairs} state-action pairs")
    gamma = mdp.gamma if gamma is None else gamma
    P = build_transition_matrix(mdp, pi)
    if d is None:
        P_mu = build_transition_matrix(mdp, mu)
        if not is_ergodic(P_mu):
            raise InvalidInputError("the chain induced by the behavior policy is not ergodic")
        d = stationary_distribution(P_mu)
    d = np.asarray(d, dtype=float)
    r = mdp.r_vec
    XtD = X.T * d[None, :]
    C = XtD @ X
    n = len(d)
    if gamma is None:
        A = b = None
    else:
        A = XtD @ (np.eye(n) - gamma * P) @ X
        b = XtD @ r
    centered = XtD - np.outer(X.T @ d, d)
    Abar = centered @ (np.eye(n) - P) @ X
    bbar = centered @ r
    return EvaluationOperators(A, b, C, Abar, bbar, X, d, P, r, gamma)


def _solve_checked(M, rhs, what):
    if not np.all(np.isfinite(M)) or np.linalg.cond(M) > 1e14:
        raise SingularSystemError(f"{what} is singular")
    x = np.linalg.solve(M, rhs)
    res = np.linalg.norm(M @ x - rhs)
    if res > SOLVE_TOL * max(1.0, np.linalg.norm(rhs)):
        # one step of iterative refinement
        x = x + np.linalg.solve(M, rhs - M @ x)
    return x


def evaluation_fixed_point_discounted(ops: EvaluationOperators, eta=0.0):
    """Unique solution of ``(A + eta I) w = b``."""
    if ops.A is None:
        raise InvalidInputError("discounted fixed point needs operators built with a discount")
    return _solve_checked(ops.A + eta * np.eye(ops.K), ops.b, "A + eta I")


def evaluation_fixed_point_average(ops: EvaluationOperators, eta=0.0):
    """``(Abar + eta I) w = bbar`` and ``rbar* = d^T (r + P X w - X w)``."""
    w = _solve_checked(ops.Abar + eta * np.eye(ops.K), ops.bbar, "Abar + eta I")
    Xw = ops.X @ w
    return w, float(ops.d @ (ops.r + ops.P @ Xw - Xw))


# ---------------------------------------------------------------------------
# problems with parameter-dependent policies


@dataclass(frozen=True)
class LinearProblem:
    """An MDP, features, and the rules producing behavior and target policies.

    ``d`` pins the sampling distribution (as in Kolter's example) instead of
    deriving it from the behavior policy.
    """

    mdp: Mdp
    X: np.ndarray
    behavior: PolicySpec
    target: PolicySpec
    gamma: float | None = None
    d: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "X", as_matrix(self.X))
        if self.gamma is None and self.mdp.gamma is not None:
            object.__setattr__(self, "gamma", self.mdp.gamma)

    @property
    def K(self):
        return self.X.shape[1]

    @property
    def n_actions(self):
        return self.mdp.n_actions

    def policies(self, theta_w):
        mu = self.behavior.policy(self.X, theta_w, self.n_actions)
        pi = self.target.policy(self.X, theta_w, self.n_actions)
        return mu, pi

    def operators(self, theta_w=None) -> EvaluationOperators:
        if theta_w is None:
            theta_w = np.zeros(self.K)
        mu, pi = self.policies(np.asarray(theta_w, dtype=float))
        return build_evaluation_operators(self.mdp, self.X, mu, pi, self.gamma, self.d)


def _layout(alg):
    if alg in ("alg2_diff_q_eval", "alg5_diff_q_learning", "baseline_diff_td", "baseline_diff_q"):
        return "stacked"
    if alg == "alg4_gradient_q":
        return "gradient"
    return "plain"


def _theta_w(alg, theta):
    return theta[1:] if _layout(alg) == "stacked" else theta


def mean_field_terms(alg, problem: LinearProblem, theta, eta):
    """``(G, h)`` with mean increment ``h - G @ params`` for frozen ``theta``.

    For the baselines ``theta`` plays the role of the current weights (their
    bootstrap and, in control, their policies come from ``w`` itself); the
    returned pair is then the linearization at that point.
    """
    theta = np.asarray(theta, dtype=float)
    K = problem.K
    ops = problem.operators(_theta_w(alg, theta))
    X, d, P, r = ops.X, ops.d, ops.P, ops.r
    XtD = X.T * d[None, :]
    eyeK = np.eye(K)
    if alg in ("alg1_q_eval", "alg1_td_variant", "alg3_q_learning"):
        g = problem.gamma
        return ops.C + eta * eyeK, XtD @ (r + g * P @ (X @ theta))
    if alg in ("alg2_diff_q_eval", "alg5_diff_q_learning"):
        th_r, th_w = theta[0], theta[1:]
        Xth = X @ th_w
        G = np.zeros((K + 1, K + 1))
        G[0, 0] = 1.0
        G[1:, 1:] = ops.C + eta * eyeK
        h = np.concatenate([[d @ (r + P @ Xth - Xth)], XtD @ (r - th_r + P @ Xth)])
        return G, h
    if alg == "alg4_gradient_q":
        G = np.block([[ops.C, ops.A], [-ops.A.T, eta * eyeK]])
        return G, np.concatenate([ops.b, np.zeros(K)])
    if alg in ("baseline_td_ridge", "baseline_q_ridge"):
        return ops.A + eta * eyeK, ops.b
    if alg in ("baseline_diff_td", "baseline_diff_q"):
        G = np.zeros((K + 1, K + 1))
        G[0, 0] = 1.0
        G[0, 1:] = d @ (np.eye(len(d)) - P) @ X
        G[1:, 0] = X.T @ d
        G[1:, 1:] = ops.Abar + np.outer(X.T @ d, d @ (np.eye(len(d)) - P) @ X) + eta * eyeK
        h = np.concatenate([[d @ r], XtD @ r])
        return G, h
    raise InvalidInputError(f"unknown algorithm {alg!r}")


def expected_dynamics(alg, problem: LinearProblem, theta, params, eta):
    """Mean increment of the tracked parameters at frozen ``theta``."""
    G, h = mean_field_terms(alg, problem, theta, eta)
    return h - G @ np.asarray(params, dtype=float)


def tracked_solution(alg, problem: LinearProblem, theta, eta, r1=math.inf):
    """Zero of the mean increment: the point the fast iterate tracks."""
    theta = project_ball(np.asarray(theta, dtype=float), r1)
    G, h = mean_field_terms(alg, problem, theta, eta)
    return _solve_checked(G, h, "mean-field gain matrix")


def _comparable(alg, params):
    """The part of the tracked parameters the target network follows."""
    return params[len(params) // 2:] if _layout(alg) == "gradient" else params


def w_star_map(alg, problem: LinearProblem, theta, eta, r1=math.inf):
    """Tracked solution for frozen ``theta``, in the target network's space."""
    return _comparable(alg, tracked_solution(alg, problem, theta, eta, r1))


def _initial_params(alg, K):
    return np.zeros(2 * K if _layout(alg) == "gradient" else (K + 1 if _layout(alg) == "stacked" else K))


def mean_field_iterate(alg, problem: LinearProblem, eta, theta0=None, params0=None, beta=0.5,
                       tol=1e-12, max_iter=100_000, max_inner=1_000_000):
    """Deterministic two-timescale iteration of the expected updates.

    Each outer step freezes ``theta`` and applies
    ``params += alpha * expected_dynamics`` until the increment vanishes
    (``alpha`` chosen from the spectrum of ``G`` so the inner map
    contracts), then moves the target: ``theta += beta * (params - theta)``.
    Returns ``(theta, params, n_outer)``.
    """
    K = problem.K
    params = _initial_params(alg, K) if params0 is None else np.array(params0, dtype=float)
    theta = _comparable(alg, params).copy() if theta0 is None else np.array(theta0, dtype=float)
    for it in range(1, max_iter + 1):
        G, h = mean_field_terms(alg, problem, theta, eta)
        lam = np.linalg.eigvals(G)
        if (lam.real <= 0).any():
            raise SingularSystemError("mean-field gain has an eigenvalue with nonpositive real part")
        alpha = float(np.min(lam.real / np.abs(lam) ** 2))
        inc = h - G @ params
        for _ in range(max_inner):
            params = params + alpha * inc
            inc = h - G @ params
            if np.linalg.norm(inc) <= tol:
                break
        new_theta = theta + beta * (_comparable(alg, params) - theta)
        step = np.linalg.norm(new_theta - theta)
        theta = new_theta
        if step < tol:
            return theta, params, it
    return theta, params, max_iter


# ---------------------------------------------------------------------------
# control fixed points


@dataclass
class FixedPointResult:
    w: np.ndarray
    residual: float
    certified: bool
    iterations: int
    rbar: float | None = None
    starts_agree: bool = True
    message: str = ""
    extra: dict = field(default_factory=dict)


def _fixed_point_iteration(f, x0, tol, max_iter, damp_after=10_000):
    x = np.array(x0, dtype=float)
    damping = 1.0
    best = math.inf
    stalled = 0
    for it in range(1, max_iter + 1):
        fx = f(x)
        nxt = x + damping * (fx - x)
        step = np.linalg.norm(nxt - x)
        if not np.all(np.isfinite(nxt)):
            return x, False, it
        if step <= tol:
            return nxt, True, it
        if step < best:
            best = step
            stalled = 0
        else:
            stalled += 1
        if damping == 1.0 and stalled >= damp_after:
            damping = 0.5
            stalled = 0
        x = nxt
    return x, False, max_iter


def _starts(dim, n_random, radius, seed):
    rng = np.random.default_rng(seed)
    out = [np.zeros(dim)]
    for _ in range(n_random):
        v = rng.standard_normal(dim)
        out.append(v / np.linalg.norm(v) * radius)
    return out


def _multistart(alg, problem, eta, residual_fn, tol, max_iter, n_random, radius, seed, agree_tol=1e-8):
    K = problem.K
    dim = K + 1 if _layout(alg) == "stacked" else K

    def f(theta):
        return w_star_map(alg, problem, theta, eta)

    results = []
    for x0 in _starts(dim, n_random, radius, seed):
        x, ok, it = _fixed_point_iteration(f, x0, tol, max_iter)
        results.append((x, ok, it))
    x, ok, it = results[0]
    agree = all(r[1] and np.linalg.norm(r[0] - x) <= agree_tol for r in results)
    res = residual_fn(x)
    certified = ok and agree and res <= 1e-8
    msg = "" if certified else "no certified fixed point"
    return x, res, certified, it, agree, msg


def control_fixed_point_discounted(problem: LinearProblem, eta, tol=1e-10, max_iter=1_000_000,
                                   n_random_starts=4, start_radius=1.0, seed=0) -> FixedPointResult:
    """Iterate ``f(theta) = (X^T D_theta X + eta I)^{-1} X^T D_theta (r + gamma P_theta X theta)``."""

    def residual(w):
        ops = problem.operators(w)
        return float(np.linalg.norm((ops.A + eta * np.eye(problem.K)) @ w - ops.b))

    w, res, ok, it, agree, msg = _multistart("alg3_q_learning", problem, eta, residual, tol, max_iter,
                                             n_random_starts, start_radius, seed)
    return FixedPointResult(w, res, ok, it, None, agree, msg)


def gradient_q_fixed_point(problem: LinearProblem, eta, tol=1e-10, max_iter=1_000_000,
                           n_random_starts=4, start_radius=1.0, seed=0) -> FixedPointResult:
    """Self-consistent solution of ``(A^T C^-1 A + eta I) w = A^T C^-1 b``."""

    def residual(w):
        ops = problem.operators(w)
        M = ops.A.T @ np.linalg.solve(ops.C, ops.A) + eta * np.eye(problem.K)
        return float(np.linalg.norm(M @ w - ops.A.T @ np.linalg.solve(ops.C, ops.b)))

    w, res, ok, it, agree, msg = _multistart("alg4_gradient_q", problem, eta, residual, tol, max_iter,
                                             n_random_starts, start_radius, seed)
    return FixedPointResult(w, res, ok, it, None, agree, msg)


def diff_q_control_fixed_point(problem: LinearProblem, eta, tol=1e-10, max_iter=1_000_000,
                               n_random_starts=4, start_radius=1.0, seed=0) -> FixedPointResult:
    """Stacked ``[rbar; w]`` fixed point; ``w`` solves ``(Abar_w + eta I) w = bbar_w``."""

    def residual(u):
        ops = problem.operators(u[1:])
        w = u[1:]
        res_w = np.linalg.norm((ops.Abar + eta * np.eye(problem.K)) @ w - ops.bbar)
        Xw = ops.X @ w
        res_r = abs(u[0] - ops.d @ (ops.r + ops.P @ Xw - Xw))
        return float(max(res_w, res_r))

    u, res, ok, it, agree, msg = _multistart("alg5_diff_q_learning", problem, eta, residual, tol, max_iter,
                                             n_random_starts, start_radius, seed)
    return FixedPointResult(u[1:], res, ok, it, float(u[0]), agree, msg)


def theorem_fixed_point(alg, problem: LinearProblem, eta, **kw) -> FixedPointResult:
    """The fixed point each target-network learner provably converges to."""
    if alg in ("alg1_q_eval", "alg1_td_variant", "baseline_td_ridge"):
        ops = problem.operators()
        w = evaluation_fixed_point_discounted(ops, eta)
        res = float(np.linalg.norm((ops.A + eta * np.eye(problem.K)) @ w - ops.b))
        return FixedPointResult(w, res, res <= SOLVE_TOL, 0)
    if alg in ("alg2_diff_q_eval", "baseline_diff_td"):
        ops = problem.operators()
        w, rbar = evaluation_fixed_point_average(ops, eta)
        res = float(np.linalg.norm((ops.Abar + eta * np.eye(problem.K)) @ w - ops.bbar))
        return FixedPointResult(w, res, res <= SOLVE_TOL, 0, rbar)
    if alg in ("alg3_q_learning", "baseline_q_ridge"):
        return control_fixed_point_discounted(problem, eta, **kw)
    if alg == "alg4_gradient_q":
        return gradient_q_fixed_point(problem, eta, **kw)
    if alg in ("alg5_diff_q_learning", "baseline_diff_q"):
        return diff_q_control_fixed_point(problem, eta, **kw)
    raise InvalidInputError(f"unknown algorithm {alg!r}")


def contraction_probe(alg, problem: LinearProblem, eta, n_pairs=100, scale=1.0, seed=0):
    """Largest observed ``||w*(t1) - w*(t2)|| / ||t1 - t2||`` over random pairs."""
    rng = np.random.default_rng(seed)
    dim = problem.K + 1 if _layout(alg) == "stacked" else problem.K
    worst = 0.0
    for _ in range(n_pairs):
        t1, t2 = rng.standard_normal((2, dim)) * scale
        gap = np.linalg.norm(t1 - t2)
        diff = np.linalg.norm(w_star_map(alg, problem, t1, eta) - w_star_map(alg, problem, t2, eta))
        worst = max(worst, diff / gap)
    return worst


# ---------------------------------------------------------------------------
# bounds


@dataclass
class BoundReport:
    xi: float
    eta: float
    C0: float
    C1: float
    X_norm: float
    P_norm_D: float
    preconditions_met: bool
    bound_value: float
    achieved_error: float

    @property
    def holds(self):
        return self.achieved_error <= self.bound_value

    def to_dict(self):
        return asdict(self)


def _sigma_factor(X, d):
    sv = np.linalg.svd(X, compute_uv=False)
    smin = sv[-1] if X.shape[1] <= X.shape[0] else 0.0
    if smin <= 0:
        return math.inf
    return sv[0] ** 2 / (smin ** 4 * np.min(d) ** 2.5)


def theorem2_constants_and_bound(X, d_mu, P_pi, r, gamma, eta, xi, q_pi, w_star) -> BoundReport:
    """Constants ``C0``, ``C1`` and the value-error bound of the discounted
    evaluation fixed point; never raises, reports instead."""
    X = as_matrix(X)
    d = np.asarray(d_mu, dtype=float)
    P_norm = weighted_operator_norm(P_pi, d)
    sq = math.sqrt(eta) if eta > 0 else 0.0
    C0 = 2.0 * (1.0 - xi) * sq / (gamma * P_norm) if gamma > 0 else math.inf
    C1 = np.linalg.norm(r) / (2.0 * xi * sq) + 1.0 if sq > 0 else math.inf
    Xn = spectral_norm(X)
    q_pi = np.asarray(q_pi, dtype=float)
    try:
        Pi = projection_matrix(X, d, 0.0)
        rep_err = float(np.linalg.norm(Pi @ q_pi - q_pi))
    except SingularSystemError:
        rep_err = math.inf
    bound = (_sigma_factor(X, d) * np.linalg.norm(q_pi) * eta + rep_err) / xi
    met = bool(0 < xi < 1 and eta > 0 and Xn < C0 and math.isfinite(bound))
    achieved = float(np.linalg.norm(X @ np.asarray(w_star) - q_pi))
    return BoundReport(xi, eta, C0, C1, Xn, P_norm, met, float(bound), achieved)


def theorem3_constant(X, d_mu, P_pi, eta, xi):
    """Largest admissible ``||X||`` for the average-reward evaluation bound."""
    d = np.asarray(d_mu, dtype=float)
    n = len(d)
    DP = spectral_norm(d[:, None] * P_pi)
    lip = max(np.linalg.norm(d @ (P_pi - np.eye(n))) + math.sqrt(2) * DP, math.sqrt(2) * np.linalg.norm(d))
    first = (1.0 - xi) / (max(1.0, 1.0 / eta) * lip)
    second = math.sqrt((1.0 - xi) * eta / DP)
    return min(first, second)


@dataclass
class AverageRewardBoundReport:
    xi: float
    eta: float
    C0: float
    X_norm: float
    centered: bool
    preconditions_met: bool
    offset: float
    bound_value: float
    achieved_error: float
    rate_bound: float
    rate_error: float

    @property
    def holds(self):
        return self.achieved_error <= self.bound_value and self.rate_error <= self.rate_bound + 1e-12

    def to_dict(self):
        return asdict(self)


def theorem3_bound(X, d_mu, P_pi, eta, xi, qbar_pi, rbar_pi, w_star, rbar_star) -> AverageRewardBoundReport:
    """Value and reward-rate bounds for the average-reward evaluation fixed point.

    Both sides are evaluated at the offset ``c`` minimizing
    ``||X w - (qbar + c 1)||`` (the mean gap), which attains the infimum in
    the reward-rate bound.
    """
    X = as_matrix(X)
    d = np.asarray(d_mu, dtype=float)
    qbar = np.asarray(qbar_pi, dtype=float)
    Xw = X @ np.asarray(w_star, dtype=float)
    c = float(np.mean(Xw - qbar))
    qc = qbar + c
    gap = float(np.linalg.norm(Xw - qc))
    try:
        Pi = projection_matrix(X, d, 0.0)
        rep_err = float(np.linalg.norm(Pi @ qc - qc))
    except SingularSystemError:
        rep_err = math.inf
    bound = (_sigma_factor(X, d) * np.linalg.norm(qc) * eta + rep_err) / xi
    C0 = theorem3_constant(X, d, P_pi, eta, xi) if eta > 0 else 0.0
    Xn = spectral_norm(X)
    centered = bool(np.abs(X.T @ d).max() <= 1e-10)
    met = bool(centered and 0 < xi < 1 and eta > 0 and Xn < C0 and math.isfinite(bound))
    rate_bound = float(np.linalg.norm(d @ (P_pi - np.eye(len(d)))) * gap)
    return AverageRewardBoundReport(xi, eta, C0, Xn, centered, met, c, float(bound), gap,
                          rate_bound, abs(float(rbar_star) - float(rbar_pi)))


def mspbe(w, ops: EvaluationOperators) -> float:
    """``||A w - b||^2`` in the ``C^{-1}`` norm."""
    if np.linalg.matrix_rank(ops.C) < ops.K:
        raise SingularSystemError("C = X^T D X is singular")
    e = ops.A @ np.asarray(w, dtype=float) - ops.b
    return float(e @ np.linalg.solve(ops.C, e))


def gradient_q_objective(problem: LinearProblem, w, theta, eta) -> float:
    """Ridge-regularized MSPBE with policies frozen at ``theta``."""
    ops = problem.operators(theta)
    return mspbe(w, ops) + eta * float(np.dot(w, w))


@dataclass
class EigenReport:
    baseline_eigenvalues: np.ndarray
    target_eigenvalues: np.ndarray
    baseline_unstable: bool
    target_unstable: bool
    ridge_threshold: float
    eta: float

    def to_dict(self):
        return {
            "baseline_max_real": float(self.baseline_eigenvalues.real.max()),
            "target_max_real": float(self.target_eigenvalues.real.max()),
            "baseline_unstable": self.baseline_unstable,
            "target_unstable": self.target_unstable,
            "ridge_threshold": self.ridge_threshold,
            "eta": self.eta,
        }


def divergence_certificate(ops: EvaluationOperators, eta) -> EigenReport:
    """Spectra of the baseline Jacobian ``-(A + eta I)`` and the target-network
    main-network Jacobian ``-(C + eta I)``, plus the ridge weight above which
    the baseline is certified stable (``||X||^2 ||D (I - gamma P)||``)."""
    K = ops.K
    base = np.linalg.eigvals(-(ops.A + eta * np.eye(K)))
    targ = np.linalg.eigvalsh(-(ops.C + eta * np.eye(K)))
    n = len(ops.d)
    thr = spectral_norm(ops.X) ** 2 * spectral_norm(ops.d[:, None] * (np.eye(n) - ops.gamma * ops.P))
    # zero eigenvalues of a singular C come back as rounding noise
    tol = EIG_TOL * max(1.0, spectral_norm(ops.C))
    return EigenReport(base, targ.astype(complex), bool((base.real > tol).any()),
                       bool((targ > tol).any()), float(thr), float(eta))
