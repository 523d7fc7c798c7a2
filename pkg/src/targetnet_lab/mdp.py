"""Finite MDPs, the Markov chains they induce, and exact value functions.

State-action pairs are flattened as ``index = s * n_actions + a``; every
|S||A|-sized vector or matrix in the package uses this layout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import InvalidInputError, NoStationaryDistributionError

__all__ = [
    "Mdp",
    "Policy",
    "StateActionDist",
    "sa_index",
    "build_transition_matrix",
    "stationary_distribution",
    "is_ergodic",
    "exact_q_pi",
    "exact_q_star",
    "reward_rate_and_differential_q",
    "sample_transition",
    "sample_index",
    "state_value_reduction",
]

PROB_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def sa_index(s, a, n_actions):
    return s * n_actions + a


@dataclass(frozen=True)
class Mdp:
    """Finite MDP with deterministic rewards ``r[s, a]``.

    ``gamma`` is ``None`` for problems only used in the average-reward setting.
    """

    p: np.ndarray
    r: np.ndarray
    gamma: float | None = None

    def __post_init__(self):
        p = _frozen(self.p)
        r = _frozen(self.r)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise InvalidInputError(f"transition tensor must have shape (S, A, S), got {p.shape}")
        if r.shape != p.shape[:2]:
            raise InvalidInputError(f"reward table must have shape {p.shape[:2]}, got {r.shape}")
        if (p < 0).any() or not np.allclose(p.sum(axis=2), 1.0, rtol=0, atol=PROB_TOL):
            raise InvalidInputError("transition rows must be probability vectors")
        if not np.all(np.isfinite(r)):
            raise InvalidInputError("rewards must be finite")
        if self.gamma is not None and not 0.0 <= self.gamma < 1.0:
            raise InvalidInputError(f"gamma must lie in [0, 1), got {self.gamma}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "r", r)

    @property
    def n_states(self):
        return self.p.shape[0]

    @property
    def n_actions(self):
        return self.p.shape[1]

    @property
    def n_pairs(self):
        return self.n_states * self.n_actions

    @property
    def r_vec(self):
        """Rewards as a flat |S||A| vector."""
        return self.r.reshape(-1)

    def with_gamma(self, gamma):
        return Mdp(self.p, self.r, gamma)


@dataclass(frozen=True)
class Policy:
    """Row-stochastic table ``table[s, a]`` plus a record of how it was built.

    ``kind`` is one of ``fixed``, ``softmax``, ``greedy`` or ``mixture``;
    ``params`` keeps whatever produced the table (weights, temperature, ...).
    """

    table: np.ndarray
    kind: str = "fixed"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = _frozen(self.table)
        if t.ndim != 2:
            raise InvalidInputError(f"policy table must be 2-D, got shape {t.shape}")
        if (t < 0).any() or not np.allclose(t.sum(axis=1), 1.0, rtol=0, atol=PROB_TOL):
            raise InvalidInputError("policy rows must be probability vectors")
        if self.kind not in ("fixed", "softmax", "greedy", "mixture"):
            raise InvalidInputError(f"unknown policy kind {self.kind!r}")
        object.__setattr__(self, "table", t)

    @property
    def n_states(self):
        return self.table.shape[0]

    @property
    def n_actions(self):
        return self.table.shape[1]

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions):
        actions = np.asarray(actions)
        table = np.zeros((len(actions), n_actions))
        table[np.arange(len(actions)), actions] = 1.0
        return cls(table)


@dataclass(frozen=True)
class StateActionDist:
    """Probability vector over flattened state-action pairs."""

    d: np.ndarray

    def __post_init__(self):
        d = _frozen(self.d)
        if d.ndim != 1 or (d < 0).any() or abs(d.sum() - 1.0) > PROB_TOL:
            raise InvalidInputError("distribution must be a nonnegative vector summing to one")
        object.__setattr__(self, "d", d)

    @property
    def D(self):
        return np.diag(self.d)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.d, dtype=dtype)

    def __len__(self):
        return len(self.d)


def _check_policy(mdp, pi):
    if pi.table.shape != (mdp.n_states, mdp.n_actions):
        raise InvalidInputError(
            f"policy shape {pi.table.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})"
        )


def build_transition_matrix(mdp: Mdp, pi: Policy) -> np.ndarray:
    """State-action transition matrix ``P[(s,a),(s',a')] = p(s'|s,a) pi(a'|s')``."""
    _check_policy(mdp, pi)
    n = mdp.n_pairs
    P = mdp.p.reshape(n, mdp.n_states)[:, :, None] * pi.table[None, :, :]
    return P.reshape(n, n)


def _as_square(P):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {P.shape}")
    return P


def stationary_distribution(P, tol=1e-10) -> np.ndarray:
    """Solve ``[P^T - I; 1^T] d = [0; 1]`` for the stationary distribution.

    The augmented system is solved through its normal equations; power
    iteration takes over when that solve is too ill-conditioned to meet ``tol``.
    """
    P = _as_square(P)
    n = P.shape[0]
    M = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    if np.linalg.matrix_rank(M) < n:
        raise NoStationaryDistributionError("augmented system is singular; the chain has no unique stationary distribution")
    d = np.linalg.solve(M.T @ M, M.T @ rhs)
    if np.abs(d @ P - d).max() > tol or (d < -tol).any():
        d = _power_iteration(P, tol)
    d = np.clip(d, 0.0, None)
    return d / d.sum()


def _power_iteration(P, tol, max_iter=1_000_000):
    n = P.shape[0]
    # lazy chain: same stationary law, never periodic
    L = 0.5 * (P + np.eye(n))
    d = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = d @ L
        if np.abs(nxt - d).max() < tol * 1e-2:
            return nxt
        d = nxt
    raise NoStationaryDistributionError("power iteration did not converge")


def is_ergodic(P) -> bool:
    """Irreducible and aperiodic, judged on the support graph of ``P``."""
    P = _as_square(P)
    adj = P > 0
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    if n_comp != 1:
        return False
    order, _ = breadth_first_order(adj, 0, directed=True, return_predecessors=True)
    level = np.full(P.shape[0], -1)
    level[0] = 0
    for u in order:
        for v in np.flatnonzero(adj[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
    src, dst = np.nonzero(adj)
    period = reduce(math.gcd, (int(x) for x in level[src] + 1 - level[dst]), 0)
    return period == 1


def _gamma(mdp, gamma):
    g = mdp.gamma if gamma is None else gamma
    if g is None or not 0.0 <= g < 1.0:
        raise InvalidInputError(f"a discount in [0, 1) is required, got {g}")
    return g


def exact_q_pi(mdp: Mdp, pi: Policy, gamma=None) -> np.ndarray:
    """Solve ``(I - gamma P_pi) q = r``."""
    g = _gamma(mdp, gamma)
    P = build_transition_matrix(mdp, pi)
    return np.linalg.solve(np.eye(mdp.n_pairs) - g * P, mdp.r_vec)


def _greedy_table(q, n_states, n_actions, tie_tol=PROB_TOL):
    q = q.reshape(n_states, n_actions)
    best = q.max(axis=1, keepdims=True)
    mask = q >= best - tie_tol
    return mask / mask.sum(axis=1, keepdims=True)


def exact_q_star(mdp: Mdp, gamma=None, tol=1e-12, max_iter=1_000_000) -> np.ndarray:
    """Value iteration to ``tol``, then exact evaluation of the greedy policy
    until the policy stops changing (removes the value-iteration residue)."""
    g = _gamma(mdp, gamma)
    S, A = mdp.n_states, mdp.n_actions
    pflat = mdp.p.reshape(S * A, S)
    q = np.zeros(S * A)
    for _ in range(max_iter):
        nxt = mdp.r_vec + g * pflat @ q.reshape(S, A).max(axis=1)
        done = np.abs(nxt - q).max() < tol
        q = nxt
        if done:
            break
    for _ in range(100):
        table = _greedy_table(q, S, A)
        # deterministic tie-break keeps the policy evaluation exact
        pi = Policy.deterministic(table.argmax(axis=1), A)
        nxt = exact_q_pi(mdp, pi, g)
        if np.abs(nxt - q).max() < 1e-14:
            q = nxt
            break
        q = nxt
    return q


def reward_rate_and_differential_q(mdp: Mdp, pi: Policy):
    """Reward rate and the differential values normalized by ``d_pi^T q = 0``."""
    P = build_transition_matrix(mdp, pi)
    if not is_ergodic(P):
        raise NoStationaryDistributionError("the chain induced by the policy is not ergodic")
    d = stationary_distribution(P)
    r = mdp.r_vec
    rate = float(d @ r)
    n = len(d)
    # I - P + 1 d^T is invertible for an ergodic chain and forces d^T q = 0
    q = np.linalg.solve(np.eye(n) - P + np.outer(np.ones(n), d), r - rate)
    return rate, q


def sample_index(probs, u):
    """Inverse-CDF draw from ``probs`` (last axis) with uniforms ``u``."""
    cdf = np.cumsum(probs, axis=-1)
    idx = np.sum(cdf <= np.expand_dims(u, -1) * cdf[..., -1:], axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def sample_transition(mdp: Mdp, s, a, rng: np.random.Generator):
    """Return ``(reward, next_state)`` for one step from ``(s, a)``."""
    s_next = int(sample_index(mdp.p[s, a], rng.random()))
    return float(mdp.r[s, a]), s_next


def state_value_reduction(mdp: Mdp, pi: Policy, mu: Policy):
    """Collapse an MDP to the single-action chain followed under ``pi``.

    Returns the reduced MDP (rewards ``r_pi``, transitions ``P_pi`` over
    states) and the state distribution sampled under ``mu``.  This is the
    object the importance-sampled state-value learners estimate.
    """
    _check_policy(mdp, pi)
    _check_policy(mdp, mu)
    p_pi = np.einsum("sa,sat->st", pi.table, mdp.p)
    r_pi = np.einsum("sa,sa->s", pi.table, mdp.r)
    reduced = Mdp(p_pi[:, None, :], r_pi[:, None], mdp.gamma)
    p_mu = np.einsum("sa,sat->st", mu.table, mdp.p)
    return reduced, stationary_distribution(p_mu)
