"""Benchmark instances: Baird's star MDP, Kolter's two-state chain, and a
seeded random-MDP generator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .features import FeatureMatrix, center_features, scale_to_norm
from .mdp import Mdp, Policy

__all__ = [
    "DASHED",
    "SOLID",
    "BAIRD_BEHAVIORS",
    "BairdInstance",
    "KolterInstance",
    "baird_state_features",
    "baird_control_features_display",
    "make_baird",
    "make_kolter",
    "make_random_mdp",
]

DASHED, SOLID = 0, 1
BAIRD_GAMMA = 0.99
# probability of the solid action under the fixed behavior policy
BAIRD_BEHAVIORS = {"mostly-solid": 6.0 / 7.0, "mostly-dashed": 1.0 / 7.0}


def baird_state_features():
    """``[2I 0 1; 0^T 1 2]``, one row per state."""
    X = np.zeros((7, 8))
    X[:6, :6] = 2.0 * np.eye(6)
    X[:6, 7] = 1.0
    X[6, 6] = 1.0
    X[6, 7] = 2.0
    return X


def baird_control_features_display():
    """The 14 x 15 state-action matrix in its published row order:
    rows 0-6 are the solid action at s1..s7, rows 7-13 the dashed action."""
    X = np.zeros((14, 15))
    X[:7, :8] = baird_state_features()
    X[7:, 8:] = np.eye(7)
    return X


@dataclass(frozen=True)
class BairdInstance:
    mdp: Mdp
    X_eval: FeatureMatrix
    X_ctrl: FeatureMatrix
    w0_eval: np.ndarray
    w0_ctrl: np.ndarray
    mu0: Policy
    pi_target: Policy
    mode: str
    behavior: str

    @property
    def X(self):
        return self.X_eval if self.mode == "evaluation" else self.X_ctrl

    @property
    def w0(self):
        return self.w0_eval if self.mode == "evaluation" else self.w0_ctrl


def make_baird(mode="evaluation", behavior="mostly-solid") -> BairdInstance:
    """Seven-state star MDP with dashed (action 0) and solid (action 1) moves.

    Solid always leads to s7, dashed picks one of s1..s6 uniformly; every
    reward is zero and gamma = 0.99.  ``behavior`` selects the fixed behavior
    split: ``mostly-solid`` takes solid with probability 6/7, ``mostly-dashed``
    with probability 1/7 (uniform next-state law).
    """
    if mode not in ("evaluation", "control"):
        raise InvalidInputError(f"mode must be 'evaluation' or 'control', got {mode!r}")
    if behavior not in BAIRD_BEHAVIORS:
        raise InvalidInputError(f"unknown Baird behavior {behavior!r}; choose from {sorted(BAIRD_BEHAVIORS)}")
    p = np.zeros((7, 2, 7))
    p[:, DASHED, :6] = 1.0 / 6.0
    p[:, SOLID, 6] = 1.0
    mdp = Mdp(p, np.zeros((7, 2)), BAIRD_GAMMA)

    display = baird_control_features_display()
    X_ctrl = np.empty_like(display)
    X_ctrl[SOLID::2] = display[:7]
    X_ctrl[DASHED::2] = display[7:]

    p_solid = BAIRD_BEHAVIORS[behavior]
    mu0 = Policy(np.tile([1.0 - p_solid, p_solid], (7, 1)))
    pi = Policy.deterministic(np.full(7, SOLID), 2)
    w0 = np.array([1, 1, 1, 1, 1, 1, 10, 1], dtype=float)
    return BairdInstance(
        mdp=mdp,
        X_eval=FeatureMatrix(baird_state_features()),
        X_ctrl=FeatureMatrix(X_ctrl),
        w0_eval=w0,
        w0_ctrl=np.concatenate([w0, np.ones(7)]),
        mu0=mu0,
        pi_target=pi,
        mode=mode,
        behavior=behavior,
    )


@dataclass(frozen=True)
class KolterInstance:
    """Two-state chain, one action, with a free sampling weight ``d1``."""

    mdp: Mdp
    X: FeatureMatrix
    v_pi: np.ndarray
    epsilon: float
    d1: float

    @property
    def gamma(self):
        return self.mdp.gamma

    @property
    def d(self):
        return np.array([self.d1, 1.0 - self.d1])

    @property
    def pi(self):
        return Policy(np.ones((2, 1)))

    def with_d1(self, d1):
        return make_kolter(self.epsilon, d1, self.gamma)


def make_kolter(epsilon=0.01, d1=0.5, gamma=0.99) -> KolterInstance:
    if not epsilon > 0:
        raise InvalidInputError("epsilon must be positive")
    if not 0.0 < d1 < 1.0:
        raise InvalidInputError("d1 must lie in (0, 1)")
    if not 0.0 <= gamma < 1.0:
        raise InvalidInputError("gamma must lie in [0, 1)")
    P = np.full((2, 2), 0.5)
    v = np.array([1.0, 1.05])
    r = (np.eye(2) - gamma * P) @ v
    mdp = Mdp(P[:, None, :], r[:, None], gamma)
    X = FeatureMatrix(np.array([[1.0], [1.05 + epsilon]]))
    return KolterInstance(mdp, X, v, epsilon, d1)


def make_random_mdp(seed, n_states, n_actions, feature_dim, mixing=0.1, gamma=0.9,
                    center=False, feature_norm=None):
    """Reproducible random MDP and Gaussian features.

    Transition rows are ``(1 - mixing) * random + mixing * uniform``, so any
    policy with full support induces an ergodic chain.  ``center`` subtracts
    the uniform-weighted mean feature; ``feature_norm`` rescales ``||X||``.
    """
    if not 0.0 < mixing <= 1.0:
        raise InvalidInputError("mixing must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    raw = rng.random((n_states, n_actions, n_states))
    raw /= raw.sum(axis=2, keepdims=True)
    p = (1.0 - mixing) * raw + mixing / n_states
    p /= p.sum(axis=2, keepdims=True)
    r = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    X = FeatureMatrix(rng.standard_normal((n_states * n_actions, feature_dim)))
    if center:
        X = center_features(X, np.full(n_states * n_actions, 1.0 / (n_states * n_actions)))
    if feature_norm is not None:
        X = scale_to_norm(X, feature_norm)
    return Mdp(p, r, gamma), X
