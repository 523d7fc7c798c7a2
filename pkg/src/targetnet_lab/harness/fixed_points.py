"""Analytic fixed points over a sweep grid (no simulation)."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ..agents import PolicySpec
from ..errors import LabError, SingularSystemError
from ..mdp import Policy, state_value_reduction
from ..oracles import (
    LinearProblem,
    build_evaluation_operators,
    evaluation_fixed_point_discounted,
    theorem_fixed_point,
)
from .config import ExperimentConfig, fingerprint
from .io import ResultSet
from .problems import build_problem, kolter_instance

__all__ = ["FixedPointRow", "fixed_point_rows", "sweep_fixed_points", "kolter_error", "table_result_set"]

METRIC = "fixed_point_error"


@dataclass
class FixedPointRow:
    index: int
    eta: float
    sweep_key: str
    sweep_value: object
    error: float  # +inf where the fixed-point system is singular
    w: np.ndarray | None
    rbar: float | None
    residual: float
    certified: bool
    refined: bool = False

    def to_dict(self):
        return {
            "index": self.index, "eta": self.eta, "sweep_key": self.sweep_key,
            "sweep_value": self.sweep_value,
            "error": "inf" if math.isinf(self.error) else self.error,
            "w": None if self.w is None else [float(v) for v in self.w],
            "rbar": self.rbar, "residual": self.residual if math.isfinite(self.residual) else "inf",
            "certified": self.certified, "refined": self.refined,
        }


def _kolter_ops(env):
    k = kolter_instance(env)
    return k, build_evaluation_operators(k.mdp, k.X, k.pi, k.pi, d=k.d)


def kolter_error(env, eta):
    """``||X w*_eta - v_pi||`` for one Kolter instance; ``inf`` if singular."""
    k, ops = _kolter_ops(env)
    try:
        w = evaluation_fixed_point_discounted(ops, eta)
    except SingularSystemError:
        return math.inf, None, math.inf
    res = float(np.linalg.norm((ops.A + eta * np.eye(ops.K)) @ w - ops.b))
    return float(np.linalg.norm(ops.X @ w - k.v_pi)), w, res


def _baird_eval_problem(problem):
    """State-value fixed point of the importance-sampled learner."""
    pi = problem.target.fixed
    mu = problem.behavior.fixed
    reduced, d = state_value_reduction(problem.mdp, pi, mu)
    one = Policy(np.ones((reduced.n_states, 1)))
    spec = PolicySpec("fixed", one)
    return LinearProblem(reduced, problem.X, spec, spec, reduced.gamma, d)


def fixed_point_rows(config: ExperimentConfig):
    """One row per sweep point with the theorem fixed point and its error."""
    rows = []
    for index, eta, key, value in config.points():
        env, alg = config.point_settings(eta, key, value)
        short = key.split(".")[-1]
        if env["name"] == "kolter":
            err, w, res = kolter_error(env, eta)
            rows.append(FixedPointRow(index, eta, short, value, err, w, None, res, math.isfinite(err)))
            continue
        problem = build_problem(env, alg)
        lp = _baird_eval_problem(problem) if problem.state_features else problem.linear_problem()
        algorithm = "alg1_q_eval" if problem.state_features else alg["name"]
        try:
            fp = theorem_fixed_point(algorithm, lp, eta)
        except SingularSystemError:
            rows.append(FixedPointRow(index, eta, short, value, math.inf, None, None, math.inf, False))
            continue
        err = problem.X @ fp.w - problem.q_ref
        if problem.offset_free:
            err = err - err.mean()
        rows.append(FixedPointRow(index, eta, short, value, float(np.linalg.norm(err)), fp.w, fp.rbar,
                                  fp.residual, fp.certified))
    return rows


def _refine(config, rows):
    """Insert the exact singular sweep values between grid neighbours.

    Only for the Kolter sweep over ``d1``: wherever ``A(d1) + eta`` changes
    sign between adjacent grid points, its root is located with Brent's
    method and added as an ``inf`` row.
    """
    extra = []
    by_eta = {}
    for r in rows:
        by_eta.setdefault(r.eta, []).append(r)
    for eta, rs in by_eta.items():
        rs = sorted(rs, key=lambda r: float(r.sweep_value))

        def gain(d1, eta=eta):
            e, _ = config.point_settings(eta, "environment.d1", d1)
            return float(np.linalg.det(_kolter_ops(e)[1].A + eta * np.eye(1)))

        for lo, hi in zip(rs, rs[1:]):
            a, b = float(lo.sweep_value), float(hi.sweep_value)
            ga, gb = gain(a), gain(b)
            if ga == 0 or ga * gb < 0:
                root = a if ga == 0 else brentq(gain, a, b, xtol=1e-15)
                extra.append(FixedPointRow(-1, eta, lo.sweep_key, root, math.inf, None, None, math.inf,
                                           False, refined=True))
    return extra


def sweep_fixed_points(config: ExperimentConfig, refine=None):
    """Grid table of fixed-point errors; singular points are ``+inf``.

    With ``refine`` (default: the config's ``refine_singularities``) the
    Kolter sweep also lists the exact singular values of ``d1``.
    """
    rows = fixed_point_rows(config)
    refine = config.raw.get("refine_singularities", False) if refine is None else refine
    if refine and config.env_name == "kolter" and any(r.sweep_key == "d1" for r in rows):
        rows = rows + _refine(config, rows)
        rows.sort(key=lambda r: (r.eta, float(r.sweep_value)))
        for i, r in enumerate(rows):
            r.index = i
    if not rows:
        raise LabError("empty sweep")
    return rows


def table_result_set(config: ExperimentConfig, rows) -> ResultSet:
    points = [{
        "index": r.index, "eta": r.eta, "sweep_key": r.sweep_key, "sweep_value": r.sweep_value,
        "seeds": [], "t": np.zeros(1, dtype=np.int64), "series": {METRIC: np.array([[r.error]])},
    } for r in rows]
    meta = {"config": json.loads(config.canonical()), "mode": "fixed-point"}
    # the mode is part of the fingerprint so sweep tables never overwrite run outputs
    fp = fingerprint(config.canonical() + "|fixed-point")
    return ResultSet(config.env_name, config.algorithm_name, fp, points, meta)
