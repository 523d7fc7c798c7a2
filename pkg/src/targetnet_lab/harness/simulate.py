"""Batched, seeded simulation of any learner on any simulable environment.

Runs that differ only in their seed or ridge weight are stepped together:
every array carries a leading run axis and every operation is row-wise, so
a run's trajectory is the same whichever runs share its batch.  That is
what makes ``--jobs 1`` and ``--jobs 8`` produce identical bytes.

Random numbers come from one Philox4x64 counter-based generator per run,
keyed by ``(seed, sweep_index)``.  Each step consumes two uniforms in
``[0, 1)``: the first draws ``S_{t+1}`` from ``p(.|S_t, A_t)``, the second
draws ``A_{t+1}`` from the behavior policy at ``S_{t+1}``; both by inverse
CDF.  Two extra uniforms drawn before the loop pick ``S_0`` (uniform over
states) and ``A_0``.  Uniforms are fetched in blocks of ``CHUNK`` steps.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..agents import AVERAGE_REWARD, LearnerState, Transition, step
from ..mdp import sample_index
from .config import ExperimentConfig
from .problems import build_algorithm, build_problem

__all__ = ["CHUNK", "RunResult", "PointResult", "log_times", "simulate_points", "run"]

CHUNK = 4096
DENSE_UNTIL = 1000
LOG_EVERY = 10


def log_times(horizon):
    """Every step up to 1000, then every 10th, always ending at the horizon."""
    ts = list(range(0, min(horizon, DENSE_UNTIL) + 1))
    ts += list(range(DENSE_UNTIL + LOG_EVERY, horizon + 1, LOG_EVERY))
    if ts[-1] != horizon:
        ts.append(horizon)
    return np.array(ts, dtype=np.int64)


@dataclass
class RunResult:
    """One seed at one sweep point."""

    seed: int
    sweep_index: int
    eta: float
    fingerprint: str
    t: np.ndarray
    series: dict
    termination: str  # completed | value-exceeded-cap
    cap_step: int | None
    max_value_error: float
    first_above: dict
    drift_violations: int
    max_drift_excess: float
    w_final: np.ndarray | None = None

    def rows(self):
        """``(t, value_error, w_norm, theta_norm, rbar, drift)`` tuples."""
        keys = ("value_error", "w_norm", "theta_norm", "rbar", "drift")
        cols = [self.series.get(k, np.full(len(self.t), np.nan)) for k in keys]
        return list(zip(self.t.tolist(), *(c.tolist() for c in cols)))


@dataclass
class PointResult:
    """All seeds of one sweep point."""

    index: int
    eta: float
    sweep_key: str
    sweep_value: object
    runs: list = field(default_factory=list)

    @property
    def t(self):
        return self.runs[0].t

    def stacked(self, metric):
        return np.stack([r.series[metric] for r in self.runs])


class _Streams:
    def __init__(self, seeds, indices):
        self.gens = [np.random.Generator(np.random.Philox(key=[int(s), int(i)])) for s, i in zip(seeds, indices)]
        self.head = np.stack([g.random(2) for g in self.gens])
        self.buf = None

    def block(self):
        self.buf = np.stack([g.random((CHUNK, 2)) for g in self.gens])


def _metrics(problem, state, prev_theta, cfg):
    w = state.w
    Xw = np.sum(w[:, None, :] * problem.X[None, :, :], axis=-1)
    err = Xw - problem.q_ref
    if problem.offset_free:
        err = err - err.mean(axis=-1, keepdims=True)
    out = {
        "value_error": np.linalg.norm(err, axis=-1),
        "w_norm": np.linalg.norm(w, axis=-1),
        "theta_norm": np.linalg.norm(state.theta, axis=-1),
        "rbar": np.broadcast_to(np.asarray(state.rbar, dtype=float), w.shape[:1]).copy(),
        "drift": np.linalg.norm(state.theta - prev_theta, axis=-1),
    }
    return out


def _finite_rows(state):
    ok = np.all(np.isfinite(state.w), axis=-1) & np.all(np.isfinite(state.theta), axis=-1)
    ok &= np.isfinite(np.asarray(state.rbar, dtype=float))
    if state.u is not None:
        ok &= np.all(np.isfinite(state.u), axis=-1)
    return ok


def _keep(mask, new, old):
    """Rows where ``mask`` is true take ``new``, the others keep ``old``."""

    def pick(a, b):
        if a is None:
            return None
        a, b = np.asarray(a), np.asarray(b)
        m = mask.reshape(mask.shape + (1,) * (a.ndim - 1))
        return np.where(m, a, b)

    return replace(new, w=pick(new.w, old.w), theta=pick(new.theta, old.theta),
                   rbar=pick(new.rbar, old.rbar), u=pick(new.u, old.u),
                   s=pick(new.s, old.s), a=pick(new.a, old.a))


def simulate_points(config: ExperimentConfig, points, horizon=None):
    """Simulate every seed of the given sweep points in one batch.

    All points must share their environment and algorithm settings except
    the ridge weight.  Returns a list of :class:`PointResult`.
    """
    T = config.horizon if horizon is None else horizon
    _, _, key, value = points[0]
    env, alg = config.point_settings(points[0][1], key, value)
    problem = build_problem(env, alg)
    mdp = problem.mdp
    S, A, K = mdp.n_states, mdp.n_actions, problem.K
    seeds = config.seeds
    R = len(seeds)
    etas = np.repeat([p[1] for p in points], R)
    run_seeds = np.tile(seeds, len(points))
    run_idx = np.repeat([p[0] for p in points], R)
    B = len(etas)

    cfg = build_algorithm(alg, mdp.gamma, eta=etas[:, None])
    algorithm = cfg.algorithm
    average = algorithm in AVERAGE_REWARD
    needs_next_mean = algorithm in ("alg1_q_eval", "alg2_diff_q_eval", "alg4_gradient_q",
                                    "baseline_td_ridge", "baseline_diff_td")
    beh, tgt = problem.behavior, problem.target
    Xsa = None if problem.state_features else problem.X.reshape(S, A, K)
    p, r = mdp.p, mdp.r
    proj_bound = cfg.r1 + cfg.r2 if cfg.projections_enabled else None

    streams = _Streams(run_seeds, run_idx)
    s = sample_index(np.full((B, S), 1.0 / S), streams.head[:, 0])
    state = LearnerState.initial(cfg, np.tile(problem.w0, (B, 1)))

    def policy_params(st):
        return st.theta[:, 1:] if average else st.theta

    def behavior_probs(states, st):
        if problem.state_features:
            return beh.fixed.table[states]
        q = np.sum(Xsa[states] * policy_params(st)[:, None, :], axis=-1)
        return beh.probs(states, q)

    a = sample_index(behavior_probs(s, state), streams.head[:, 1])
    state = replace(state, s=s, a=a)

    times = log_times(T)
    n_log = len(times)
    metrics = config.metrics
    logs = {m: np.zeros((B, n_log)) for m in metrics}
    m0 = _metrics(problem, state, state.theta, cfg)
    for m in metrics:
        logs[m][:, 0] = m0[m]
    alive = np.ones(B, dtype=bool)
    cap_step = np.full(B, -1, dtype=np.int64)
    max_err = m0["value_error"].copy()
    thresholds = config.thresholds
    first_above = {thr: np.where(m0["value_error"] > thr, 0, -1) for thr in thresholds}
    violations = np.zeros(B, dtype=np.int64)
    excess = np.full(B, -math.inf)
    cap = config.cap
    li = 1
    stop = T

    for t in range(T):
        j = t % CHUNK
        if j == 0:
            streams.block()
        u = streams.buf[:, j]
        s, a = state.s, state.a
        reward = r[s, a]
        s_next = sample_index(p[s, a], u[:, 0])
        if problem.state_features:
            x = problem.X[s]
            x_next = problem.X[s_next]
            rows = None
            mu_next = beh.fixed.table[s_next]
            rho = tgt.fixed.table[s, a] / beh.fixed.table[s, a]
        else:
            x = Xsa[s, a]
            rows = Xsa[s_next]
            q_next = np.sum(rows * policy_params(state)[:, None, :], axis=-1)
            mu_next = beh.probs(s_next, q_next)
            x_next = None
            if needs_next_mean:
                pi_next = tgt.probs(s_next, q_next)
                x_next = np.sum(pi_next[:, :, None] * rows, axis=1)
            rho = 1.0
        a_next = sample_index(mu_next, u[:, 1])
        beta = cfg.beta(t)
        new = step(state, cfg, Transition(x, reward, x_next, rows, rho), cfg.alpha(t), beta)
        new = replace(new, s=s_next, a=a_next)

        finite = _finite_rows(new)
        if not (alive.all() and finite.all()):
            new = _keep(alive & finite, new, state)
        cur = _metrics(problem, new, state.theta, cfg)
        if proj_bound is not None:
            bound = beta * proj_bound
            violations += (cur["drift"] > bound) & alive
            excess = np.where(alive, np.maximum(excess, cur["drift"] - bound), excess)
        err = cur["value_error"]
        max_err = np.where(alive, np.maximum(max_err, err), max_err)
        for thr in thresholds:
            fa = first_above[thr]
            fa[(fa < 0) & alive & (err > thr)] = t + 1
        capped = alive & (~finite | (cur["w_norm"] > cap) | (err > cap))
        cap_step[capped] = t + 1
        alive &= ~capped
        state = new
        if li < n_log and times[li] == t + 1:
            for m in metrics:
                logs[m][:, li] = cur[m]
            li += 1
            if not alive.any():
                stop = t + 1
                break

    results = []
    fp = config.fingerprint()
    for pi_, (index, eta, key, value) in enumerate(points):
        rows_ = slice(pi_ * R, (pi_ + 1) * R)
        caps = cap_step[rows_]
        # a point whose runs all hit the cap ends at the first log time after the last cap
        end = int(times[np.searchsorted(times, caps.max())]) if (caps >= 0).all() else stop
        n_t = int(np.searchsorted(times, end, side="right"))
        pr = PointResult(index, eta, key, value)
        for k, b in enumerate(range(rows_.start, rows_.stop)):
            pr.runs.append(RunResult(
                seed=int(run_seeds[b]),
                sweep_index=int(index),
                eta=float(eta),
                fingerprint=fp,
                t=times[:n_t].copy(),
                series={m: logs[m][b, :n_t].copy() for m in metrics},
                termination="value-exceeded-cap" if cap_step[b] >= 0 else "completed",
                cap_step=int(cap_step[b]) if cap_step[b] >= 0 else None,
                max_value_error=float(max_err[b]),
                first_above={thr: (int(first_above[thr][b]) if first_above[thr][b] >= 0 else None)
                             for thr in thresholds},
                drift_violations=int(violations[b]),
                max_drift_excess=float(excess[b]),
                w_final=state.w[b].copy(),
            ))
        results.append(pr)
    return results


def _groups(config: ExperimentConfig, jobs):
    by_value = {}
    for pt in config.points():
        by_value.setdefault(repr(pt[3]) if pt[2] != "eta" else "", []).append(pt)
    tasks = list(by_value.values())
    # split further so that every worker has something to do
    while len(tasks) < jobs and any(len(t) > 1 for t in tasks):
        big = max(range(len(tasks)), key=lambda i: len(tasks[i]))
        t = tasks.pop(big)
        tasks[big:big] = [t[: len(t) // 2], t[len(t) // 2:]]
    return tasks


def _worker(raw, lines, points, horizon):
    return simulate_points(ExperimentConfig(raw, lines), points, horizon)


def run(config: ExperimentConfig, jobs=1, horizon=None):
    """Simulate every sweep point; returns :class:`PointResult` in point order."""
    tasks = _groups(config, max(1, int(jobs)))
    if jobs <= 1 or len(tasks) == 1:
        parts = [simulate_points(config, t, horizon) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            parts = list(ex.map(_worker, [config.raw] * len(tasks), [config.lines] * len(tasks),
                                tasks, [horizon] * len(tasks)))
    out = [pr for part in parts for pr in part]
    return sorted(out, key=lambda pr: pr.index)
