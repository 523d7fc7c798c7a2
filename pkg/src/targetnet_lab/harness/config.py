"""Experiment configuration: YAML loading with line-aware errors, schema
checks, defaults, canonicalization and fingerprinting.

A config is a mapping with the sections below (every key optional except
``environment.name`` and ``algorithm.name``)::

    environment:
      name: baird-eval          # baird-eval | baird-control | kolter | random | file
      behavior: mostly-solid           # Baird behavior split: mostly-solid | mostly-dashed
      path: chain.mdp.yaml      # file only: an MDP container, relative to the config
    algorithm:
      name: alg1_td_variant
      eta: 0.0
      alpha: 0.01               # or {kind: polynomial, scale: 1.0, exponent: 0.6}
      beta: 0.01
      projection: disabled      # or {r1: 100, r2: 99}
      behavior: {kind: fixed, table: mu0}
      target: {kind: fixed, table: solid}
    horizon: 100000
    replications: 30
    seed: 0
    metrics: [value_error, w_norm, theta_norm, rbar, drift]
    thresholds: [1000.0]
    cap: 1.0e9
    sweep:
      eta: [0.0, 0.01, 0.1]
"""
from __future__ import annotations

import copy
import hashlib
import itertools
import json
import math
import os

import numpy as np
import yaml

from ..errors import ConfigError

__all__ = [
    "ENVIRONMENTS",
    "METRICS",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "canonical_json",
    "fingerprint",
    "grid",
]

ENVIRONMENTS = ("baird-eval", "baird-control", "kolter", "random", "file")
METRICS = ("value_error", "w_norm", "theta_norm", "rbar", "drift")
TOP_KEYS = {"environment", "algorithm", "horizon", "replications", "seed", "seeds", "metrics",
            "thresholds", "cap", "sweep", "output", "refine_singularities"}
ENV_KEYS = {
    "baird-eval": {"name", "behavior"},
    "baird-control": {"name", "behavior"},
    "kolter": {"name", "epsilon", "d1", "gamma"},
    "random": {"name", "seed", "n_states", "n_actions", "feature_dim", "mixing", "gamma",
               "center", "feature_norm"},
    "file": {"name", "path"},
}
ALG_KEYS = {"name", "eta", "alpha", "beta", "projection", "behavior", "target", "tau", "w0"}
POLICY_KEYS = {"kind", "table", "weight", "tau"}


def _node_lines(node, path=(), out=None):
    """Map every key path in a composed YAML tree to its 1-based line."""
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _node_lines(v, path + (k.value,), out)
            out[path + (k.value,)] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _node_lines(v, path + (i,), out)
    return out


class _Where:
    """Turns a key path into ``ConfigError`` location info."""

    def __init__(self, lines):
        self.lines = lines

    def error(self, message, *path):
        for cut in range(len(path), -1, -1):
            line = self.lines.get(tuple(path[:cut]))
            if line is not None:
                break
        name = ".".join(str(p) for p in path) or None
        return ConfigError(message, field=name, line=line)


def grid(spec, where=None, path=()):
    """Expand ``[v, ...]`` or ``{start, stop, step}`` into a list of values."""
    if isinstance(spec, dict):
        try:
            start, stop, step = (float(spec[k]) for k in ("start", "stop", "step"))
        except (KeyError, TypeError, ValueError):
            raise (where.error if where else _Where({}).error)(
                "grid needs numeric start, stop and step", *path) from None
        if not step > 0 or stop < start:
            raise (where.error if where else _Where({}).error)("grid needs step > 0 and stop >= start", *path)
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        # integer counting avoids accumulated rounding in the grid values
        return [round(start + i * step, 12) for i in range(n)]
    if isinstance(spec, (list, tuple)):
        if not spec:
            raise (where.error if where else _Where({}).error)("sweep grids must be nonempty", *path)
        return list(spec)
    return [spec]


class ExperimentConfig:
    """A validated experiment description (see the module docstring).

    ``raw`` keeps the user's mapping with defaults filled in; it is what the
    fingerprint hashes.  ``points`` lists the sweep points in order.
    """

    def __init__(self, raw: dict, lines=None):
        self.lines = lines or {}
        self.raw = _validate(copy.deepcopy(raw), _Where(self.lines))

    # convenient views -----------------------------------------------------
    @property
    def environment(self):
        return self.raw["environment"]

    @property
    def algorithm(self):
        return self.raw["algorithm"]

    @property
    def env_name(self):
        return self.environment["name"]

    @property
    def algorithm_name(self):
        return self.algorithm["name"]

    @property
    def horizon(self):
        return self.raw["horizon"]

    @property
    def seeds(self):
        if self.raw.get("seeds") is not None:
            return list(self.raw["seeds"])
        return [self.raw["seed"] + i for i in range(self.raw["replications"])]

    @property
    def metrics(self):
        return tuple(self.raw["metrics"])

    @property
    def cap(self):
        return self.raw["cap"]

    @property
    def thresholds(self):
        return tuple(self.raw["thresholds"])

    @property
    def output(self):
        return self.raw.get("output")

    @property
    def sweep(self):
        return self.raw["sweep"]

    def points(self):
        """``[(index, eta, other_key, other_value), ...]`` with eta outermost."""
        sweep = self.sweep
        etas = sweep.get("eta", [self.algorithm["eta"]])
        others = [k for k in sweep if k != "eta"]
        if not others:
            return [(i, float(e), "eta" if "eta" in sweep else "", float(e) if "eta" in sweep else "")
                    for i, e in enumerate(etas)]
        key = others[0]
        return [(i, float(e), key, v) for i, (e, v) in enumerate(itertools.product(etas, sweep[key]))]

    def point_settings(self, eta, key, value):
        """Environment and algorithm sections for one sweep point."""
        env = copy.deepcopy(self.environment)
        alg = copy.deepcopy(self.algorithm)
        alg["eta"] = eta
        if key and key != "eta":
            section, name = key.split(".", 1)
            target = env if section == "environment" else alg
            _assign(target, name.split("."), value)
        return env, alg

    def with_overrides(self, **kw):
        raw = copy.deepcopy(self.raw)
        for k, v in kw.items():
            if v is not None:
                raw[k] = v
        if "seed" in kw and kw["seed"] is not None:
            raw.pop("seeds", None)
        return ExperimentConfig(raw, self.lines)

    def canonical(self):
        raw = {k: v for k, v in self.raw.items() if k != "output"}
        if self.env_name == "file":
            # hash the container, not its location
            raw["environment"] = dict(raw["environment"], path=_file_digest(raw["environment"]["path"]))
        return canonical_json(raw)

    def fingerprint(self):
        return fingerprint(self.canonical())


def _file_digest(path):
    try:
        with open(path, "rb") as fh:
            return "sha256:" + hashlib.sha256(fh.read()).hexdigest()
    except OSError:
        return path


def _assign(d, names, value):
    for n in names[:-1]:
        d = d.setdefault(n, {})
    d[names[-1]] = value


def _num(x):
    if isinstance(x, bool):
        return x
    if isinstance(x, (int, float, np.integer, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        # repr is the shortest round-tripping form, identical for 1 and 1.0
        return float(repr(x))
    return x


def _normalize(obj):
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    return _num(obj)


def canonical_json(obj) -> str:
    """Sorted keys, numbers as floats, no whitespace."""
    return json.dumps(_normalize(obj), sort_keys=True, separators=(",", ":"))


def fingerprint(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _float(where, value, *path, positive=False, nonneg=False):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise where.error(f"expected a number, got {value!r}", *path) from None
    if math.isnan(v):
        raise where.error("NaN is not allowed", *path)
    if positive and not v > 0:
        raise where.error(f"must be positive, got {v}", *path)
    if nonneg and v < 0:
        raise where.error(f"must be nonnegative, got {v}", *path)
    return v


def _int(where, value, *path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
        raise where.error(f"expected an integer, got {value!r}", *path)
    v = int(value)
    if minimum is not None and v < minimum:
        raise where.error(f"must be >= {minimum}, got {v}", *path)
    return v


def _check_keys(where, section, allowed, *path):
    if not isinstance(section, dict):
        raise where.error("expected a mapping", *path)
    for k in section:
        if k not in allowed:
            raise where.error(f"unknown key {k!r}; allowed: {', '.join(sorted(allowed))}", *path, k)


def _schedule(where, spec, *path):
    if isinstance(spec, dict):
        _check_keys(where, spec, {"kind", "scale", "exponent"}, *path)
        kind = spec.get("kind", "constant")
        if kind not in ("constant", "polynomial"):
            raise where.error(f"schedule kind must be constant or polynomial, got {kind!r}", *path, "kind")
        return {"kind": kind, "scale": _float(where, spec.get("scale", 0.01), *path, "scale", positive=True),
                "exponent": _float(where, spec.get("exponent", 0.0), *path, "exponent", nonneg=True)}
    return {"kind": "constant", "scale": _float(where, spec, *path, positive=True), "exponent": 0.0}


def _policy(where, spec, *path):
    if spec is None:
        return None
    if isinstance(spec, str):
        spec = {"kind": spec}
    _check_keys(where, spec, POLICY_KEYS, *path)
    kind = spec.get("kind", "fixed")
    if kind not in ("fixed", "greedy", "softmax", "mixture"):
        raise where.error(f"unknown policy kind {kind!r}", *path, "kind")
    out = {"kind": kind}
    if "table" in spec:
        out["table"] = spec["table"]
    if "weight" in spec:
        w = _float(where, spec["weight"], *path, "weight")
        if not 0 <= w <= 1:
            raise where.error("mixture weight must lie in [0, 1]", *path, "weight")
        out["weight"] = w
    if "tau" in spec:
        out["tau"] = _float(where, spec["tau"], *path, "tau", positive=True)
    return out


def _validate(raw, where):
    if not isinstance(raw, dict):
        raise where.error("config must be a mapping")
    _check_keys(where, raw, TOP_KEYS)
    if "environment" not in raw:
        raise where.error("missing section 'environment'")
    if "algorithm" not in raw:
        raise where.error("missing section 'algorithm'")

    env = raw["environment"]
    if isinstance(env, str):
        env = {"name": env}
    if not isinstance(env, dict) or "name" not in env:
        raise where.error("environment needs a name", "environment")
    if env["name"] not in ENVIRONMENTS:
        raise where.error(f"unknown environment {env['name']!r}; choose from {', '.join(ENVIRONMENTS)}",
                          "environment", "name")
    _check_keys(where, env, ENV_KEYS[env["name"]], "environment")
    if env["name"] == "file" and not isinstance(env.get("path"), str):
        raise where.error("file environment needs a path string", "environment", "path")
    raw["environment"] = env

    alg = raw["algorithm"]
    if isinstance(alg, str):
        alg = {"name": alg}
    _check_keys(where, alg, ALG_KEYS, "algorithm")
    from ..agents import ALGORITHMS

    if alg.get("name") not in ALGORITHMS:
        raise where.error(f"unknown algorithm {alg.get('name')!r}; choose from {', '.join(ALGORITHMS)}",
                          "algorithm", "name")
    alg["eta"] = _float(where, alg.get("eta", 0.0), "algorithm", "eta", nonneg=True)
    alg["alpha"] = _schedule(where, alg.get("alpha", 0.01), "algorithm", "alpha")
    alg["beta"] = _schedule(where, alg.get("beta", 0.01), "algorithm", "beta")
    proj = alg.get("projection", "disabled")
    if proj in ("disabled", None):
        alg["projection"] = "disabled"
    else:
        _check_keys(where, proj, {"r1", "r2"}, "algorithm", "projection")
        r1 = _float(where, proj.get("r1"), "algorithm", "projection", "r1", positive=True)
        r2 = _float(where, proj.get("r2"), "algorithm", "projection", "r2", positive=True)
        if not r1 > r2:
            raise where.error("projection radii must satisfy r1 > r2 > 0", "algorithm", "projection")
        alg["projection"] = {"r1": r1, "r2": r2}
    alg["behavior"] = _policy(where, alg.get("behavior"), "algorithm", "behavior")
    alg["target"] = _policy(where, alg.get("target"), "algorithm", "target")
    alg["tau"] = _float(where, alg.get("tau", 1.0), "algorithm", "tau", positive=True)
    raw["algorithm"] = alg

    if "horizon" in raw or env["name"] != "kolter":
        raw["horizon"] = _int(where, raw.get("horizon", 1000), "horizon", minimum=1)
    raw["replications"] = _int(where, raw.get("replications", 1), "replications", minimum=1)
    raw["seed"] = _int(where, raw.get("seed", 0), "seed", minimum=0)
    if raw.get("seeds") is not None:
        if not isinstance(raw["seeds"], list) or not raw["seeds"]:
            raise where.error("seeds must be a nonempty list", "seeds")
        raw["seeds"] = [_int(where, s, "seeds", i, minimum=0) for i, s in enumerate(raw["seeds"])]
    metrics = raw.get("metrics", list(METRICS))
    if not isinstance(metrics, list) or not metrics:
        raise where.error("metrics must be a nonempty list", "metrics")
    for i, m in enumerate(metrics):
        if m not in METRICS:
            raise where.error(f"unknown metric {m!r}; choose from {', '.join(METRICS)}", "metrics", i)
    raw["metrics"] = metrics
    raw["thresholds"] = [_float(where, v, "thresholds", i, positive=True)
                         for i, v in enumerate(raw.get("thresholds", [1e3]))]
    raw["cap"] = _float(where, raw.get("cap", 1e9), "cap", positive=True)
    raw["refine_singularities"] = bool(raw.get("refine_singularities", False))

    sweep = raw.get("sweep") or {}
    if not isinstance(sweep, dict):
        raise where.error("sweep must be a mapping of axis -> values", "sweep")
    expanded = {}
    for key, spec in sweep.items():
        name = "eta" if key in ("eta", "algorithm.eta") else key
        if name != "eta" and name not in ("d1", "epsilon", "gamma") and not name.startswith(
                ("environment.", "algorithm.")):
            raise where.error(f"sweep axis {key!r} must be eta, d1, epsilon, gamma or a dotted "
                              "environment./algorithm. path", "sweep", key)
        if name in ("d1", "epsilon", "gamma"):
            name = "environment." + name
        values = grid(spec, where, ("sweep", key))
        if name == "eta":
            values = [_float(where, v, "sweep", key, i, nonneg=True) for i, v in enumerate(values)]
        expanded[name] = values
    if len([k for k in expanded if k != "eta"]) > 1:
        raise where.error("at most one sweep axis besides eta", "sweep")
    raw["sweep"] = expanded
    return raw


def parse_config(text: str, source="<config>") -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"{source}: malformed YAML: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from None
    if node is None:
        raise ConfigError(f"{source}: empty config")
    return ExperimentConfig(data, _node_lines(node))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    config = parse_config(text, str(path))
    env = config.raw["environment"]
    if env["name"] == "file":
        # container paths are relative to the config file
        env["path"] = os.path.join(os.path.dirname(os.path.abspath(path)), env["path"])
    return config
