"""Self-describing text container for an MDP and, optionally, its features.

The layout is YAML::

    format: targetnet-mdp/1
    n_states: 2
    n_actions: 1
    gamma: 0.99            # null for average-reward problems
    p: [[[0.5, 0.5]], [[0.5, 0.5]]]     # p[s][a][s']
    r: [[0.0], [0.0]]                   # r[s][a]
    features: [[1.0], [1.06]]           # optional; one row per pair or per state
    meta: {name: kolter}                # optional free-form mapping

Floats are written with ``repr`` so a dump and load round-trips exactly.
"""
from __future__ import annotations

import numpy as np
import yaml

from .errors import InvalidInputError
from .features import FeatureMatrix, as_matrix
from .mdp import Mdp

__all__ = ["FORMAT", "dump_mdp", "load_mdp"]

FORMAT = "targetnet-mdp/1"


def dump_mdp(mdp: Mdp, X=None, meta=None) -> str:
    doc = {
        "format": FORMAT,
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "p": mdp.p.tolist(),
        "r": mdp.r.tolist(),
    }
    if X is not None:
        doc["features"] = as_matrix(X).tolist()
    if meta:
        doc["meta"] = dict(meta)
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=120)


def load_mdp(text: str):
    """Parse a container; returns ``(mdp, features or None, meta)``."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidInputError(f"malformed MDP container: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise InvalidInputError(f"not an MDP container (expected format: {FORMAT})")
    missing = [k for k in ("n_states", "n_actions", "p", "r") if k not in doc]
    if missing:
        raise InvalidInputError(f"MDP container lacks {', '.join(missing)}")
    p = np.asarray(doc["p"], dtype=float)
    r = np.asarray(doc["r"], dtype=float)
    S, A = int(doc["n_states"]), int(doc["n_actions"])
    if p.shape != (S, A, S):
        raise InvalidInputError(f"p has shape {p.shape}, expected {(S, A, S)}")
    mdp = Mdp(p, r, doc.get("gamma"))
    X = None
    if doc.get("features") is not None:
        X = FeatureMatrix(np.asarray(doc["features"], dtype=float))
        if X.shape[0] not in (S, S * A):
            raise InvalidInputError(f"features have {X.shape[0]} rows; expected {S * A} (pairs) or {S} (states)")
    return mdp, X, dict(doc.get("meta") or {})
