"""Versioned JSON checkpoints for trained policies."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grape import Adam, AgentRun, CurvePoint
from .policies import Policy, policy_from_dict

FORMAT = "gkpqec-policy"
VERSION = 1


def save_checkpoint(path, run_or_policy, metadata: dict | None = None) -> None:
    if isinstance(run_or_policy, AgentRun):
        run, policy = run_or_policy, run_or_policy.policy
    else:
        run, policy = None, run_or_policy
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "architecture": policy.architecture(),
        "weights": {k: np.asarray(v, dtype=float).tolist() for k, v in policy.weights.items()},
        "metadata": metadata or {},
    }
    if run is not None:
        doc["training"] = {
            "seed": run.seed,
            "epochs": run.epochs_done,
            "curve": [[p.epoch, p.infidelity, p.z_expectation] for p in run.curve],
            "optimizer": run.adam.state_dict() if run.adam else None,
            "rng_state": run.rng_state,
            "diverged": run.diverged,
            "lifetime": None if run.lifetime != run.lifetime else run.lifetime,
            "epoch0_infidelity": run.epoch0_infidelity,
            "bad_streak": run.bad_streak,
        }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> dict:
    """Returns ``{"policy", "metadata", "run"}``; ``run`` is None for weight-only files."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path}: not a policy checkpoint")
    if doc.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    policy: Policy = policy_from_dict(doc["architecture"], doc["weights"])
    run = None
    tr = doc.get("training")
    if tr is not None:
        run = AgentRun(tr["seed"], policy,
                       curve=[CurvePoint(int(e), i, z) for e, i, z in tr["curve"]],
                       adam=Adam.from_state(tr["optimizer"]) if tr["optimizer"] else None,
                       rng_state=tr["rng_state"], diverged=tr["diverged"],
                       lifetime=float("nan") if tr["lifetime"] is None else tr["lifetime"],
                       epoch0_infidelity=tr["epoch0_infidelity"], bad_streak=tr["bad_streak"])
    return {"policy": policy, "metadata": doc.get("metadata", {}), "run": run}
