"""Feedback policies mapping measurement history to half-cycle gate parameters.

Every policy emits ``standard + scale * tanh(raw)``: rotation angles and ECD
amplitudes move by at most 2, the virtual-rotation angle by at most 1.
Weights live in plain dicts of arrays; passing a dict of ``autodiff.Var``
instead makes the whole rollout differentiable.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .sbs import N_PARAMS, STANDARD_VECTOR

OUTPUT_SCALE = np.array([2.0] * (N_PARAMS - 1) + [1.0])
GRU_HIDDEN = 10
DENSE_WIDTH = 256


def corrected(raw):
    """Standard parameters plus the bounded correction for raw outputs."""
    return ad.add(STANDARD_VECTOR, ad.mul(OUTPUT_SCALE, ad.tanh(raw)))


class Policy:
    kind = "base"

    def __init__(self, weights: dict | None = None):
        self.weights = weights if weights is not None else {}

    def _w(self, weights):
        return self.weights if weights is None else weights

    def initial_state(self, weights=None):
        return None

    def step(self, weights, state, x: float):
        raise NotImplementedError

    def architecture(self) -> dict:
        return {"kind": self.kind}

    @property
    def outcome_independent(self) -> bool:
        return False

    def n_weights(self) -> int:
        return int(sum(np.size(v) for v in self.weights.values()))


class StandardPolicy(Policy):
    """The fixed standard half-cycle, independent of outcomes."""

    kind = "standard"

    def step(self, weights, state, x):
        return STANDARD_VECTOR, state

    @property
    def outcome_independent(self) -> bool:
        return True


class ConstantPolicy(Policy):
    """One trainable correction shared by every half-cycle."""

    kind = "constant"

    def __init__(self, weights=None):
        super().__init__(weights if weights is not None else {"raw": np.zeros(N_PARAMS)})

    def step(self, weights, state, x):
        return corrected(self._w(weights)["raw"]), state

    @property
    def outcome_independent(self) -> bool:
        return True


class LookupPolicy(Policy):
    """Independent raw parameters for every node of the outcome-history tree.

    Node 0 is the first half-cycle; the children of node ``i`` are ``2i+1``
    (after g) and ``2i+2`` (after e).
    """

    kind = "lookup"

    def __init__(self, depth: int, weights=None):
        if depth < 1:
            raise ValueError("lookup depth must be at least 1")
        self.depth = depth
        super().__init__(weights if weights is not None
                         else {"table": np.zeros((self.n_nodes(depth), N_PARAMS))})

    @staticmethod
    def n_nodes(depth: int) -> int:
        return 2**depth - 1

    def step(self, weights, state, x):
        if state is None:
            node = 0
        else:
            if x == 0:
                raise ValueError("lookup policy needs a measurement outcome after the first step")
            node = 2 * state + (1 if x > 0 else 2)
        if node >= self.n_nodes(self.depth):
            raise ValueError(f"history deeper than the lookup table depth {self.depth}")
        return corrected(ad.getitem(self._w(weights)["table"], node)), node

    def architecture(self):
        return {"kind": self.kind, "depth": self.depth}


def _uniform(rng, shape, r):
    return rng.uniform(-r, r, size=shape)


def _bias(rng, shape, bias_init):
    if bias_init == "uniform":
        return rng.uniform(-0.1, 0.1, size=shape)
    return np.full(shape, float(bias_init))


def _dense_init(rng, sizes, prefix, bias_init, zero_output):
    w = {}
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        w[f"{prefix}W{k}"] = np.zeros((a, b)) if last and zero_output else _uniform(rng, (a, b), 0.1)
        w[f"{prefix}b{k}"] = np.zeros(b) if last and zero_output else _bias(rng, b, bias_init)
    return w


def _dense(w, x, prefix, n_layers):
    for k in range(n_layers):
        x = ad.tanh(ad.matmul(x, w[f"{prefix}W{k}"]) + w[f"{prefix}b{k}"])
    return x


class FeedForwardPolicy(Policy):
    """Markovian policy: the latest outcome alone sets the correction (1 -> 256 -> 256 -> 15)."""

    kind = "fnn"

    def __init__(self, weights=None, seed: int = 0, bias_init=0.01, zero_output: bool = False):
        if weights is None:
            rng = np.random.default_rng(seed)
            weights = _dense_init(rng, [1, DENSE_WIDTH, DENSE_WIDTH, N_PARAMS], "d", bias_init, zero_output)
        super().__init__(weights)

    def step(self, weights, state, x):
        w = self._w(weights)
        raw = _dense(w, np.array([x], dtype=float), "d", 3)
        return ad.add(STANDARD_VECTOR, ad.mul(OUTPUT_SCALE, raw)), state


GRU_GATES = ("z", "r", "h")


def gru_forward(w: dict, h, x):
    """One GRU step, ``h' = (1 - z) h + z h_cand``."""
    x = np.atleast_1d(np.asarray(x, dtype=float)) if not isinstance(x, ad.Var) else x
    z = ad.sigmoid(ad.matmul(x, w["Wz"]) + ad.matmul(h, w["Uz"]) + w["bz"])
    r = ad.sigmoid(ad.matmul(x, w["Wr"]) + ad.matmul(h, w["Ur"]) + w["br"])
    cand = ad.tanh(ad.matmul(x, w["Wh"]) + ad.matmul(ad.mul(r, h), w["Uh"]) + w["bh"])
    return ad.add(ad.mul(ad.add(1.0, ad.neg(z)), h), ad.mul(z, cand))


class RecurrentPolicy(Policy):
    """Non-Markovian policy: GRU(10) memory of the outcome history, then 10 -> 256 -> 256 -> 15."""

    kind = "gru"

    def __init__(self, weights=None, seed: int = 0, bias_init=0.01, zero_output: bool = False):
        if weights is None:
            rng = np.random.default_rng(seed)
            weights = {}
            for g in GRU_GATES:
                weights[f"W{g}"] = _uniform(rng, (1, GRU_HIDDEN), 0.1)
                weights[f"U{g}"] = _uniform(rng, (GRU_HIDDEN, GRU_HIDDEN), 0.1)
                weights[f"b{g}"] = _bias(rng, GRU_HIDDEN, bias_init)
            weights.update(_dense_init(rng, [GRU_HIDDEN, DENSE_WIDTH, DENSE_WIDTH, N_PARAMS], "d",
                                       bias_init, zero_output))
        super().__init__(weights)

    def initial_state(self, weights=None):
        return np.zeros(GRU_HIDDEN)

    def step(self, weights, state, x):
        w = self._w(weights)
        h = gru_forward(w, state, x)
        raw = _dense(w, h, "d", 3)
        return ad.add(STANDARD_VECTOR, ad.mul(OUTPUT_SCALE, raw)), h


POLICY_KINDS = {"standard": StandardPolicy, "constant": ConstantPolicy, "lookup": LookupPolicy,
                "fnn": FeedForwardPolicy, "gru": RecurrentPolicy}


def make_policy(kind: str, **kw) -> Policy:
    if kind not in POLICY_KINDS:
        raise ValueError(f"unknown policy kind {kind!r}; choose from {sorted(POLICY_KINDS)}")
    cls = POLICY_KINDS[kind]
    if kind in ("standard", "constant"):
        return cls()
    if kind == "lookup":
        return cls(kw.get("depth", 4))
    return cls(seed=kw.get("seed", 0), bias_init=kw.get("bias_init", 0.01),
               zero_output=kw.get("zero_output", False))


def policy_from_dict(arch: dict, weights: dict) -> Policy:
    kind = arch["kind"]
    w = {k: np.asarray(v, dtype=float) for k, v in weights.items()}
    if kind == "standard":
        return StandardPolicy()
    if kind == "lookup":
        return LookupPolicy(arch["depth"], w)
    return POLICY_KINDS[kind](weights=w)
