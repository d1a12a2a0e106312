"""small-BIG-small error-correction circuit: gates, schedule, measurement and trajectories.

Gates are instantaneous unitaries; each schedule segment after a gate layer
is dissipative idling under the Lindblad generator. All circuit functions
accept either plain arrays or ``autodiff.Var`` parameters, so the same code
produces differentiable rollouts for training.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .fock import (PROJ_G, SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Y, HilbertConfig,
                   as_density, check_truncation, displacement, displacement_generators,
                   kron)
from .lindblad import (Generator, HamiltonianParams, IntegratorConfig, NoiseModel,
                       build_generator, propagate)

N_PARAMS = 15
# layout of the 15-vector
PHI = slice(0, 4)
THETA = slice(4, 8)
BETA_RE = slice(8, 11)
BETA_IM = slice(11, 14)
VR = 14

MAX_ENUM_DEPTH = 12
# smallest branch probability treated as possible
MIN_BRANCH_PROB = 1e-12

OUTCOME_CODE = {"g": 1.0, "e": -1.0, None: 0.0}


class ImpossibleBranchError(ValueError):
    """A forced measurement outcome has (numerically) zero probability."""


@dataclass(frozen=True)
class HalfCycleParams:
    phi: tuple = (math.pi / 2, 0.0, 0.0, math.pi / 2)
    theta: tuple = (math.pi / 2, -math.pi / 2, math.pi / 2, -math.pi / 2)
    beta_re: tuple = (0.0, math.sqrt(2 * math.pi), 0.0)
    beta_im: tuple = (0.2, 0.0, 0.2)
    theta_vr: float = math.pi / 2
    alpha_l4: complex = 0j

    def __post_init__(self):
        if (len(self.phi), len(self.theta), len(self.beta_re), len(self.beta_im)) != (4, 4, 3, 3):
            raise ValueError("half-cycle needs 4 phi, 4 theta and 3 complex ECD amplitudes")

    @classmethod
    def standard(cls, alpha_l4: complex = 0j) -> "HalfCycleParams":
        return cls(alpha_l4=complex(alpha_l4))

    def vector(self) -> np.ndarray:
        return np.array([*self.phi, *self.theta, *self.beta_re, *self.beta_im, self.theta_vr])

    @classmethod
    def from_vector(cls, v, alpha_l4: complex = 0j) -> "HalfCycleParams":
        v = np.asarray(v, dtype=float)
        if v.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters, got shape {v.shape}")
        return cls(tuple(v[PHI]), tuple(v[THETA]), tuple(v[BETA_RE]), tuple(v[BETA_IM]),
                   float(v[VR]), complex(alpha_l4))


STANDARD_VECTOR = HalfCycleParams.standard().vector()
STANDARD_VECTOR.setflags(write=False)


@dataclass(frozen=True)
class Schedule:
    """Segment durations of one half-cycle in cycle units."""

    kind: str
    segments: tuple  # ((label, duration), ...)

    @property
    def durations(self) -> dict:
        return dict(self.segments)

    @property
    def total(self) -> float:
        return float(sum(d for _, d in self.segments))

    @property
    def measured(self) -> bool:
        return "measure_reset" in self.durations

    @property
    def pre_measurement(self) -> float:
        d = self.durations
        return d["entering"] + d["L1"] + d["L2"] + d["L3"] + d["L4"]

    @classmethod
    def standard(cls) -> "Schedule":
        return cls("standard", (("entering", 0.01), ("L1", 0.05), ("L2", 0.07), ("L3", 0.03),
                                ("L4", 0.01), ("measure_reset", 0.23), ("vr_idle", 0.10)))

    @classmethod
    def autonomous(cls) -> "Schedule":
        return cls("autonomous", (("entering", 0.01), ("L1", 0.05), ("L2", 0.07), ("L3", 0.03),
                                  ("L4", 0.01), ("reset", 0.08), ("vr_idle", 0.10)))

    @classmethod
    def simplified(cls, layer: float = 0.05) -> "Schedule":
        return cls("simplified", (("entering", layer), ("L1", layer), ("L2", layer), ("L3", layer),
                                  ("L4", layer), ("measure_reset", 0.0), ("vr_idle", layer)))

    @classmethod
    def from_kind(cls, kind: str) -> "Schedule":
        try:
            return {"standard": cls.standard, "autonomous": cls.autonomous,
                    "simplified": cls.simplified}[kind]()
        except KeyError:
            raise ValueError(f"unknown schedule kind {kind!r}") from None


# -- gates ---------------------------------------------------------------------------

def gate_qubit_rotation(phi, theta):
    """``exp(-i theta/2 (cos(phi) sx + sin(phi) sy))`` in closed form."""
    c = ad.cos(theta * 0.5)
    s = ad.sin(theta * 0.5)
    axis = ad.cos(phi) * SIGMA_X + ad.sin(phi) * SIGMA_Y
    return c * np.eye(2) + (-1j * s) * axis


def _displacement_op(re, im, n):
    if not isinstance(re, ad.Var) and not isinstance(im, ad.Var):
        return displacement(complex(float(re), float(im)), HilbertConfig(n))
    k_re, k_im = displacement_generators(n)
    return ad.expm(re * k_re + im * k_im)


def gate_displacement(zeta, cfg: HilbertConfig):
    return displacement(zeta, cfg)


def gate_ecd(beta, cfg: HilbertConfig, beta_im=None):
    """``D(beta/2) (x) sigma_minus + D(-beta/2) (x) sigma_plus``.

    ``beta`` may be complex, or the real part with ``beta_im`` the imaginary part.
    """
    if beta_im is None:
        beta = complex(beta)
        re, im = beta.real, beta.imag
    else:
        re, im = beta, beta_im
    if not isinstance(re, ad.Var) and not isinstance(im, ad.Var):
        check_truncation(complex(float(re), float(im)) / 2, cfg)
    d = _displacement_op(re * 0.5, im * 0.5, cfg.n_fock)
    return ad.kron(d, SIGMA_MINUS) + ad.kron(ad.dagger(d), SIGMA_PLUS)


def gate_virtual_rotation(theta_vr, cfg: HilbertConfig):
    """Cavity rotation ``exp(i theta n)`` (diagonal)."""
    return np.diag(np.exp(1j * float(theta_vr) * np.arange(cfg.n_fock)))


@lru_cache(maxsize=16)
def _joint_photon_numbers(n: int) -> np.ndarray:
    return np.repeat(np.arange(n, dtype=float), 2)


def apply_virtual_rotation(rho, theta_vr):
    """``VR rho VR^dag`` on a joint state, as an elementwise phase."""
    m = _joint_photon_numbers(ad.value(rho).shape[0] // 2)
    phase = ad.exp(theta_vr * (1j * m))
    return ad.mul(ad.mul(rho, ad.reshape(phase, (-1, 1))), ad.reshape(ad.conj(phase), (1, -1)))


def _on_qubit(u, n):
    return ad.kron(np.eye(n), u)


def _on_cavity(u):
    return ad.kron(u, np.eye(2))


# -- measurement and reset -----------------------------------------------------------

def _block(rho, q):
    """Cavity block ``<q| rho |q>`` of a joint state."""
    return ad.getitem(rho, (slice(q, None, 2), slice(q, None, 2)))


def _embed(rho_c, q=0):
    n = ad.value(rho_c).shape[0]

    def fwd(x):
        out = np.zeros((2 * n, 2 * n), dtype=complex)
        out[q::2, q::2] = x
        return out

    return ad.linear_op(fwd, lambda g: g[q::2, q::2], rho_c)


def reset_ancilla(rho):
    """Trace out the qubit and re-prepare it in ``|g>``."""
    return _embed(_block(rho, 0) + _block(rho, 1), 0)


def outcome_probability(rho, q):
    return ad.real(ad.trace(_block(rho, q)))


@dataclass
class MeasurementRecord:
    outcome: str
    probability: float
    log_prob: float


def measure_ancilla(rho, rng=None, forced: str | None = None, normalize: bool = True):
    """Projective ancilla measurement.

    Returns ``(record, post_state, p)`` where ``p`` is the (possibly
    differentiable) outcome probability. The outcome is ``g`` when a uniform
    draw falls below ``p_g``, unless ``forced``. With ``normalize=False`` the
    projected state keeps its weight (trace = branch probability).
    """
    p_g = outcome_probability(rho, 0)
    pg = float(ad.value(p_g))
    tr = float(np.real(np.trace(ad.value(rho))))
    if forced is None:
        if rng is None:
            raise ValueError("need an rng or a forced outcome")
        outcome = "g" if rng.random() * tr < pg else "e"
    elif forced in ("g", "e"):
        outcome = forced
    else:
        raise ValueError(f"outcome must be 'g' or 'e', got {forced!r}")
    q = 0 if outcome == "g" else 1
    p = p_g if q == 0 else outcome_probability(rho, 1)
    pv = float(ad.value(p))
    if pv / max(tr, 1e-300) < MIN_BRANCH_PROB:
        raise ImpossibleBranchError(f"outcome {outcome} has probability {pv:.3g}")
    post = _embed(_block(rho, q), q)
    if normalize:
        post = post * ad.reciprocal(p)
    rel = pv / tr
    return MeasurementRecord(outcome, rel, math.log(rel)), post, p


def parse_outcomes(s: str) -> list[str]:
    s = s.strip()
    bad = set(s) - {"g", "e"}
    if bad:
        raise ValueError(f"outcome string may only contain 'g'/'e', found {sorted(bad)}")
    return list(s)


# -- engine --------------------------------------------------------------------------

@dataclass
class Engine:
    """Fixed physical setting of a run: truncation, noise, schedule and integrator."""

    cfg: HilbertConfig = field(default_factory=HilbertConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    schedule: Schedule = field(default_factory=Schedule.standard)
    ham: HamiltonianParams = field(default_factory=HamiltonianParams)
    integ: IntegratorConfig = field(default_factory=IntegratorConfig)
    alpha_l4: complex = 0j

    def __post_init__(self):
        self.gen: Generator = build_generator(self.noise, self.ham, self.cfg)
        self._adj = self.gen.adjoint()
        self._l4 = _on_cavity(displacement(self.alpha_l4, self.cfg))

    def with_schedule(self, schedule: Schedule) -> "Engine":
        return Engine(self.cfg, self.noise, schedule, self.ham, self.integ, self.alpha_l4)

    def idle(self, rho, duration: float):
        if duration == 0 or self.gen.is_identity:
            return rho
        dt = self.integ.dt
        return ad.linear_op(lambda x: propagate(x, duration, self.gen, dt),
                            lambda g: propagate(g, duration, self._adj, dt), rho)

    def initial_joint(self, state) -> np.ndarray:
        rho_c = as_density(np.asarray(state, dtype=complex))
        if rho_c.shape != (self.cfg.n_fock,) * 2:
            raise ValueError(f"initial state must be a {self.cfg.n_fock}-level cavity state")
        return np.kron(rho_c, PROJ_G)


def apply_half_cycle(rho, params, engine: Engine):
    """Gate layers 1-4 with their idle segments; returns the pre-measurement state.

    ``params`` is a ``HalfCycleParams`` or a 15-vector (array or Var).
    """
    if isinstance(params, HalfCycleParams):
        p = params.vector()
        l4 = _on_cavity(displacement(params.alpha_l4, engine.cfg))
    else:
        p = params
        l4 = engine._l4
    if ad.value(p).shape != (N_PARAMS,):
        raise ValueError(f"expected {N_PARAMS} half-cycle parameters")
    n = engine.cfg.n_fock
    dur = engine.schedule.durations
    rho = engine.idle(rho, dur["entering"])
    for layer in range(3):
        r = _on_qubit(gate_qubit_rotation(p[layer], p[4 + layer]), n)
        rho = ad.sandwich(r, rho)
        rho = ad.sandwich(gate_ecd(p[8 + layer], engine.cfg, p[11 + layer]), rho)
        rho = engine.idle(rho, dur[f"L{layer + 1}"])
    rho = ad.sandwich(_on_qubit(gate_qubit_rotation(p[3], p[7]), n), rho)
    rho = l4 @ rho @ l4.conj().T if not isinstance(rho, ad.Var) else ad.sandwich(l4, rho)
    return engine.idle(rho, dur["L4"])


def finish_half_cycle(rho, params, engine: Engine):
    """Reset, idle through the measurement/reset window, virtual rotation and final idle.

    ``rho`` is the post-measurement state (or pre-measurement for autonomous runs).
    """
    dur = engine.schedule.durations
    rho = reset_ancilla(rho)
    rho = engine.idle(rho, dur.get("measure_reset", dur.get("reset", 0.0)))
    vr = params.theta_vr if isinstance(params, HalfCycleParams) else params[VR]
    rho = apply_virtual_rotation(rho, vr)
    return engine.idle(rho, dur["vr_idle"])


# -- trajectories --------------------------------------------------------------------

@dataclass
class Trajectory:
    records: list
    final_rho: np.ndarray
    return_value: float
    cumulative_log_prob: float
    params_used: list = field(default_factory=list)
    z_snapshots: list = field(default_factory=list)
    # differentiable pieces (None unless the rollout carried Vars)
    return_var: object = None
    log_prob_var: object = None

    @property
    def outcomes(self) -> str:
        return "".join(r.outcome for r in self.records)

    @property
    def probability(self) -> float:
        return math.exp(self.cumulative_log_prob)

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for k, rec in enumerate(self.records):
                row = {"half_cycle": k, "outcome": rec.outcome, "p": rec.probability,
                       "log_p": rec.log_prob,
                       "params": [float(x) for x in self.params_used[k]]}
                if k < len(self.z_snapshots):
                    row["z"] = self.z_snapshots[k]
                fh.write(json.dumps(row) + "\n")


def _target(rho0):
    x = np.asarray(rho0, dtype=complex)
    return x if x.ndim == 1 else None


def cavity_fidelity(rho_joint, target):
    """``<psi| Tr_q rho |psi>`` for a pure target ket (or Tr(sigma rho_c) for a matrix)."""
    rho_c = _block(rho_joint, 0) + _block(rho_joint, 1)
    sigma = np.outer(target, target.conj()) if target.ndim == 1 else target
    return ad.real(ad.total(ad.mul(rho_c, sigma.T)))


def _z_value(rho, z_op):
    v = ad.value(rho)
    rho_c = v[0::2, 0::2] + v[1::2, 1::2]
    tr = np.real(np.trace(rho_c))
    return float(np.real(np.sum(z_op.T * rho_c)) / tr)


def _standard_policy():
    from .policies import StandardPolicy
    return StandardPolicy()


def run_trajectory(rho0, policy, n_half_cycles: int, engine: Engine, mode: str = "stochastic",
                   seed=None, outcomes=None, weights=None, z_op=None, cache: dict | None = None,
                   rng=None) -> Trajectory:
    """Run the feedback loop for ``n_half_cycles``.

    mode: ``stochastic`` (Monte-Carlo outcomes from ``seed``/``rng``), ``forced``
    (``outcomes`` string or list), ``autonomous`` (no measurement, always reset),
    or ``average`` (non-selective measurement; exact mean for
    outcome-independent policies). ``weights`` are passed to the policy and may
    hold Vars. ``cache`` shares work between runs of a deterministic policy
    (forward only), keyed on the outcome prefix.
    """
    if n_half_cycles < 0:
        raise ValueError("n_half_cycles must be non-negative")
    policy = policy if policy is not None else _standard_policy()
    if mode == "autonomous" and engine.schedule.measured:
        engine = engine.with_schedule(Schedule.autonomous())
    if mode == "forced":
        outcomes = parse_outcomes(outcomes) if isinstance(outcomes, str) else list(outcomes)
        if len(outcomes) < n_half_cycles:
            raise ValueError("forced outcome sequence shorter than the number of half-cycles")
    elif mode == "stochastic":
        rng = rng if rng is not None else np.random.default_rng(seed)
    elif mode not in ("autonomous", "average"):
        raise ValueError(f"unknown mode {mode!r}")
    target = _target(rho0)
    if target is None:
        target = np.asarray(rho0, dtype=complex)
    rho = engine.initial_joint(rho0)
    state = policy.initial_state(weights)
    x = None
    records, used, zs = [], [], []
    logp_var = 0.0
    prefix = ""
    differentiable = weights is not None and any(isinstance(w, ad.Var) for w in _flat(weights))
    use_cache = cache is not None and not differentiable
    for k in range(n_half_cycles):
        key = prefix
        if use_cache and key in cache:
            pre, p, state = cache[key]
        else:
            p, state = policy.step(weights, state, OUTCOME_CODE[x])
            pre = apply_half_cycle(rho, p, engine)
            if use_cache:
                cache[key] = (pre, p, state)
        used.append(np.array(ad.value(p), dtype=float))
        if mode in ("autonomous", "average"):
            post = pre
        else:
            rec, post, pm = measure_ancilla(pre, rng=rng if mode == "stochastic" else None,
                                            forced=outcomes[k] if mode == "forced" else None)
            records.append(rec)
            logp_var = logp_var + ad.log(pm)
            x = rec.outcome
            prefix += rec.outcome
        ckey = prefix + "|post"
        if use_cache and mode != "average" and ckey in cache:
            rho = cache[ckey]
        else:
            rho = finish_half_cycle(post, p, engine)
            if use_cache and mode != "average":
                cache[ckey] = rho
        if z_op is not None:
            zs.append(_z_value(rho, z_op))
    ret = cavity_fidelity(rho, target)
    cum = float(sum(r.log_prob for r in records))
    return Trajectory(records, np.array(ad.value(rho)), float(ad.value(ret)), cum, used, zs,
                      ret if isinstance(ret, ad.Var) else None,
                      logp_var if isinstance(logp_var, ad.Var) else None)


def _flat(weights):
    if weights is None:
        return []
    if isinstance(weights, dict):
        return list(weights.values())
    if isinstance(weights, (list, tuple)):
        return list(weights)
    return [weights]


@dataclass
class Branch:
    outcomes: str
    probability: float
    final_rho: np.ndarray
    return_value: float


def _check_depth(n):
    if n > MAX_ENUM_DEPTH:
        raise ValueError(f"enumeration depth {n} exceeds the guard of {MAX_ENUM_DEPTH} half-cycles")
    if n < 0:
        raise ValueError("depth must be non-negative")


def _walk(rho, policy, state, x, depth, engine, weights, visit, prefix=""):
    """Depth-first walk over unnormalized branch states."""
    if depth == 0:
        visit(prefix, rho)
        return
    p, state = policy.step(weights, state, OUTCOME_CODE[x])
    pre = apply_half_cycle(rho, p, engine)
    tr = float(np.real(np.trace(ad.value(pre))))
    for q, o in enumerate("ge"):
        blk = _block(pre, q)
        if float(np.real(np.trace(ad.value(blk)))) <= MIN_BRANCH_PROB * tr:
            continue
        post = finish_half_cycle(_embed(blk, q), p, engine)
        _walk(post, policy, state, o, depth - 1, engine, weights, visit, prefix + o)


def enumerate_branches(rho0, policy, n_half_cycles: int, engine: Engine, weights=None) -> list[Branch]:
    """All measurement branches with their probabilities, normalized final states and returns."""
    _check_depth(n_half_cycles)
    policy = policy if policy is not None else _standard_policy()
    target = _target(rho0)
    if target is None:
        target = np.asarray(rho0, dtype=complex)
    out = []

    def visit(prefix, rho):
        v = np.array(ad.value(rho))
        p = float(np.real(np.trace(v)))
        v = v / p
        out.append(Branch(prefix, p, v, float(ad.value(cavity_fidelity(v, target)))))

    rho = engine.initial_joint(rho0)
    _walk(rho, policy, policy.initial_state(weights), None, n_half_cycles, engine, weights, visit)
    return out


def expected_return(rho0, policy, n_half_cycles: int, engine: Engine, weights=None):
    """Exact expected fidelity summed over the branch tree (a Var when ``weights`` hold Vars).

    Unnormalized branch states carry their probability in the trace, so the
    expectation is the sum of ``Tr(sigma rho_branch)``.
    """
    _check_depth(n_half_cycles)
    policy = policy if policy is not None else _standard_policy()
    target = _target(rho0)
    if target is None:
        target = np.asarray(rho0, dtype=complex)
    acc = []
    _walk(engine.initial_joint(rho0), policy, policy.initial_state(weights), None, n_half_cycles,
          engine, weights, lambda prefix, rho: acc.append(cavity_fidelity(rho, target)))
    total = acc[0]
    for a in acc[1:]:
        total = total + a
    return total


def expected_observable(rho0, policy, n_half_cycles: int, engine: Engine, op: np.ndarray, weights=None) -> float:
    """Exact expectation of a cavity observable at the end, averaged over branches."""
    _check_depth(n_half_cycles)
    policy = policy if policy is not None else _standard_policy()
    acc = []

    def visit(prefix, rho):
        v = ad.value(rho)
        rho_c = v[0::2, 0::2] + v[1::2, 1::2]
        acc.append(float(np.real(np.sum(op.T * rho_c))))

    _walk(engine.initial_joint(rho0), policy, policy.initial_state(weights), None, n_half_cycles,
          engine, weights, visit)
    return float(sum(acc))
