"""Feedback-GRAPE training of feedback policies.

The gradient estimator differentiates the surrogate
``mean_b [R_b + stop(R_b) * sum_k log p(m_k)]`` whose gradient is the pathwise
term plus the score-function term of measurement-conditioned rollouts.
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .fock import HilbertConfig
from .gkp import CodeLattice, GkpStateSpec, logical_ket, pauli_operator
from .lindblad import IntegratorConfig, NoiseModel
from .policies import LookupPolicy, Policy, make_policy
from .sbs import (Engine, HalfCycleParams, Schedule, Trajectory, expected_return,
                  run_trajectory)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 6
    n_cycles_train: int = 10
    learning_rate: float = 1e-4
    noise_preset: str = "low"
    seed: int = 0
    n_agents: int = 20
    delta: float = 0.34
    n_fock: int = 100
    dt: float = 1.0 / 2000
    schedule: str = "standard"
    lumped_dephasing: bool = False
    grad_clip: float | None = None
    bias_init: float | str = 0.01
    zero_output: bool = False
    eval_cycles: int = 100
    eval_batch: int = 8
    eval_seed: int = 12345
    max_truncation_loss: float = 1e-6
    alpha_l4_re: float = 0.0
    alpha_l4_im: float = 0.0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "n_cycles_train", "n_agents", "n_fock", "eval_cycles",
                     "eval_batch"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    def engine(self) -> Engine:
        return Engine(HilbertConfig(self.n_fock),
                      NoiseModel.preset(self.noise_preset, self.lumped_dephasing),
                      Schedule.from_kind(self.schedule), integ=IntegratorConfig(self.dt),
                      alpha_l4=complex(self.alpha_l4_re, self.alpha_l4_im))

    def initial_state(self) -> np.ndarray:
        return logical_ket(GkpStateSpec("+Z", self.delta, cfg=HilbertConfig(self.n_fock),
                                        max_truncation_loss=self.max_truncation_loss))


# -- estimator ----------------------------------------------------------------------

def episode_return(traj: Trajectory, rho0=None) -> float:
    """Fidelity of the final cavity state with the initial one (stored on the trajectory)."""
    if rho0 is None:
        return traj.return_value
    from .sbs import cavity_fidelity
    return float(ad.value(cavity_fidelity(traj.final_rho, np.asarray(rho0, dtype=complex))))


def surrogate(trajectories: list[Trajectory]):
    """``mean[R + stop(R) * log P]``; its gradient is the Feedback-GRAPE estimator."""
    if not trajectories:
        raise ValueError("empty batch")
    total = 0.0
    for tr in trajectories:
        r = tr.return_var if tr.return_var is not None else tr.return_value
        score = 0.0 if tr.log_prob_var is None else tr.return_value * tr.log_prob_var
        total = total + r + score
    return total * (1.0 / len(trajectories))


def grape_gradient(trajectories: list[Trajectory], wrt: dict) -> dict:
    """Gradient of the surrogate with respect to every Var in ``wrt``."""
    s = surrogate(trajectories)
    names = list(wrt)
    grads = ad.grad(s, [wrt[k] for k in names])
    return dict(zip(names, grads))


def to_vars(weights: dict) -> dict:
    return {k: ad.Var(np.array(v, dtype=float)) for k, v in weights.items()}


def rollout(policy: Policy, weights: dict, rho0, n_half: int, engine: Engine, rng,
            batch_size: int, z_op=None) -> list[Trajectory]:
    mode = "autonomous" if engine.schedule.kind == "autonomous" else "stochastic"
    return [run_trajectory(rho0, policy, n_half, engine, mode=mode, rng=rng, weights=weights,
                           z_op=z_op) for _ in range(batch_size)]


# -- optimizer ------------------------------------------------------------------------

class Adam:
    """Adam for gradient ascent on dicts of arrays."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for k, p in params.items():
            g = grads[k]
            m = self.beta1 * self.m.get(k, 0.0) + (1 - self.beta1) * g
            v = self.beta2 * self.v.get(k, 0.0) + (1 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            mh = m / (1 - self.beta1**self.t)
            vh = v / (1 - self.beta2**self.t)
            out[k] = p + self.lr * mh / (np.sqrt(vh) + self.eps)
        return out

    def state_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "t": self.t, "m": {k: np.asarray(v).tolist() for k, v in self.m.items()},
                "v": {k: np.asarray(v).tolist() for k, v in self.v.items()}}

    @classmethod
    def from_state(cls, d: dict) -> "Adam":
        a = cls(d["lr"], d["beta1"], d["beta2"], d["eps"])
        a.t = d["t"]
        a.m = {k: np.asarray(v, dtype=float) for k, v in d["m"].items()}
        a.v = {k: np.asarray(v, dtype=float) for k, v in d["v"].items()}
        return a


def _clip(grads: dict, limit: float | None) -> dict:
    if limit is None:
        return grads
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= limit:
        return grads
    return {k: g * (limit / norm) for k, g in grads.items()}


# -- training -------------------------------------------------------------------------

@dataclass
class CurvePoint:
    epoch: int
    infidelity: float
    z_expectation: float


@dataclass
class AgentRun:
    seed: int
    policy: Policy
    curve: list = field(default_factory=list)
    adam: Adam | None = None
    rng_state: dict | None = None
    diverged: bool = False
    lifetime: float = float("nan")
    epoch0_infidelity: float | None = None
    bad_streak: int = 0

    @property
    def epochs_done(self) -> int:
        return self.curve[-1].epoch + 1 if self.curve else 0


DIVERGENCE_FACTOR = 10.0
DIVERGENCE_PATIENCE = 50


def frame_sign(pauli: str, cycles: int) -> int:
    """Sign of the deterministic logical frame after ``cycles`` full standard cycles.

    Each half-cycle's large conditional displacement applies a logical X in
    the current quadrature frame; two half-cycles with quarter-turn virtual
    rotations amount to Y up to stabilizers, so X and Z flip each cycle.
    """
    return 1 if pauli == "Y" or cycles % 2 == 0 else -1


def train_agent(cfg: TrainConfig, policy: Policy, run: AgentRun | None = None,
                engine: Engine | None = None, rho0=None, epochs: int | None = None,
                on_epoch=None) -> AgentRun:
    """Train one policy with Adam ascent on the Feedback-GRAPE surrogate.

    Passing a previous ``run`` resumes it (weights, optimizer and RNG state),
    continuing the epoch numbering.
    """
    engine = engine or cfg.engine()
    rho0 = cfg.initial_state() if rho0 is None else rho0
    z_op = pauli_operator(CodeLattice.square(), "Z", engine.cfg)
    if run is None:
        run = AgentRun(cfg.seed, policy, adam=Adam(cfg.learning_rate))
    rng = np.random.default_rng(cfg.seed)
    if run.rng_state is not None:
        rng.bit_generator.state = copy.deepcopy(run.rng_state)
    adam = run.adam or Adam(cfg.learning_rate)
    n_half = 2 * cfg.n_cycles_train
    sign = frame_sign("Z", cfg.n_cycles_train)
    weights = {k: np.array(v, dtype=float) for k, v in policy.weights.items()}
    start = run.epochs_done
    stop = start + (cfg.epochs if epochs is None else epochs)
    for epoch in range(start, stop):
        wv = to_vars(weights)
        batch = rollout(policy, wv, rho0, n_half, engine, rng, cfg.batch_size, z_op)
        grads = _clip(grape_gradient(batch, wv), cfg.grad_clip)
        if not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise FloatingPointError(f"non-finite gradient at epoch {epoch}")
        infid = 1.0 - float(np.mean([t.return_value for t in batch]))
        z = float(np.mean([t.z_snapshots[-1] for t in batch])) * sign if n_half else 1.0
        run.curve.append(CurvePoint(epoch, infid, z))
        weights = adam.step(weights, grads)
        policy.weights = weights
        if run.epoch0_infidelity is None:
            run.epoch0_infidelity = infid
        if infid > DIVERGENCE_FACTOR * run.epoch0_infidelity:
            run.bad_streak += 1
        else:
            run.bad_streak = 0
        if on_epoch is not None:
            on_epoch(run)
        if run.bad_streak >= DIVERGENCE_PATIENCE:
            log.warning("agent seed=%s diverged at epoch %d", run.seed, epoch)
            run.diverged = True
            break
    run.adam = adam
    run.rng_state = copy.deepcopy(rng.bit_generator.state)
    return run


@dataclass
class TrainResult:
    best: AgentRun
    agents: list


def train(cfg: TrainConfig, policy_variant: str, evaluate: bool = True, on_epoch=None) -> TrainResult:
    """Train ``n_agents`` independent agents and post-select the longest-lived one."""
    from .evaluation import evaluate_policy_lifetime

    engine = cfg.engine()
    rho0 = cfg.initial_state()
    agents = []
    for k in range(cfg.n_agents):
        seed = cfg.seed + k
        acfg = TrainConfig(**{**asdict(cfg), "seed": seed})
        pol = make_policy(policy_variant, seed=seed, bias_init=cfg.bias_init,
                          zero_output=cfg.zero_output, depth=2 * cfg.n_cycles_train)
        run = train_agent(acfg, pol, engine=engine, rho0=rho0, on_epoch=on_epoch)
        if evaluate and not run.diverged:
            fit = evaluate_policy_lifetime(pol, engine, cfg.delta, cfg.eval_cycles,
                                           cfg.eval_batch, cfg.eval_seed)
            run.lifetime = fit.T
        agents.append(run)
    ok = [a for a in agents if not a.diverged] or agents
    if evaluate:
        best = max(ok, key=lambda a: (a.lifetime if not math.isnan(a.lifetime) else -1.0))
    else:
        best = min(ok, key=lambda a: a.curve[-1].infidelity if a.curve else math.inf)
    return TrainResult(best, agents)


# -- exact-tree optimization -------------------------------------------------------------

def exact_objective(policy: Policy, weights: dict, rho0, n_half: int, engine: Engine):
    """Exact expected return and its gradient with respect to ``weights``."""
    wv = to_vars(weights)
    r = expected_return(rho0, policy, n_half, engine, wv)
    names = list(wv)
    g = ad.grad(r, [wv[k] for k in names])
    return float(ad.value(r)), dict(zip(names, g))


def optimize_lookup(n_half_cycles: int, rho0, engine: Engine, maxiter: int = 200,
                    gtol: float = 1e-7, init: np.ndarray | None = None) -> tuple[LookupPolicy, dict]:
    """Maximize the exact branch-tree expected return over a full lookup table (L-BFGS)."""
    from scipy.optimize import minimize

    pol = LookupPolicy(n_half_cycles)
    shape = pol.weights["table"].shape
    x0 = np.zeros(shape).ravel() if init is None else np.asarray(init, float).ravel()
    history = []

    def fun(x):
        val, g = exact_objective(pol, {"table": x.reshape(shape)}, rho0, n_half_cycles, engine)
        history.append(val)
        return -val, -g["table"].ravel()

    res = minimize(fun, x0, jac=True, method="L-BFGS-B", options={"maxiter": maxiter, "gtol": gtol})
    pol.weights = {"table": res.x.reshape(shape)}
    info = {"expected_return": -float(res.fun), "iterations": int(res.nit),
            "evaluations": len(history), "message": str(res.message),
            "start_return": history[0] if history else None}
    return pol, info


def exact_train(policy: Policy, rho0, n_half: int, engine: Engine, epochs: int, lr: float,
                on_epoch=None) -> list[float]:
    """Adam ascent on the exact tree objective (no sampling)."""
    adam = Adam(lr)
    weights = {k: np.array(v, dtype=float) for k, v in policy.weights.items()}
    curve = []
    for _ in range(epochs):
        val, g = exact_objective(policy, weights, rho0, n_half, engine)
        curve.append(val)
        weights = adam.step(weights, g)
        policy.weights = weights
        if on_epoch is not None:
            on_epoch(len(curve), val)
    return curve


def calibrate_alpha_l4(n_fock: int = 40, delta: float = 0.34, amplitudes=(0.1, 0.2, 0.3),
                       n_half: int = 4) -> tuple[complex, dict]:
    """Grid search of the layer-4 displacement maximizing noiseless two-cycle fidelity."""
    cfg = HilbertConfig(n_fock)
    psi = logical_ket(GkpStateSpec("+Z", delta, cfg=cfg, max_truncation_loss=1e-2))
    grid = [0j] + [s * a for a in amplitudes for s in (1, -1, 1j, -1j)]
    table = {}
    for a in grid:
        eng = Engine(cfg, NoiseModel(), alpha_l4=a)
        table[a] = float(expected_return(psi, None, n_half, eng))
    best = max(table, key=table.get)
    return best, table


def standard_params() -> HalfCycleParams:
    return HalfCycleParams.standard()
