"""Logical lifetimes, channel fidelities, error-injection studies and strategy fits."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit, least_squares

from .fock import HilbertConfig, displacement
from .gkp import CodeLattice, GkpStateSpec, logical_expectation, logical_ket, pauli_operator
from .grape import frame_sign
from .policies import Policy
from .sbs import N_PARAMS, Engine, run_trajectory

# bosonic-channel threshold, quoted for reference only
INFIDELITY_THRESHOLD_REFERENCE = 1e-6


@dataclass
class LifetimeFit:
    T: float
    amplitude: float
    residual: float
    T_err: float = float("nan")
    measurable: bool = True

    def to_dict(self) -> dict:
        return {"T": None if math.isinf(self.T) else self.T, "amplitude": self.amplitude,
                "residual": self.residual,
                "T_err": None if not math.isfinite(self.T_err) else self.T_err,
                "measurable": self.measurable}


def _model(t, a, rate):
    return a * np.exp(-rate * t)


def fit_lifetime(t, values, sigma=None) -> LifetimeFit:
    """Fit ``v(t) = A exp(-t/T)``.

    A log-linear fit of the positive points initializes a (weighted) nonlinear
    least-squares fit. ``T`` is reported as infinite (``measurable=False``)
    when the fitted decay over the window is below twice its standard error.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.size < 2:
        raise ValueError("need matching time and value arrays with at least two points")
    pos = v > 0
    if pos.sum() >= 2 and np.ptp(t[pos]) > 0:
        slope, icpt = np.polyfit(t[pos], np.log(v[pos]), 1)
        p0 = [math.exp(icpt), max(-slope, 0.0)]
    else:
        p0 = [float(v[0]) if v[0] != 0 else 1.0, 0.0]
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        sigma = np.where(sigma > 0, sigma, np.min(sigma[sigma > 0]) if np.any(sigma > 0) else 1.0)
    span = float(np.ptp(t)) or 1.0
    try:
        popt, pcov = curve_fit(_model, t, v, p0=p0, sigma=sigma, absolute_sigma=sigma is not None,
                               maxfev=20000, xtol=1e-14, ftol=1e-14)
    except (RuntimeError, ValueError):
        return LifetimeFit(math.inf, float(np.mean(v)), float(np.std(v)), math.inf, False)
    a, rate = popt
    resid = float(np.sqrt(np.mean((_model(t, *popt) - v) ** 2)))
    # decay over the window and its standard error (delta method)
    decay = a * (1 - math.exp(-rate * span))
    jac = np.array([1 - math.exp(-rate * span), a * span * math.exp(-rate * span)])
    cov = np.where(np.isfinite(pcov), pcov, 0.0)
    se = float(np.sqrt(max(jac @ cov @ jac, 0.0)))
    if rate <= 0 or abs(decay) < 2 * se or decay == 0:
        return LifetimeFit(math.inf, float(a), resid, math.inf, False)
    T = 1.0 / rate
    T_err = float(np.sqrt(max(cov[1, 1], 0.0))) / rate**2
    return LifetimeFit(float(T), float(a), resid, T_err, True)


def aggregate_lifetime(T_mx: float, T_my: float, T_z: float) -> float:
    """``3 / (1/T_-X + 1/T_-Y + 1/T_Z)``."""
    return 3.0 / (1.0 / T_mx + 1.0 / T_my + 1.0 / T_z)


def average_channel_fidelity(lifetimes, t: float) -> float:
    """``1/2 + (1/6) sum_k exp(-t/T_k)`` over the three Pauli lifetimes."""
    if isinstance(lifetimes, dict):
        lifetimes = [lifetimes[k] for k in ("X", "Y", "Z")]
    if len(lifetimes) != 3:
        raise ValueError("need three lifetimes")
    if t < 0:
        raise ValueError("t must be non-negative")
    return 0.5 + sum(0.0 if math.isinf(t) else math.exp(-t / T) for T in lifetimes) / 6.0


def entanglement_fidelity(channel_fidelity: float) -> float:
    return (3.0 * channel_fidelity - 1.0) / 2.0


def infidelity_per_cycle(lifetimes, cycle: float = 1.0) -> float:
    """``1 - F_e`` after one cycle for lifetimes in cycle units."""
    return 1.0 - entanglement_fidelity(average_channel_fidelity(lifetimes, cycle))


def dimensionless_decay_rate(kappa: float, tau: float) -> float:
    """``1 - exp(-kappa tau)``."""
    if kappa < 0 or tau < 0:
        raise ValueError("kappa and tau must be non-negative")
    return -math.expm1(-kappa * tau)


def inject_displacement_error(rho, alpha: complex, cfg: HilbertConfig | None = None):
    """Apply ``D(alpha)`` to a cavity ket or density matrix."""
    x = np.asarray(rho, dtype=complex)
    cfg = cfg or HilbertConfig(x.shape[0])
    d = displacement(alpha, cfg)
    return d @ x if x.ndim == 1 else d @ x @ d.conj().T


# -- gate bias -----------------------------------------------------------------------

@dataclass(frozen=True)
class BiasTable:
    phi: tuple = (0.05, -0.03, -0.06, 0.04)
    theta: tuple = (-0.03, 0.05, 0.06, 0.04)
    beta: tuple = (0.06 - 0.04j, 0.04 - 0.02j, 0.04 - 0.05j)

    @classmethod
    def zero(cls) -> "BiasTable":
        return cls((0.0,) * 4, (0.0,) * 4, (0j,) * 3)

    def vector(self) -> np.ndarray:
        b = np.asarray(self.beta, dtype=complex)
        return np.array([*self.phi, *self.theta, *b.real, *b.imag, 0.0])


class BiasedPolicy(Policy):
    """Wraps a policy and adds fixed offsets to every emitted gate parameter."""

    def __init__(self, inner: Policy, bias: BiasTable):
        super().__init__(inner.weights)
        self.inner, self.bias, self.kind = inner, bias, inner.kind
        self._offset = bias.vector()

    def initial_state(self, weights=None):
        return self.inner.initial_state(weights)

    def step(self, weights, state, x):
        p, state = self.inner.step(weights, state, x)
        return p + self._offset, state

    @property
    def outcome_independent(self) -> bool:
        return self.inner.outcome_independent


# -- time series ---------------------------------------------------------------------

LABEL_PAULI = {"+Z": "Z", "-Z": "Z", "+X": "X", "-X": "X", "+Y": "Y", "-Y": "Y"}


@dataclass
class PauliSeries:
    label: str
    t: np.ndarray  # in cycles
    mean: np.ndarray
    std: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_over_tau", "mean", "std"])
            for row in zip(self.t, self.mean, self.std):
                w.writerow([f"{x:.12g}" for x in row])


def pauli_time_series(policy: Policy, engine: Engine, label: str = "+Z", n_cycles: int = 10,
                      n_batches: int = 1, batch_size: int = 8, seed: int = 0, delta: float = 0.34,
                      initial=None, mode: str | None = None, max_truncation_loss: float = 1e-6,
                      lattice: CodeLattice | None = None) -> PauliSeries:
    """Frame-corrected ``<P>`` at full-cycle boundaries, signed so the fresh state is positive.

    Outcome-independent policies run once in non-selective mode (exact mean,
    zero spread). Otherwise ``n_batches x batch_size`` sampled trajectories
    are averaged; the spread is the standard deviation of the batch means.
    """
    lattice = lattice or CodeLattice.square()
    pauli = LABEL_PAULI[label]
    op = pauli_operator(lattice, pauli, engine.cfg)
    sign0 = -1.0 if label.startswith("-") else 1.0
    if initial is None:
        initial = logical_ket(GkpStateSpec(label, delta, lattice, engine.cfg, max_truncation_loss))
    v0 = sign0 * logical_expectation(initial, op)
    if mode is None:
        if engine.schedule.kind == "autonomous":
            mode = "autonomous"
        elif policy.outcome_independent:
            mode = "average"
        else:
            mode = "stochastic"
    frames = np.array([sign0 * frame_sign(pauli, k) for k in range(1, n_cycles + 1)])
    t = np.arange(n_cycles + 1, dtype=float)
    if mode in ("average", "autonomous"):
        tr = run_trajectory(initial, policy, 2 * n_cycles, engine, mode=mode, z_op=op)
        vals = np.array(tr.z_snapshots[1::2]) * frames
        return PauliSeries(label, t, np.concatenate([[v0], vals]), np.zeros(n_cycles + 1))
    rng = np.random.default_rng(seed)
    means = []
    cache = {} if getattr(policy, "deterministic", True) else None
    for _ in range(n_batches):
        rows = []
        for _ in range(batch_size):
            tr = run_trajectory(initial, policy, 2 * n_cycles, engine, mode=mode, rng=rng,
                                z_op=op, cache=cache)
            rows.append(np.concatenate([[v0], np.array(tr.z_snapshots[1::2]) * frames]))
        means.append(np.mean(rows, axis=0))
    means = np.array(means)
    std = means.std(axis=0, ddof=1) if n_batches > 1 else np.zeros(n_cycles + 1)
    return PauliSeries(label, t, means.mean(axis=0), std)


def lifetime_from_series(series: PauliSeries) -> LifetimeFit:
    sigma = series.std if np.any(series.std > 0) else None
    if sigma is not None:
        sigma = np.where(series.std > 0, series.std, np.max(series.std))
    return fit_lifetime(series.t, series.mean, sigma)


def evaluate_policy_lifetime(policy: Policy, engine: Engine, delta: float, n_cycles: int,
                             batch_size: int, seed: int, label: str = "+Z") -> LifetimeFit:
    """Lifetime of one Pauli state on a fixed-seed evaluation batch."""
    s = pauli_time_series(policy, engine, label, n_cycles, 1, batch_size, seed, delta,
                          max_truncation_loss=1e-2)
    return fit_lifetime(s.t, s.mean)


def evaluate_lifetimes(policy: Policy, engine: Engine, labels=("-X", "-Y", "+Z"), n_cycles: int = 20,
                       n_batches: int = 2, batch_size: int = 8, seed: int = 0, delta: float = 0.34,
                       max_truncation_loss: float = 1e-6) -> dict:
    """Lifetimes per Pauli state plus the aggregate lifetime and per-cycle fidelities."""
    out = {"series": {}, "lifetimes": {}}
    for lab in labels:
        s = pauli_time_series(policy, engine, lab, n_cycles, n_batches, batch_size, seed, delta,
                              max_truncation_loss=max_truncation_loss)
        out["series"][lab] = s
        out["lifetimes"][lab] = lifetime_from_series(s)
    lt = out["lifetimes"]
    if all(k in lt for k in ("-X", "-Y", "+Z")):
        Ts = [lt["-X"].T, lt["-Y"].T, lt["+Z"].T]
        out["aggregate_T"] = aggregate_lifetime(*Ts)
        fbar = average_channel_fidelity(Ts, 1.0)
        out["channel_fidelity_per_cycle"] = fbar
        out["entanglement_infidelity_per_cycle"] = 1.0 - entanglement_fidelity(fbar)
    return out


def summary_json(results: dict) -> str:
    """JSON dump that maps infinite values to null."""
    def enc(v):
        if isinstance(v, LifetimeFit):
            return enc(v.to_dict())
        if isinstance(v, PauliSeries):
            return {"t": v.t.tolist(), "mean": v.mean.tolist(), "std": v.std.tolist()}
        if isinstance(v, dict):
            return {k: enc(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [enc(x) for x in v]
        if isinstance(v, np.generic):
            v = v.item()
        if isinstance(v, float) and math.isinf(v):
            return None
        return v

    return json.dumps(enc(results), indent=2)


def injection_grid(policy: Policy, engine: Engine, alphas=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6),
                   n_cycles: int = 5, delta: float = 0.34, max_truncation_loss: float = 1e-6) -> list[dict]:
    """Frame-corrected ``<Z>`` per cycle after an injected real displacement error."""
    cfg = engine.cfg
    base = logical_ket(GkpStateSpec("+Z", delta, cfg=cfg, max_truncation_loss=max_truncation_loss))
    rows = []
    for a in (0.0, *alphas):
        s = pauli_time_series(policy, engine, "+Z", n_cycles, delta=delta,
                              initial=inject_displacement_error(base, a, cfg), mode=None,
                              max_truncation_loss=max_truncation_loss)
        for k, v in zip(s.t, s.mean):
            rows.append({"alpha": a, "cycle": int(k), "z": float(v)})
    return rows


def biased_sweep(policies: dict, bias: BiasTable, engine: Engine, delta: float = 0.34,
                 n_cycles: int = 20, batch_size: int = 8, seed: int = 0) -> dict:
    """``+Z`` lifetime of each policy with the bias offsets added to every gate."""
    return {name: evaluate_policy_lifetime(BiasedPolicy(p, bias), engine, delta, n_cycles,
                                           batch_size, seed)
            for name, p in policies.items()}


# -- strategy saturation -----------------------------------------------------------------

@dataclass
class SaturationFit:
    pi_inf: dict = field(default_factory=dict)  # outcome -> value
    gamma: dict = field(default_factory=dict)
    identifiable: dict = field(default_factory=dict)
    residual: dict = field(default_factory=dict)


def _segments(outcomes):
    segs, start = [], 0
    for k in range(1, len(outcomes) + 1):
        if k == len(outcomes) or outcomes[k] != outcomes[start]:
            segs.append((start, k, outcomes[start]))
            start = k
    return segs


def saturation_model(anchor, pi_inf, gamma, j):
    j = np.asarray(j, dtype=float)
    return anchor * np.exp(-gamma * j) + pi_inf * (1 - np.exp(-gamma * j))


def fit_strategy_saturation(param_series, outcomes) -> list[SaturationFit]:
    """Fit each parameter's response to runs of identical outcomes.

    ``param_series[k]`` is the parameter vector emitted after ``outcomes[k]``.
    Within a run starting at index ``a`` the values follow
    ``pi(a-1) e^{-gamma j} + pi_inf (1 - e^{-gamma j})`` for ``j = 1, 2, ...``;
    ``(pi_inf, gamma)`` are shared by all runs of the same outcome.
    """
    P = np.asarray(param_series, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    outcomes = list(outcomes)
    if len(outcomes) != len(P):
        raise ValueError("one outcome per parameter sample is required")
    segs = _segments(outcomes)
    fits = []
    for col in P.T:
        fit = SaturationFit()
        for o in sorted(set(outcomes)):
            pts = []
            for a, b, oo in segs:
                if oo != o:
                    continue
                anchor = col[a - 1] if a > 0 else col[a]
                first = a if a > 0 else a + 1
                for k in range(first, b):
                    pts.append((anchor, k - a + (1 if a > 0 else 0), col[k]))
            if len(pts) < 2:
                fit.pi_inf[o], fit.gamma[o], fit.identifiable[o], fit.residual[o] = (
                    float(col[-1]), math.nan, False, math.nan)
                continue
            anc, j, y = (np.array(v, dtype=float) for v in zip(*pts))
            scale = max(float(np.ptp(np.concatenate([anc, y]))), 1e-300)
            if scale < 1e-12 * max(1.0, float(np.max(np.abs(y)))):
                fit.pi_inf[o], fit.gamma[o], fit.identifiable[o], fit.residual[o] = (
                    float(np.mean(y)), math.nan, False, 0.0)
                continue

            def res(x):
                return saturation_model(anc, x[0], math.exp(x[1]), j) - y

            best = None
            for g0 in (0.05, 0.3, 1.0, 3.0):
                r = least_squares(res, [float(y[-1]), math.log(g0)], xtol=1e-15, ftol=1e-15,
                                  gtol=1e-15, max_nfev=5000)
                if best is None or r.cost < best.cost:
                    best = r
            gamma = math.exp(best.x[1])
            # gamma is fixed by the data only if it moves the prediction
            sens = np.abs(best.jac[:, 1]).max()
            fit.pi_inf[o] = float(best.x[0])
            fit.gamma[o] = gamma
            fit.identifiable[o] = bool(sens > 1e-8 * scale)
            fit.residual[o] = float(np.sqrt(np.mean(best.fun**2)))
        fits.append(fit)
    return fits


def policy_response(policy: Policy, outcomes: str, weights=None) -> np.ndarray:
    """Parameter vectors a policy emits after each outcome of a forced history."""
    state = policy.initial_state(weights)
    rows = []
    _, state = policy.step(weights, state, 0.0)
    for o in outcomes:
        p, state = policy.step(weights, state, 1.0 if o == "g" else -1.0)
        rows.append(np.asarray(p, dtype=float).reshape(N_PARAMS))
    return np.array(rows)
