"""Lindblad dynamics of the joint cavity-qubit density matrix.

Every term of the model (cavity loss, cavity/qubit dephasing, qubit decay and
the diagonal dispersive/Kerr Hamiltonian) is "shifted diagonal" in the joint
Fock/qubit basis: the generator maps entry (i, j) to a weighted entry
(i + s, j + s). ``Generator`` stores that form and hands it to the compiled
RK4 kernel. Time is measured in units of the QEC cycle duration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import backend
from .fock import (PROJ_E, SIGMA_PLUS, SIGMA_Z, HilbertConfig, annihilation,
                   dissipator_apply, kron, number)

INF = math.inf

PRESETS = {
    "low": (61.0, 28.0, 23.8),
    "medium": (49.0, 10.0, 12.0),
    "high": (24.5, 5.0, 6.0),
}
# residual cavity dephasing of 24 ms, in units of a 10 us cycle
LUMPED_DEPHASING_US = 24_000.0


def _rate(T: float) -> float:
    return 0.0 if math.isinf(T) else 1.0 / T


@dataclass(frozen=True)
class NoiseModel:
    """Component lifetimes in units of the cycle duration ``tau_cycle_us``."""

    T_s: float = INF
    T_1: float = INF
    T_2: float = INF
    T_phi_c_white: float = INF
    T_phi_c_lump: float = INF
    tau_cycle_us: float = 10.0

    def __post_init__(self):
        for name in ("T_s", "T_1", "T_2", "T_phi_c_white", "T_phi_c_lump", "tau_cycle_us"):
            v = getattr(self, name)
            if not (v > 0) or math.isnan(v):
                raise ValueError(f"{name} must be positive, got {v!r}")
        # T_2 = 2 T_1 exactly is the pure-relaxation limit (T_phi = inf)
        if _rate(self.T_2) - 0.5 * _rate(self.T_1) < -1e-12 * max(_rate(self.T_2), 1e-300):
            raise ValueError(f"T_2={self.T_2} must be below 2*T_1={2 * self.T_1}")

    @property
    def T_phi(self) -> float:
        r = _rate(self.T_2) - 0.5 * _rate(self.T_1)
        return INF if r <= 1e-15 * max(_rate(self.T_2), 1e-300) else 1.0 / r

    @classmethod
    def preset(cls, name: str, lumped_dephasing: bool = False, tau_cycle_us: float = 10.0) -> "NoiseModel":
        if name == "none":
            return cls(tau_cycle_us=tau_cycle_us)
        if name not in PRESETS:
            raise ValueError(f"unknown noise preset {name!r}; choose from {sorted(PRESETS)} or 'none'")
        ts, t1, t2 = PRESETS[name]
        lump = LUMPED_DEPHASING_US / tau_cycle_us if lumped_dephasing else INF
        return cls(ts, t1, t2, T_phi_c_lump=lump, tau_cycle_us=tau_cycle_us)

    def to_dict(self) -> dict:
        return {k: (None if math.isinf(v) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        return cls(**{k: (INF if v is None else float(v)) for k, v in d.items()})


@dataclass(frozen=True)
class HamiltonianParams:
    """Dispersive shift and Kerr constant in rad/us; off unless ``enabled``."""

    chi: float = 0.0
    kerr: float = 0.0
    enabled: bool = False


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1.0 / 2000  # in cycle units
    tolerance: float = 1e-9

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True, eq=False)
class Generator:
    """``L(x)[i,j] = diag[i,j] x[i,j] + sum_k coefs[k,i,j] x[i+s_k, j+s_k]``."""

    diag: np.ndarray
    shifts: np.ndarray
    coefs: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return backend.apply_generator(np.ascontiguousarray(x, dtype=complex), self.diag,
                                       self.shifts, self.coefs)

    def adjoint(self) -> "Generator":
        """Generator of the Hilbert-Schmidt adjoint map."""
        d = self.diag.shape[0]
        coefs = np.zeros_like(self.coefs)
        for k, s in enumerate(self.shifts):
            s = int(s)
            coefs[k, s:, s:] = self.coefs[k, : d - s, : d - s]
        return Generator(self.diag.conj(), -self.shifts, coefs)

    @property
    def is_identity(self) -> bool:
        return not np.any(self.diag) and not np.any(self.coefs)


def _joint_labels(n: int):
    m = np.repeat(np.arange(n), 2)
    q = np.tile(np.arange(2), n)
    return m, q


@lru_cache(maxsize=32)
def _build(noise: NoiseModel, ham: HamiltonianParams, n: int) -> Generator:
    kappa = _rate(noise.T_s)
    g1 = _rate(noise.T_1)
    gphi = _rate(noise.T_phi)
    gc = 2 * _rate(noise.T_phi_c_white) + 2 * _rate(noise.T_phi_c_lump)
    m, q = _joint_labels(n)
    M, Mp = m[:, None], m[None, :]
    Q, Qp = q[:, None], q[None, :]
    diag = (-0.5 * kappa * (M + Mp) - 0.5 * gc * (M - Mp) ** 2
            - 0.5 * g1 * ((Q == 1).astype(float) + (Qp == 1))
            - gphi * (Q != Qp)).astype(complex)
    if ham.enabled:
        z = 1.0 - 2.0 * q  # sigma_z eigenvalue, +1 on |g>
        h = noise.tau_cycle_us * (0.5 * ham.chi * m * z + 0.5 * ham.kerr * m**2)
        diag += -1j * (h[:, None] - h[None, :])
    shifts, coefs = [], []
    if kappa:
        top = (M + 1 < n) & (Mp + 1 < n)
        coefs.append(np.where(top, kappa * np.sqrt((M + 1.0) * (Mp + 1.0)), 0.0))
        shifts.append(2)
    if g1:
        coefs.append(np.where((Q == 0) & (Qp == 0), g1, 0.0) * np.ones_like(diag.real))
        shifts.append(1)
    coefs = np.array(coefs, dtype=float).reshape(len(shifts), 2 * n, 2 * n)
    for a in (diag, coefs):
        a.setflags(write=False)
    return Generator(diag, np.array(shifts, dtype=np.int64), coefs)


def build_generator(noise: NoiseModel, ham: HamiltonianParams, cfg: HilbertConfig) -> Generator:
    return _build(noise, ham, cfg.n_fock)


def lindblad_rhs(rho: np.ndarray, noise: NoiseModel, ham: HamiltonianParams = HamiltonianParams()) -> np.ndarray:
    if rho.shape[0] % 2:
        raise ValueError("rho must live on the joint cavity-qubit space")
    return build_generator(noise, ham, HilbertConfig(rho.shape[0] // 2)).apply(rho)


def dense_rhs(rho: np.ndarray, noise: NoiseModel, ham: HamiltonianParams = HamiltonianParams()) -> np.ndarray:
    """Reference generator built from explicit operator products (slow)."""
    cfg = HilbertConfig(rho.shape[0] // 2)
    a = kron(annihilation(cfg), np.eye(2))
    nop = kron(number(cfg), np.eye(2))
    out = np.zeros_like(rho, dtype=complex)
    out += _rate(noise.T_s) * dissipator_apply(a, rho)
    out += 2 * (_rate(noise.T_phi_c_white) + _rate(noise.T_phi_c_lump)) * dissipator_apply(nop, rho)
    out += _rate(noise.T_1) * dissipator_apply(kron(np.eye(cfg.n_fock), SIGMA_PLUS), rho)
    out += 2 * _rate(noise.T_phi) * dissipator_apply(kron(np.eye(cfg.n_fock), SIGMA_Z / 2), rho)
    if ham.enabled:
        nn = number(cfg)
        H = noise.tau_cycle_us * (0.5 * ham.chi * kron(nn, SIGMA_Z) + 0.5 * ham.kerr * kron(nn @ nn, np.eye(2)))
        out += -1j * (H @ rho - rho @ H)
    return out


def step_plan(duration: float, dt: float) -> list[tuple[float, int]]:
    """(step size, count) pairs covering ``duration``; a fractional last step absorbs the remainder."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if duration == 0:
        return []
    ratio = duration / dt
    n = int(round(ratio)) if abs(ratio - round(ratio)) < 1e-9 * max(1.0, ratio) else int(ratio)
    plan = [(dt, n)] if n else []
    rem = duration - n * dt
    if rem > 1e-12 * max(1.0, duration):
        plan.append((rem, 1))
    return plan


def propagate(rho: np.ndarray, duration: float, gen: Generator, dt: float) -> np.ndarray:
    if gen.is_identity:
        return np.array(rho, dtype=complex, copy=True)
    out = np.ascontiguousarray(rho, dtype=complex)
    for h, n in step_plan(duration, dt):
        out = backend.rk4_propagate(out, gen.diag, gen.shifts, gen.coefs, h, n, True)
    return out


def evolve_rk4(rho: np.ndarray, duration: float, noise: NoiseModel,
               ham: HamiltonianParams = HamiltonianParams(),
               integ: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Evolve for ``duration`` cycle units with fixed-step RK4 and per-step Hermitization."""
    if rho.shape[0] % 2:
        raise ValueError("rho must live on the joint cavity-qubit space")
    gen = build_generator(noise, ham, HilbertConfig(rho.shape[0] // 2))
    return propagate(rho, duration, gen, integ.dt)


def excited_population(rho: np.ndarray) -> float:
    n = rho.shape[0] // 2
    return float(np.real(np.trace(kron(np.eye(n), PROJ_E) @ rho)))
