"""Finite-energy GKP logical states, Pauli/stabilizer displacements and state diagnostics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fock import (HilbertConfig, as_density, coherent_ket, displacement, number,
                   trace_out_qubit)

LABELS = ("+Z", "-Z", "+X", "-X", "+Y", "-Y")


class TruncationError(ValueError):
    """The requested state does not fit in the Fock truncation."""


@dataclass(frozen=True)
class CodeLattice:
    alpha: complex
    beta: complex
    kind: str = "square"
    scale: float = 1.0

    def __post_init__(self):
        c = np.conj(self.alpha) * self.beta - self.alpha * np.conj(self.beta)
        if abs(c - 1j * math.pi) > 1e-12:
            raise ValueError(f"lattice violates alpha* beta - alpha beta* = i pi (got {c})")

    @classmethod
    def square(cls) -> "CodeLattice":
        a = math.sqrt(math.pi / 2)
        return cls(complex(a), 1j * a, "square")

    @classmethod
    def rectangular(cls, l: float) -> "CodeLattice":
        if l <= 0:
            raise ValueError("rectangular scaling l must be positive")
        a = math.sqrt(math.pi / 2)
        return cls(complex(l * a), 1j * a / l, "rectangular", float(l))

    @classmethod
    def hexagonal(cls) -> "CodeLattice":
        a = math.sqrt(math.pi / math.sqrt(3))
        return cls(complex(a), np.exp(2j * math.pi / 3) * a, "hexagonal")

    @classmethod
    def from_kind(cls, kind: str, l: float = 1.0) -> "CodeLattice":
        if kind == "square":
            return cls.square()
        if kind == "rectangular":
            return cls.rectangular(l)
        if kind == "hexagonal":
            return cls.hexagonal()
        raise ValueError(f"unknown lattice kind {kind!r}")


@dataclass(frozen=True)
class GkpStateSpec:
    label: str = "+Z"
    delta: float = 0.34
    lattice: CodeLattice = field(default_factory=CodeLattice.square)
    cfg: HilbertConfig = field(default_factory=HilbertConfig)
    # probability mass allowed above the Fock cutoff before construction fails
    max_truncation_loss: float = 1e-6

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


def _lattice_sum(lattice: CodeLattice, mu: int, K: int, n: int) -> np.ndarray:
    psi = np.zeros(n, dtype=complex)
    for k in range(-K, K + 1):
        for l in range(-K, K + 1):
            if mu == 0:
                phase = np.exp(-1j * math.pi * k * l)
                z = 2 * k * lattice.alpha + l * lattice.beta
            else:
                phase = np.exp(-1j * math.pi * (k * l + l / 2))
                z = (2 * k + 1) * lattice.alpha + l * lattice.beta
            psi += phase * coherent_ket(z, n)
    return psi


def _enveloped_codeword(lattice, mu, delta, n_build, shell_tol=1e-10, k_max=40):
    envelope = np.exp(-delta**2 * np.arange(n_build))
    prev = None
    for K in range(1, k_max + 1):
        psi = envelope * _lattice_sum(lattice, mu, K, n_build)
        psi /= np.linalg.norm(psi)
        if prev is not None and np.linalg.norm(psi - prev) < shell_tol:
            return psi, K
        prev = psi
    raise RuntimeError("lattice sum did not converge")


def _build_size(delta: float, n_fock: int) -> int:
    # envelope weight e^{-2 delta^2 n} reaches ~1e-16 well inside this size
    return max(n_fock, min(4000, int(math.ceil(20.0 / delta**2)) + 50))


def _truncate(psi: np.ndarray, spec: GkpStateSpec) -> np.ndarray:
    n = spec.cfg.n_fock
    lost = float(np.sum(np.abs(psi[n:]) ** 2) / np.sum(np.abs(psi) ** 2))
    if lost > spec.max_truncation_loss:
        raise TruncationError(
            f"{spec.label} state at delta={spec.delta} loses {lost:.3g} probability "
            f"above n_fock={n} (limit {spec.max_truncation_loss:g})")
    out = psi[:n].copy()
    return out / np.linalg.norm(out)


def logical_ket(spec: GkpStateSpec) -> np.ndarray:
    """Normalized Fock-basis amplitudes of the requested finite-energy logical state."""
    n_build = _build_size(spec.delta, spec.cfg.n_fock)
    zero, _ = _enveloped_codeword(spec.lattice, 0, spec.delta, n_build)
    if spec.label == "+Z":
        psi = zero
    else:
        one, _ = _enveloped_codeword(spec.lattice, 1, spec.delta, n_build)
        psi = {
            "-Z": one,
            "+X": zero + one,
            "-X": zero - one,
            "+Y": zero + 1j * one,
            "-Y": zero - 1j * one,
        }[spec.label]
        psi = psi / np.linalg.norm(psi)
    return _truncate(psi, spec)


def lattice_shells(spec: GkpStateSpec) -> int:
    """Number of lattice shells needed for the +Z codeword to converge."""
    _, K = _enveloped_codeword(spec.lattice, 0, spec.delta, _build_size(spec.delta, spec.cfg.n_fock))
    return K


def logical_state(spec: GkpStateSpec) -> np.ndarray:
    """Cavity density matrix of the pure logical state."""
    psi = logical_ket(spec)
    return np.outer(psi, psi.conj())


def pauli_operator(lattice: CodeLattice, which: str, cfg: HilbertConfig) -> np.ndarray:
    """Bare logical Pauli: X = D(alpha), Z = D(beta), Y = i X Z."""
    if which == "X":
        return displacement(lattice.alpha, cfg)
    if which == "Z":
        return displacement(lattice.beta, cfg)
    if which == "Y":
        return 1j * displacement(lattice.alpha, cfg) @ displacement(lattice.beta, cfg)
    raise ValueError(f"unknown Pauli {which!r}")


def stabilizer(lattice: CodeLattice, which: str, cfg: HilbertConfig) -> np.ndarray:
    if which == "X":
        return displacement(2 * lattice.alpha, cfg)
    if which == "Z":
        return displacement(2 * lattice.beta, cfg)
    raise ValueError(f"unknown stabilizer {which!r}")


def _cavity(rho: np.ndarray, n: int | None = None) -> np.ndarray:
    rho = as_density(rho)
    if n is not None and rho.shape[0] == 2 * n:
        return trace_out_qubit(rho)
    return rho


def _check_hermitian(x, name):
    if np.max(np.abs(x - x.conj().T)) > 1e-8:
        raise ValueError(f"{name} is not Hermitian")


def _psd_sqrt(x):
    w, v = np.linalg.eigh(x)
    w = np.where(w > 1e-14 * max(w.max(), 0.0), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(sigma) rho sqrt(sigma)))^2``.

    A pure ``sigma`` (ket, or projector with unit purity) uses ``Tr(sigma rho)``.
    """
    rho = as_density(rho)
    sigma = as_density(sigma)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch {rho.shape} vs {sigma.shape}")
    _check_hermitian(rho, "rho")
    _check_hermitian(sigma, "sigma")
    if abs(np.trace(sigma @ sigma).real - 1.0) < 1e-10 or abs(np.trace(rho @ rho).real - 1.0) < 1e-10:
        f = np.trace(sigma @ rho).real
    else:
        # nuclear norm of sqrt(rho) sqrt(sigma); avoids square roots of
        # round-off eigenvalues when either state is rank deficient
        sv = np.linalg.svd(_psd_sqrt(rho) @ _psd_sqrt(sigma), compute_uv=False)
        f = float(np.sum(sv)) ** 2
    return float(min(max(f, 0.0), 1.0 + 1e-10))


def logical_expectation(rho: np.ndarray, pauli: np.ndarray) -> float:
    """``Re Tr(P rho)``; a joint cavity-qubit ``rho`` has the qubit traced out first."""
    rho_c = _cavity(rho, pauli.shape[0])
    if rho_c.shape != pauli.shape:
        raise ValueError(f"dimension mismatch {rho_c.shape} vs {pauli.shape}")
    return float(np.real(np.sum(pauli.T * rho_c)))


def mean_photon(rho: np.ndarray, cfg: HilbertConfig | None = None) -> float:
    rho = as_density(rho)
    if cfg is not None:
        rho = _cavity(rho, cfg.n_fock)
    n = np.arange(rho.shape[0])
    return float(np.real(np.diagonal(rho)) @ n)


# -- exports -------------------------------------------------------------------

def wigner(rho: np.ndarray, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Wigner function W[ip, iq] on the grid, with q = (a + a^dag)/sqrt(2).

    Uses the Laguerre recursion over Fock matrix elements.
    """
    rho = as_density(rho)
    Q, P = np.meshgrid(np.asarray(q, float), np.asarray(p, float))
    A = (Q + 1j * P) / math.sqrt(2)  # complex phase-space point, 0.5 g (q + ip) with g = sqrt 2
    M = rho.shape[0]
    wl = [None] * M
    wl[0] = np.exp(-2.0 * np.abs(A) ** 2) / math.pi
    W = np.real(rho[0, 0]) * np.real(wl[0])
    for n in range(1, M):
        wl[n] = 2.0 * A * wl[n - 1] / math.sqrt(n)
        W = W + 2 * np.real(rho[0, n] * wl[n])
    for m in range(1, M):
        temp = wl[m].copy()
        wl[m] = (2 * np.conj(A) * temp - math.sqrt(m) * wl[m - 1]) / math.sqrt(m)
        W = W + np.real(rho[m, m] * wl[m])
        for n in range(m + 1, M):
            temp2 = (2 * A * wl[n - 1] - math.sqrt(m) * temp) / math.sqrt(n)
            temp = wl[n].copy()
            wl[n] = temp2
            W = W + 2 * np.real(rho[m, n] * wl[n])
    return W


def write_wigner_csv(path, q, p, W) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "p", "W"])
        for ip, pv in enumerate(p):
            for iq, qv in enumerate(q):
                w.writerow([f"{qv:.10g}", f"{pv:.10g}", f"{W[ip, iq]:.12g}"])


def write_amplitudes(path, psi: np.ndarray) -> None:
    """Fock amplitudes as JSON (``.json``) or CSV rows ``n, re, im``."""
    path = Path(path)
    psi = np.asarray(psi, dtype=complex)
    if path.suffix == ".json":
        path.write_text(json.dumps({"n_fock": len(psi), "re": psi.real.tolist(),
                                    "im": psi.imag.tolist()}))
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "re", "im"])
        for k, c in enumerate(psi):
            w.writerow([k, repr(float(c.real)), repr(float(c.imag))])


def read_amplitudes(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        return np.asarray(doc["re"]) + 1j * np.asarray(doc["im"])
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
