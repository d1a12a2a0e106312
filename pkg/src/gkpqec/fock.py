"""Operator algebra on the truncated cavity Fock space and the cavity-qubit product space.

Operators are plain dense ``complex128`` numpy arrays. Joint operators are
always ordered cavity first, qubit second, so the joint basis index of
``|m>_c |q>_q`` is ``2 * m + q`` with ``q = 0`` the ground state ``|g>``.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

QUBIT_DIM = 2


@dataclass(frozen=True)
class HilbertConfig:
    n_fock: int = 100

    def __post_init__(self):
        if int(self.n_fock) != self.n_fock or self.n_fock < 2:
            raise ValueError(f"n_fock must be an integer >= 2, got {self.n_fock!r}")

    @property
    def qubit_dim(self) -> int:
        return QUBIT_DIM

    @property
    def joint_dim(self) -> int:
        return QUBIT_DIM * self.n_fock


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=64)
def _ladder(n: int) -> np.ndarray:
    return _frozen(np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex))


def annihilation(cfg: HilbertConfig) -> np.ndarray:
    """Truncated bosonic lowering operator, ``a[m, m+1] = sqrt(m+1)``."""
    return _ladder(cfg.n_fock)


def creation(cfg: HilbertConfig) -> np.ndarray:
    return _frozen(_ladder(cfg.n_fock).conj().T.copy())


def number(cfg: HilbertConfig) -> np.ndarray:
    return _frozen(np.diag(np.arange(cfg.n_fock, dtype=float)).astype(complex))


def fock_ket(k: int, cfg: HilbertConfig) -> np.ndarray:
    if not 0 <= k < cfg.n_fock:
        raise ValueError(f"Fock level {k} outside truncation n_fock={cfg.n_fock}")
    v = np.zeros(cfg.n_fock, dtype=complex)
    v[k] = 1.0
    return v


# qubit operators in the (|g>, |e>) basis; sigma_minus raises g -> e and
# sigma_plus lowers e -> g, following the ladder convention of the model
SIGMA_X = _frozen(np.array([[0, 1], [1, 0]], dtype=complex))
SIGMA_Y = _frozen(np.array([[0, -1j], [1j, 0]], dtype=complex))
SIGMA_Z = _frozen(np.array([[1, 0], [0, -1]], dtype=complex))
SIGMA_MINUS = _frozen(((SIGMA_X - 1j * SIGMA_Y) / 2).copy())
SIGMA_PLUS = _frozen(((SIGMA_X + 1j * SIGMA_Y) / 2).copy())
PROJ_G = _frozen(np.array([[1, 0], [0, 0]], dtype=complex))
PROJ_E = _frozen(np.array([[0, 0], [0, 1]], dtype=complex))


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product; ``kron(cavity_op, qubit_op)`` gives the joint operator."""
    return np.kron(a, b)


# -- matrix exponential ------------------------------------------------------

# Pade coefficients and backward-error thresholds for double precision
# (Higham, scaling-and-squaring).
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
         33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0),
}
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1, 7: 9.504178996162932e-1,
          9: 2.097847961257068e0, 13: 5.371920351148152e0}


def _pade_uv(A, m):
    b = _PADE[m]
    ident = np.eye(A.shape[0], dtype=A.dtype)
    if m == 13:
        A2 = A @ A
        A4 = A2 @ A2
        A6 = A4 @ A2
        U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
                 + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
        V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
             + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
        return U, V
    powers = [ident, A @ A]
    while len(powers) < (m + 1) // 2:
        powers.append(powers[-1] @ powers[1])
    U = sum(b[2 * k + 1] * powers[k] for k in range((m + 1) // 2))
    V = sum(b[2 * k] * powers[k] for k in range((m + 1) // 2))
    return A @ U, V


def matrix_exp(m: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Matrix exponential by Pade scaling-and-squaring.

    The Pade degree / scaling choice bounds the backward error by the double
    precision unit roundoff, well inside ``tol`` for tol >= 1e-14.
    """
    A = np.asarray(m)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix_exp needs a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix_exp input contains NaN or Inf")
    if tol < 1e-14:
        raise ValueError("tolerance below double-precision reach")
    A = A.astype(complex if np.iscomplexobj(A) else float)
    norm = np.linalg.norm(A, 1)
    for deg in (3, 5, 7, 9):
        if norm <= _THETA[deg]:
            U, V = _pade_uv(A, deg)
            return np.linalg.solve(V - U, V + U)
    s = max(0, int(math.ceil(math.log2(norm / _THETA[13])))) if norm > 0 else 0
    U, V = _pade_uv(A / 2.0**s, 13)
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def expm_frechet(a: np.ndarray, e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(exp(a), L(a, e))`` with L the Frechet derivative, via the block-triangular identity."""
    n = a.shape[0]
    block = np.zeros((2 * n, 2 * n), dtype=np.result_type(a, e, complex))
    block[:n, :n] = a
    block[n:, n:] = a
    block[:n, n:] = e
    big = matrix_exp(block)
    return big[:n, :n], big[:n, n:]


# -- displacement ------------------------------------------------------------

@lru_cache(maxsize=64)
def displacement_generators(n: int) -> tuple[np.ndarray, np.ndarray]:
    """``(a^dag - a, i (a^dag + a))``: D(x + iy) = exp(x K_re + y K_im)."""
    a = _ladder(n)
    ad = a.conj().T
    return _frozen(ad - a), _frozen(1j * (ad + a))


def check_truncation(zeta: complex, cfg: HilbertConfig) -> None:
    if abs(zeta) ** 2 > cfg.n_fock / 4:
        log.warning("displacement |zeta|^2=%.3g exceeds n_fock/4=%.3g; truncation error likely",
                    abs(zeta) ** 2, cfg.n_fock / 4)


@lru_cache(maxsize=4096)
def _displacement_cached(zeta: complex, n: int) -> np.ndarray:
    k_re, k_im = displacement_generators(n)
    return _frozen(matrix_exp(zeta.real * k_re + zeta.imag * k_im))


def displacement(zeta: complex, cfg: HilbertConfig) -> np.ndarray:
    """Cavity displacement ``D(zeta) = exp(zeta a^dag - zeta^* a)`` on the truncated space."""
    zeta = complex(zeta)
    check_truncation(zeta, cfg)
    return _displacement_cached(zeta, cfg.n_fock)


def coherent_ket(zeta: complex, n: int) -> np.ndarray:
    """Untruncated coherent-state amplitudes ``<k|zeta>`` for k < n (closed form)."""
    from scipy.special import gammaln

    k = np.arange(n)
    if zeta == 0:
        out = np.zeros(n, dtype=complex)
        out[0] = 1.0
        return out
    return np.exp(-abs(zeta) ** 2 / 2 + k * np.log(complex(zeta)) - 0.5 * gammaln(k + 1))


# -- Lindblad primitive --------------------------------------------------------

def dissipator_apply(a: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``D[A] rho = A rho A^dag - (A^dag A rho + rho A^dag A) / 2``."""
    if a.shape != rho.shape:
        raise ValueError(f"dimension mismatch: operator {a.shape} vs state {rho.shape}")
    ad = a.conj().T
    ada = ad @ a
    return a @ rho @ ad - 0.5 * (ada @ rho + rho @ ada)


def is_density_matrix(rho: np.ndarray, herm_tol=1e-10, trace_tol=1e-8, pos_tol=1e-8) -> bool:
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        return False
    if abs(np.trace(rho).real - 1) > trace_tol:
        return False
    return np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() >= -pos_tol


# -- serialization -------------------------------------------------------------

_MAGIC = b"GKPOP001"


def dump_operator(op: np.ndarray, path) -> None:
    """Write an operator as JSON (``.json``) or raw binary.

    Both layouts are row-major with interleaved float64 (re, im) pairs. The
    binary form is an 8-byte magic, a little-endian uint64 dimension, then the
    pairs in little-endian order.
    """
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError("only square operators can be dumped")
    flat = np.ascontiguousarray(op).view(np.float64).ravel()
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps({"format": "operator", "version": 1,
                                    "dim": op.shape[0], "data": flat.tolist()}))
    else:
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<Q", op.shape[0]))
            fh.write(flat.astype("<f8").tobytes())


def load_operator(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        d = int(doc["dim"])
        flat = np.asarray(doc["data"], dtype=np.float64)
    else:
        raw = path.read_bytes()
        if raw[:8] != _MAGIC:
            raise ValueError(f"{path} is not an operator dump")
        (d,) = struct.unpack("<Q", raw[8:16])
        flat = np.frombuffer(raw[16:], dtype="<f8").astype(np.float64)
    if flat.size != 2 * d * d:
        raise ValueError(f"{path}: expected {2 * d * d} floats, found {flat.size}")
    return flat.view(complex).reshape(d, d).copy()


# -- cavity/qubit bookkeeping ----------------------------------------------------

def trace_out_qubit(rho: np.ndarray) -> np.ndarray:
    """Reduced cavity state of a joint (cavity x qubit) density matrix."""
    d = rho.shape[0]
    if d % QUBIT_DIM:
        raise ValueError("joint dimension must be a multiple of 2")
    n = d // QUBIT_DIM
    return np.einsum("iqjq->ij", rho.reshape(n, QUBIT_DIM, n, QUBIT_DIM))


def with_ground_qubit(rho_c: np.ndarray) -> np.ndarray:
    """``rho_c (x) |g><g|``."""
    return np.kron(rho_c, PROJ_G)


def as_density(x: np.ndarray) -> np.ndarray:
    """Promote a ket to a projector; density matrices pass through."""
    x = np.asarray(x)
    if x.ndim == 1:
        return np.outer(x, x.conj())
    return x
