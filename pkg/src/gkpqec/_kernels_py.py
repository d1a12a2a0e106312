"""Pure-numpy twin of the compiled RK4 kernel (same signatures)."""
import numpy as np


def apply_generator(x, diag, shifts, coefs):
    d = x.shape[0]
    out = diag * x
    for s, c in zip(shifts, coefs):
        s = int(s)
        if s >= 0:
            out[: d - s, : d - s] += c[: d - s, : d - s] * x[s:, s:]
        else:
            out[-s:, -s:] += c[-s:, -s:] * x[: d + s, : d + s]
    return out


def rk4_propagate(rho, diag, shifts, coefs, h, nsteps, hermitize=True):
    rho = np.array(rho, dtype=np.complex128, copy=True)
    diag = np.asarray(diag, dtype=np.complex128)
    coefs = np.asarray(coefs, dtype=np.float64)
    if rho.shape != diag.shape:
        raise ValueError("shape mismatch between state and generator")
    if len(coefs) != len(shifts):
        raise ValueError("one coefficient plane is required per shift")
    for _ in range(int(nsteps)):
        k1 = apply_generator(rho, diag, shifts, coefs)
        k2 = apply_generator(rho + 0.5 * h * k1, diag, shifts, coefs)
        k3 = apply_generator(rho + 0.5 * h * k2, diag, shifts, coefs)
        k4 = apply_generator(rho + h * k3, diag, shifts, coefs)
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if hermitize:
            rho = 0.5 * (rho + rho.conj().T)
    return rho
