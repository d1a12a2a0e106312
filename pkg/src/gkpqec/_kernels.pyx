# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 propagation for shifted-diagonal Lindblad generators.

The generator acts elementwise on the density matrix::

    L(x)[i, j] = diag[i, j] * x[i, j] + sum_k coefs[k, i, j] * x[i + s_k, j + s_k]

which covers every dissipator of the cavity-qubit model (and the diagonal
dispersive/Kerr Hamiltonian) without any matrix products.

Complex matrices are handled through their interleaved float64 view
(re, im, re, im, ...) inside a zero-padded buffer, so every inner loop is a
branch-free real stencil the compiler can vectorize.
"""
import numpy as np
cimport numpy as cnp


cdef inline void _apply(const double[:, ::1] x, double[:, ::1] out, Py_ssize_t pad,
                        Py_ssize_t d, const double[:, ::1] dre, const double[:, ::1] dim,
                        const long[::1] shifts, const double[:, :, ::1] c2) noexcept nogil:
    # x, out: padded interleaved buffers of shape (d + 2 pad, 2 (d + 2 pad))
    cdef Py_ssize_t i, j, k, r, col, nk = shifts.shape[0]
    cdef long s
    cdef double xr, xi
    for i in range(d):
        r = i + pad
        for j in range(d):
            col = 2 * (j + pad)
            xr = x[r, col]
            xi = x[r, col + 1]
            out[r, col] = dre[i, j] * xr - dim[i, j] * xi
            out[r, col + 1] = dre[i, j] * xi + dim[i, j] * xr
        for k in range(nk):
            s = shifts[k]
            for j in range(2 * d):
                out[r, j + 2 * pad] += c2[k, i, j] * x[r + s, j + 2 * pad + 2 * s]


cdef Py_ssize_t _max_shift(const long[::1] shifts):
    cdef Py_ssize_t k, m = 0
    for k in range(shifts.shape[0]):
        if shifts[k] > m:
            m = shifts[k]
        if -shifts[k] > m:
            m = -shifts[k]
    return m


cdef tuple _prepare(diag_in, shifts_in, coefs_in, Py_ssize_t d):
    diag = np.asarray(diag_in, dtype=np.complex128)
    coefs = np.asarray(coefs_in, dtype=np.float64)
    shifts = np.ascontiguousarray(shifts_in, dtype=np.int64)
    if diag.shape != (d, d):
        raise ValueError("shape mismatch between state and generator")
    if coefs.shape[0] != shifts.shape[0] or (shifts.shape[0] and coefs.shape[1:] != (d, d)):
        raise ValueError("one (d, d) coefficient plane is required per shift")
    c2 = np.ascontiguousarray(np.repeat(coefs, 2, axis=2)) if shifts.shape[0] else np.zeros((0, d, 2 * d))
    return (np.ascontiguousarray(diag.real), np.ascontiguousarray(diag.imag), shifts, c2)


def rk4_propagate(rho_in, diag_in, shifts_in, coefs_in, double h, long nsteps, bint hermitize=True):
    """Return ``rho`` after ``nsteps`` RK4 steps of size ``h``."""
    rho_in = np.asarray(rho_in)
    cdef Py_ssize_t d = rho_in.shape[0]
    if rho_in.ndim != 2 or rho_in.shape[1] != d:
        raise ValueError("state must be a square matrix")
    dre_np, dim_np, shifts_np, c2_np = _prepare(diag_in, shifts_in, coefs_in, d)
    cdef const double[:, ::1] dre = dre_np
    cdef const double[:, ::1] dim = dim_np
    cdef const long[::1] shifts = shifts_np
    cdef const double[:, :, ::1] c2 = c2_np
    cdef Py_ssize_t pad = _max_shift(shifts)
    cdef Py_ssize_t D = d + 2 * pad
    rho_c = np.zeros((D, D), dtype=np.complex128)
    rho_c[pad:pad + d, pad:pad + d] = rho_in
    cdef double[:, ::1] rho = rho_c.view(np.float64)
    cdef double[:, ::1] x = np.zeros((D, 2 * D))
    cdef double[:, ::1] k = np.zeros((D, 2 * D))
    cdef double[:, ::1] acc = np.zeros((D, 2 * D))
    cdef Py_ssize_t n, i, j, lo = pad, hi = pad + d, clo = 2 * pad, chi = 2 * (pad + d)
    cdef double h2 = 0.5 * h, h6 = h / 6.0
    cdef double ar, ai, br, bi
    with nogil:
        for n in range(nsteps):
            _apply(rho, k, pad, d, dre, dim, shifts, c2)
            for i in range(lo, hi):
                for j in range(clo, chi):
                    acc[i, j] = k[i, j]
                    x[i, j] = rho[i, j] + h2 * k[i, j]
            _apply(x, k, pad, d, dre, dim, shifts, c2)
            for i in range(lo, hi):
                for j in range(clo, chi):
                    acc[i, j] += 2.0 * k[i, j]
                    x[i, j] = rho[i, j] + h2 * k[i, j]
            _apply(x, k, pad, d, dre, dim, shifts, c2)
            for i in range(lo, hi):
                for j in range(clo, chi):
                    acc[i, j] += 2.0 * k[i, j]
                    x[i, j] = rho[i, j] + h * k[i, j]
            _apply(x, k, pad, d, dre, dim, shifts, c2)
            for i in range(lo, hi):
                for j in range(clo, chi):
                    rho[i, j] += h6 * (acc[i, j] + k[i, j])
            if hermitize:
                for i in range(lo, hi):
                    rho[i, 2 * i + 1] = 0.0
                    for j in range(i + 1, hi):
                        ar = rho[i, 2 * j]
                        ai = rho[i, 2 * j + 1]
                        br = rho[j, 2 * i]
                        bi = rho[j, 2 * i + 1]
                        rho[i, 2 * j] = 0.5 * (ar + br)
                        rho[i, 2 * j + 1] = 0.5 * (ai - bi)
                        rho[j, 2 * i] = rho[i, 2 * j]
                        rho[j, 2 * i + 1] = -rho[i, 2 * j + 1]
    return rho_c[pad:pad + d, pad:pad + d].copy()


def apply_generator(x_in, diag_in, shifts_in, coefs_in):
    """Single generator application ``L(x)``."""
    x_in = np.asarray(x_in)
    cdef Py_ssize_t d = x_in.shape[0]
    dre_np, dim_np, shifts_np, c2_np = _prepare(diag_in, shifts_in, coefs_in, d)
    cdef const long[::1] shifts = shifts_np
    cdef Py_ssize_t pad = _max_shift(shifts)
    xc = np.zeros((d + 2 * pad, d + 2 * pad), dtype=np.complex128)
    xc[pad:pad + d, pad:pad + d] = x_in
    oc = np.zeros_like(xc)
    cdef double[:, ::1] xv = xc.view(np.float64)
    cdef double[:, ::1] ov = oc.view(np.float64)
    cdef const double[:, ::1] dre = dre_np
    cdef const double[:, ::1] dim = dim_np
    cdef const double[:, :, ::1] c2 = c2_np
    with nogil:
        _apply(xv, ov, pad, d, dre, dim, shifts, c2)
    return oc[pad:pad + d, pad:pad + d].copy()
