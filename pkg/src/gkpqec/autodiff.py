"""Minimal reverse-mode automatic differentiation over numpy arrays.

A ``Var`` wraps a real or complex array and remembers how it was computed.
Every op also accepts plain arrays; with no ``Var`` among its inputs it just
returns the plain result, so one code path serves forward-only simulation and
differentiated rollouts.

Gradients of a real scalar ``f`` with respect to a complex array ``z`` follow
``grad = df/dRe(z) + i df/dIm(z)``, so that ``df = Re sum(conj(grad) * dz)``.
Real leaves get the real part.
"""
from __future__ import annotations

import itertools

import numpy as np

from .fock import expm_frechet, matrix_exp

_ids = itertools.count()


class Var:
    __slots__ = ("value", "parents", "id")
    __array_priority__ = 100.0

    def __init__(self, value, parents=()):
        self.value = np.asarray(value)
        self.parents = tuple(parents)  # (Var, vjp) pairs
        self.id = next(_ids)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.value!r})"

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return add(self, neg(o))

    def __rsub__(self, o):
        return add(o, neg(self))

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return mul(self, reciprocal(o))

    def __rtruediv__(self, o):
        return mul(o, reciprocal(self))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, idx):
        return getitem(self, idx)


def value(x):
    return x.value if isinstance(x, Var) else np.asarray(x)


def stop_gradient(x):
    return value(x)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(out, inputs, vjps):
    parents = [(x, f) for x, f in zip(inputs, vjps) if isinstance(x, Var)]
    if not parents:
        return out
    return Var(out, parents)


# -- elementwise ----------------------------------------------------------------

def add(a, b):
    va, vb = value(a), value(b)
    return _make(va + vb, (a, b), (lambda g: _unbroadcast(g, va.shape),
                                   lambda g: _unbroadcast(g, vb.shape)))


def neg(a):
    return _make(-value(a), (a,), (lambda g: -g,))


def mul(a, b):
    va, vb = value(a), value(b)
    return _make(va * vb, (a, b), (lambda g: _unbroadcast(g * np.conj(vb), va.shape),
                                   lambda g: _unbroadcast(g * np.conj(va), vb.shape)))


def reciprocal(a):
    va = value(a)
    out = 1.0 / va
    return _make(out, (a,), (lambda g: -g * np.conj(out * out),))


def _holo(fn, dfn):
    def op(a):
        va = value(a)
        return _make(fn(va), (a,), (lambda g: g * np.conj(dfn(va)),))
    return op


exp = _holo(np.exp, np.exp)
log = _holo(np.log, lambda x: 1.0 / x)
sin = _holo(np.sin, np.cos)
cos = _holo(np.cos, lambda x: -np.sin(x))
sqrt = _holo(np.sqrt, lambda x: 0.5 / np.sqrt(x))


def tanh(a):
    y = np.tanh(value(a))
    return _make(y, (a,), (lambda g: g * (1 - y * y),))


def sigmoid(a):
    y = 1.0 / (1.0 + np.exp(-value(a)))
    return _make(y, (a,), (lambda g: g * y * (1 - y),))


def conj(a):
    return _make(np.conj(value(a)), (a,), (np.conj,))


def real(a):
    return _make(np.real(value(a)), (a,), (lambda g: g.astype(complex) if np.iscomplexobj(value(a)) else g,))


def imag(a):
    return _make(np.imag(value(a)), (a,), (lambda g: 1j * g,))


# -- structural -------------------------------------------------------------------

def getitem(a, idx):
    va = value(a)

    def vjp(g):
        out = np.zeros(va.shape, dtype=np.result_type(va, g))
        np.add.at(out, idx, g)
        return out

    return _make(va[idx], (a,), (vjp,))


def stack(items):
    vals = [value(x) for x in items]
    return _make(np.stack(vals), items, [(lambda g, k=k: g[k]) for k in range(len(items))])


def concatenate(items):
    vals = [value(x) for x in items]
    edges = np.cumsum([0] + [len(v) for v in vals])
    return _make(np.concatenate(vals), items,
                 [(lambda g, k=k: g[edges[k]:edges[k + 1]]) for k in range(len(items))])


def reshape(a, shape):
    va = value(a)
    return _make(va.reshape(shape), (a,), (lambda g: g.reshape(va.shape),))


def total(a):
    va = value(a)
    return _make(va.sum(), (a,), (lambda g: np.broadcast_to(g, va.shape).copy(),))


def trace(a):
    va = value(a)
    return _make(np.trace(va), (a,), (lambda g: g * np.eye(va.shape[0]),))


def dagger(a):
    return _make(np.conj(value(a)).T, (a,), (lambda g: np.conj(g).T,))


# -- linear algebra ----------------------------------------------------------------

def matmul(a, b):
    va, vb = value(a), value(b)

    def ga(g):
        if va.ndim == 1:
            return g @ np.conj(vb).T if vb.ndim == 2 else g * np.conj(vb)
        return np.outer(g, np.conj(vb)) if vb.ndim == 1 else g @ np.conj(vb).T

    def gb(g):
        if va.ndim == 1:
            return np.outer(np.conj(va), g)
        return np.conj(va).T @ g

    return _make(va @ vb, (a, b), (ga, gb))


def kron(a, b):
    va, vb = value(a), value(b)
    (a0, a1), (b0, b1) = va.shape, vb.shape

    def ga(g):
        return np.einsum("ikjl,kl->ij", g.reshape(a0, b0, a1, b1), np.conj(vb))

    def gb(g):
        return np.einsum("ikjl,ij->kl", g.reshape(a0, b0, a1, b1), np.conj(va))

    return _make(np.kron(va, vb), (a, b), (ga, gb))


def expm(a):
    va = value(a)
    if not isinstance(a, Var):
        return matrix_exp(va)
    return _make(matrix_exp(va), (a,), (lambda g: expm_frechet(np.conj(va).T, g)[1],))


def sandwich(u, rho):
    """``u rho u^dag``."""
    return matmul(matmul(u, rho), dagger(u))


# -- custom ops --------------------------------------------------------------------

def linear_op(fn, adjoint_fn, a):
    """Apply a linear map whose Hilbert-Schmidt adjoint is ``adjoint_fn``."""
    return _make(fn(value(a)), (a,), (adjoint_fn,))


# -- backward pass -----------------------------------------------------------------

def _topo(root):
    seen, stack_, nodes = set(), [root], []
    while stack_:
        v = stack_.pop()
        if v.id in seen:
            continue
        seen.add(v.id)
        nodes.append(v)
        for p, _ in v.parents:
            if p.id not in seen:
                stack_.append(p)
    nodes.sort(key=lambda v: v.id, reverse=True)
    return nodes


def grad(output, wrt):
    """Gradients of the real scalar ``output`` with respect to each Var in ``wrt``."""
    single = isinstance(wrt, Var)
    wrt = [wrt] if single else list(wrt)
    if not isinstance(output, Var):
        res = [np.zeros_like(value(w)) for w in wrt]
        return res[0] if single else res
    if output.value.size != 1 or np.iscomplexobj(output.value):
        raise ValueError("grad needs a real scalar output")
    grads = {output.id: np.ones_like(output.value, dtype=float)}
    for node in _topo(output):
        g = grads.pop(node.id, None) if node.parents else grads.get(node.id)
        if g is None or not node.parents:
            continue
        for p, vjp in node.parents:
            contrib = vjp(g)
            prev = grads.get(p.id)
            grads[p.id] = contrib if prev is None else prev + contrib
    res = []
    for w in wrt:
        g = grads.get(w.id)
        if g is None:
            g = np.zeros_like(w.value)
        elif not np.iscomplexobj(w.value):
            g = np.real(g)
        res.append(np.asarray(g).reshape(w.value.shape))
    return res[0] if single else res
