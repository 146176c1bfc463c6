"""Reverse-mode differentiation over numpy values.

Define-by-run: every operation on a :class:`Var` creates a new node holding
the forward value, its parent nodes, and one vector-Jacobian closure per
parent.  ``backward`` replays the recorded graph in reverse creation order
(creation order is topological by construction) and accumulates adjoints.

All functions in this module dispatch on type: called with plain
floats/ndarrays they compute eagerly with numpy and record nothing, called
with at least one ``Var`` they return a ``Var``.  This lets the geometry and
model code be written once and run both untraced (oracles, evaluation) and
traced (training).

Each evaluation builds its own graph; graphs share no mutable state, so
independent evaluations are safe on separate threads.
"""

from __future__ import annotations

import itertools

import numpy as np


class Var:
    """One recorded node: forward value plus backward closures."""

    __slots__ = ("value", "parents", "vjps", "op", "tid")
    __array_ufunc__ = None  # keep numpy from consuming us elementwise
    _ids = itertools.count()

    def __init__(self, value, parents=(), vjps=(), op="leaf"):
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise ArithmeticError(f"non-finite value produced by node '{op}'")
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.op = op
        self.tid = next(Var._ids)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def item(self):
        return float(self.value)

    def __repr__(self):
        return f"Var({self.value!r}, op={self.op!r})"

    # arithmetic operators; reflected forms make ndarray <op> Var work
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, expt):
        return power(self, expt)

    def __getitem__(self, idx):
        return take(self, idx)


def value_of(x):
    """Forward value of ``x`` whether traced or plain."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def detach(x):
    """Forward value with the tape connection deliberately severed."""
    return np.array(value_of(x))


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` undoing numpy broadcasting."""
    grad = np.asarray(grad, dtype=np.float64)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(op, a, b, fwd, dfa, dfb):
    """Elementwise binary op with broadcasting; dfa/dfb map (g, av, bv) -> grad."""
    av, bv = value_of(a), value_of(b)
    out = fwd(av, bv)
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return out
    parents, vjps = [], []
    if isinstance(a, Var):
        parents.append(a)
        vjps.append(lambda g: _unbroadcast(dfa(g, av, bv), av.shape))
    if isinstance(b, Var):
        parents.append(b)
        vjps.append(lambda g: _unbroadcast(dfb(g, av, bv), bv.shape))
    return Var(out, tuple(parents), tuple(vjps), op)


def _unary(op, x, fwd, make_vjp):
    xv = value_of(x)
    out = fwd(xv)
    if not isinstance(x, Var):
        return out
    return Var(out, (x,), (make_vjp(xv, out),), op)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    return _binary("add", a, b, np.add, lambda g, av, bv: g, lambda g, av, bv: g)


def sub(a, b):
    return _binary("sub", a, b, np.subtract, lambda g, av, bv: g, lambda g, av, bv: -g)


def mul(a, b):
    return _binary("mul", a, b, np.multiply,
                   lambda g, av, bv: g * bv, lambda g, av, bv: g * av)


def div(a, b):
    return _binary("div", a, b, np.divide,
                   lambda g, av, bv: g / bv, lambda g, av, bv: -g * av / (bv * bv))


def neg(x):
    return _unary("neg", x, np.negative, lambda xv, out: lambda g: -g)


def power(x, expt):
    """x ** expt with a constant (non-traced) exponent."""
    e = float(expt)
    return _unary("power", x, lambda v: v ** e,
                  lambda xv, out: lambda g: g * e * xv ** (e - 1.0))


# ---------------------------------------------------------------------------
# elementwise transcendentals

def exp(x):
    return _unary("exp", x, np.exp, lambda xv, out: lambda g: g * out)


def log(x):
    return _unary("log", x, np.log, lambda xv, out: lambda g: g / xv)


def sqrt(x):
    # derivative clamped at 0 so masked-out `where` branches cannot emit nans
    return _unary("sqrt", x, np.sqrt,
                  lambda xv, out: lambda g: g / (2.0 * np.maximum(out, 1e-12)))


def sinh(x):
    return _unary("sinh", x, np.sinh, lambda xv, out: lambda g: g * np.cosh(xv))


def cosh(x):
    return _unary("cosh", x, np.cosh, lambda xv, out: lambda g: g * np.sinh(xv))


def acosh(x):
    # derivative denominator clamped: near argument 1 the forward pass runs
    # through a series expansion anyway, and positive pairs push arguments there
    return _unary("acosh", x, np.arccosh,
                  lambda xv, out: lambda g: g / np.maximum(
                      np.sqrt(np.maximum(xv * xv - 1.0, 0.0)), 1e-8))


def _sigmoid_value(xv):
    z = np.clip(xv, -500.0, 500.0)
    return 1.0 / (1.0 + np.exp(-z))


def sigmoid(x):
    return _unary("sigmoid", x, _sigmoid_value,
                  lambda xv, out: lambda g: g * out * (1.0 - out))


# ---------------------------------------------------------------------------
# shape and selection

def reshape(x, shape):
    return _unary("reshape", x, lambda v: np.reshape(v, shape),
                  lambda xv, out: lambda g: np.reshape(g, xv.shape))


def transpose(x):
    return _unary("transpose", x, np.transpose,
                  lambda xv, out: lambda g: np.transpose(g))


def take(x, idx):
    def vjp(xv, out):
        def back(g):
            z = np.zeros_like(xv)
            np.add.at(z, idx, g)
            return z
        return back
    return _unary("take", x, lambda v: v[idx], vjp)


def where(cond, a, b):
    """Select per element by a constant boolean mask."""
    cond = np.asarray(cond)
    return _binary("where", a, b, lambda av, bv: np.where(cond, av, bv),
                   lambda g, av, bv: np.where(cond, g, 0.0),
                   lambda g, av, bv: np.where(cond, 0.0, g))


def clamp_min(x, lo):
    """max(x, lo); gradient passes only where x > lo."""
    lo = float(lo)
    return _unary("clamp_min", x, lambda v: np.maximum(v, lo),
                  lambda xv, out: lambda g: g * (xv > lo))


# ---------------------------------------------------------------------------
# reductions and linear algebra

def sum_(x, axis=None, keepdims=False):
    def vjp(xv, out):
        def back(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, xv.shape)
        return back
    return _unary("sum", x, lambda v: np.sum(v, axis=axis, keepdims=keepdims), vjp)


def mean_(x, axis=None):
    xv = value_of(x)
    n = xv.size if axis is None else xv.shape[axis]
    return sum_(x, axis=axis) / float(n)


def dot(a, b):
    """Inner product of two 1-d vectors."""
    av, bv = value_of(a), value_of(b)
    if av.ndim != 1 or bv.ndim != 1 or av.shape != bv.shape:
        raise ValueError(f"dot expects equal-length vectors, got {av.shape} and {bv.shape}")
    return _binary("dot", a, b, np.dot,
                   lambda g, av, bv: g * bv, lambda g, av, bv: g * av)


def matmul(a, b):
    """Matrix product for 2d@2d, 2d@1d and 1d@2d operands."""
    av, bv = value_of(a), value_of(b)
    out = av @ bv
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return out
    if av.ndim == 2 and bv.ndim == 2:
        dfa = lambda g: g @ bv.T
        dfb = lambda g: av.T @ g
    elif av.ndim == 2 and bv.ndim == 1:
        dfa = lambda g: np.outer(g, bv)
        dfb = lambda g: av.T @ g
    elif av.ndim == 1 and bv.ndim == 2:
        dfa = lambda g: bv @ g
        dfb = lambda g: np.outer(av, g)
    else:
        raise ValueError(f"matmul expects 1d/2d operands, got {av.ndim}d and {bv.ndim}d")
    parents, vjps = [], []
    if isinstance(a, Var):
        parents.append(a)
        vjps.append(dfa)
    if isinstance(b, Var):
        parents.append(b)
        vjps.append(dfb)
    return Var(out, tuple(parents), tuple(vjps), "matmul")


def logsumexp(x, axis):
    """log(sum(exp(x), axis)) shifted by a detached max for stability."""
    m = np.max(value_of(x), axis=axis, keepdims=True)
    out = log(sum_(exp(x - m), axis=axis))
    return out + np.squeeze(m, axis=axis)


# ---------------------------------------------------------------------------
# backward pass

def backward(out):
    """Adjoints of scalar node ``out`` w.r.t. every node that feeds it.

    Returns a dict keyed by ``id(node)``.  Visits each reachable node exactly
    once in reverse creation order.
    """
    if not isinstance(out, Var):
        raise TypeError("backward expects a Var")
    nodes = []
    seen = {id(out)}
    stack = [out]
    while stack:
        node = stack.pop()
        nodes.append(node)
        for p in node.parents:
            if id(p) not in seen:
                seen.add(id(p))
                stack.append(p)
    nodes.sort(key=lambda n: n.tid, reverse=True)

    adjoint = {id(out): np.ones_like(out.value)}
    for node in nodes:
        g = adjoint.get(id(node))
        if g is None:
            continue  # node does not influence out
        for parent, vjp in zip(node.parents, node.vjps):
            pg = vjp(g)
            prev = adjoint.get(id(parent))
            adjoint[id(parent)] = pg if prev is None else prev + pg
    return adjoint
