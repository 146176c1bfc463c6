"""Gradient evaluation of scalar objectives over named parameter vectors.

A :class:`ParamVector` is a flat float64 array plus a layout mapping
parameter names to (offset, size, shape) slices.  ``value_and_grad`` runs the
objective once with the flat array wrapped in a tape leaf and reads the
adjoint back out; ``finite_diff_grad`` is the independent central-difference
oracle used to verify it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape
from .tape import Var, backward


@dataclass
class ParamVector:
    """Flat parameter storage with a stable named layout.

    ``layout`` maps name -> (offset, size, shape).  Slices must be disjoint
    and cover [0, len) in layout order.
    """

    flat: object  # np.ndarray, or tape.Var while tracing
    layout: dict

    @classmethod
    def pack(cls, named):
        """Build from an ordered {name: array} mapping."""
        layout = {}
        chunks = []
        offset = 0
        for name, arr in named.items():
            arr = np.asarray(arr, dtype=np.float64)
            layout[name] = (offset, arr.size, arr.shape)
            chunks.append(arr.ravel())
            offset += arr.size
        flat = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(flat, layout)

    def validate(self):
        offset = 0
        for name, (start, size, shape) in self.layout.items():
            if start != offset:
                raise ValueError(f"layout slice for '{name}' is not contiguous")
            if int(np.prod(shape, dtype=int)) != size:
                raise ValueError(f"layout shape for '{name}' disagrees with its size")
            offset += size
        if offset != len(self):
            raise ValueError("layout does not cover the flat array")

    def view(self, name):
        """Named slice reshaped to its declared shape; traced if flat is traced."""
        start, size, shape = self.layout[name]
        piece = self.flat[start:start + size]
        if isinstance(piece, Var):
            return tape.reshape(piece, shape)
        return np.reshape(piece, shape)

    def slice_of(self, name):
        start, size, _ = self.layout[name]
        return slice(start, start + size)

    def names(self):
        return list(self.layout.keys())

    def copy(self):
        return ParamVector(np.array(self.flat, dtype=np.float64), dict(self.layout))

    def __len__(self):
        return int(self.flat.shape[0])


def value_and_grad(objective, params):
    """Evaluate ``objective(params)`` and its gradient in one recorded pass.

    The objective must produce a scalar from registered tape operations; any
    other operation applied to the traced parameters raises.
    """
    leaf = Var(np.array(params.flat, dtype=np.float64), op="params")
    out = objective(ParamVector(leaf, params.layout))
    if isinstance(out, Var):
        if out.value.shape != ():
            raise ValueError(f"objective must be scalar, got shape {out.value.shape}")
        adj = backward(out)
        g = adj.get(id(leaf))
        if g is None:
            g = np.zeros_like(params.flat)
        return float(out.value), ParamVector(np.asarray(g, dtype=np.float64), dict(params.layout))
    # objective never touched the traced parameters
    return float(out), ParamVector(np.zeros_like(params.flat), dict(params.layout))


def finite_diff_grad(objective, params, step):
    """Central-difference gradient, one coordinate at a time."""
    if step <= 0:
        raise ValueError("step must be positive")
    base = np.array(params.flat, dtype=np.float64)
    g = np.zeros_like(base)
    for i in range(base.size):
        x = base.copy()
        x[i] = base[i] + step
        fp = float(objective(ParamVector(x, params.layout)))
        x[i] = base[i] - step
        fm = float(objective(ParamVector(x, params.layout)))
        g[i] = (fp - fm) / (2.0 * step)
    return ParamVector(g, dict(params.layout))
