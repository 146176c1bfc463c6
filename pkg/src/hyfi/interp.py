"""Geodesic interpolation between hyperboloid points.

The geodesic from p to q evaluated at parameter t has the closed form

    gamma(t) = sinh((1-t)*beta)/sinh(beta) * p + sinh(t*beta)/sinh(beta) * q,

with beta = sqrt(kappa) * d(p, q).  Both coefficients are strictly below
their Euclidean counterparts (1-t) and t for beta > 0, so the interpolant's
spatial part is strictly shorter than the straight-line mix: interpolation
compresses toward the origin.

``geodesic_interpolate`` applies the closed form to the spatial parts and
re-lifts, which avoids the two-stage cancellation of composing the log and
exp maps; the composition is kept in :func:`interpolate_via_maps` as an
independent cross-check path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import hygeo, tape
from .hygeo import LorentzPoint
from .tape import value_of


@dataclass(frozen=True)
class InterpCoefficients:
    """Endpoint weights of the sinh form at (t, beta).

    For t in (0,1) and beta > 0: a < 1-t, b < t, and a + b < 1.
    """

    a: float
    b: float
    beta: float
    t: float


def _sinh_ratio(num_scale, beta):
    """sinh(num_scale*beta)/sinh(beta) via expm1, stable for all beta > 0."""
    # sinh(c*b)/sinh(b) = e^{(c-1)b} * expm1(-2cb)/expm1(-2b)
    return math.exp((num_scale - 1.0) * beta) * math.expm1(-2.0 * num_scale * beta) / math.expm1(-2.0 * beta)


def sinh_coefficients(t, beta) -> InterpCoefficients:
    """Geodesic endpoint weights; Euclidean limit (1-t, t) at beta = 0."""
    t = float(t)
    beta = float(beta)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"interpolation parameter t must lie in [0, 1], got {t}")
    if not (np.isfinite(beta) and beta >= 0.0):
        raise ValueError(f"beta must be a nonnegative finite real, got {beta}")
    if beta == 0.0 or t == 0.0 or t == 1.0:
        return InterpCoefficients(1.0 - t, t, beta, t)
    return InterpCoefficients(_sinh_ratio(1.0 - t, beta), _sinh_ratio(t, beta), beta, t)


def geodesic_interpolate(p: LorentzPoint, q: LorentzPoint, t, kappa) -> LorentzPoint:
    """Point at parameter t on the geodesic from p to q (sinh form + re-lift)."""
    ds = p.spatial - q.spatial
    dt = p.time - q.time
    excess = 0.5 * kappa * (tape.dot(ds, ds) - dt * dt)
    beta = hygeo.acosh1p(excess)
    traced = isinstance(beta, tape.Var) or isinstance(p.spatial, tape.Var)
    if not traced and float(value_of(beta)) == 0.0:
        return p  # coincident endpoints: the geodesic is a point
    safe = tape.clamp_min(beta, 1e-9)
    denom = tape.sinh(safe)
    a = tape.sinh((1.0 - t) * safe) / denom
    b = tape.sinh(t * safe) / denom
    spatial = a * p.spatial + b * q.spatial
    return hygeo.lift(spatial, kappa)


def interpolate_via_maps(p: LorentzPoint, q: LorentzPoint, t, kappa) -> LorentzPoint:
    """exp_p(t * log_p(q)): the two-stage composition, kept as a cross-check."""
    v = hygeo.log_map(p, q, kappa)
    return hygeo.exp_map(p, v, t, kappa)


def compression_gap(p: LorentzPoint, q: LorentzPoint, t, kappa) -> float:
    """Spatial-norm margin of the straight-line mix over the geodesic point.

    Positive for every pair of distinct points and t in (0,1), including
    collinear spatial parts.
    """
    t = float(t)
    if not 0.0 < t < 1.0:
        raise ValueError(f"t must lie strictly inside (0, 1), got {t}")
    ps = np.asarray(value_of(p.spatial), dtype=np.float64)
    qs = np.asarray(value_of(q.spatial), dtype=np.float64)
    euclid = np.linalg.norm((1.0 - t) * ps + t * qs)
    hyper = np.linalg.norm(value_of(geodesic_interpolate(p, q, t, kappa).spatial))
    return float(euclid - hyper)


def interpolation_coefficient(semantic_feature, w_t, bias) -> float:
    """Per-item mixing weight sigma(<w_t, feature> + bias), strictly in (0, 1)."""
    feature = np.asarray(semantic_feature, dtype=np.float64)
    w = np.asarray(w_t, dtype=np.float64)
    if feature.shape != w.shape or feature.ndim != 1:
        raise ValueError(f"feature/weight shape mismatch: {feature.shape} vs {w.shape}")
    if not (np.all(np.isfinite(feature)) and np.all(np.isfinite(w)) and np.isfinite(bias)):
        raise ValueError("inputs must be finite")
    return float(tape.sigmoid(float(np.dot(w, feature)) + float(bias)))


# ---------------------------------------------------------------------------
# batched, differentiable form used inside the model

def coefficients_batch(t, beta):
    """Traced sinh-form weights for per-item (B,) t and beta arrays.

    The denominator argument is floored at 1e-9; below that the finite ratio
    already equals the Euclidean limit to machine precision.
    """
    safe = tape.clamp_min(beta, 1e-9)
    denom = tape.sinh(safe)
    a = tape.sinh((1.0 - t) * safe) / denom
    b = tape.sinh(t * safe) / denom
    return a, b


def interpolate_batch(sp_p, t_p, sp_q, t_q, t, kappa):
    """Spatial parts (B, n) of geodesic interpolants between aligned batches."""
    arg = tape.clamp_min(-kappa * hygeo.pairwise_inner(sp_p, t_p, sp_q, t_q), 1.0)
    beta = hygeo.stable_acosh(arg)
    a, b = coefficients_batch(t, beta)
    n = value_of(sp_p).shape[0]
    return tape.reshape(a, (n, 1)) * sp_p + tape.reshape(b, (n, 1)) * sp_q
