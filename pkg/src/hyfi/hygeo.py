"""Lorentz (hyperboloid) model primitives.

Points live on the upper sheet of the two-sheeted hyperboloid of curvature
-kappa in Minkowski space: <p, p>_L = -1/kappa with p0 > 0.  Only the spatial
coordinates are stored; the time coordinate is re-derived on every
construction as sqrt(1/kappa + |spatial|^2), so the constraint holds by
construction instead of by renormalization.

All arithmetic is float64.  Functions accept plain arrays or tape variables
(see :mod:`hyfi.tape`) so the same formulas serve oracles and training.
Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape
from .tape import Var, value_of

# series switch-over for acosh near 1 and sinh(x)/x near 0
_ACOSH_SERIES_BOUND = 1e-7
_SINHC_SERIES_BOUND = 1e-6


def _check_kappa(kappa):
    if not isinstance(kappa, Var):
        k = float(kappa)
        if not np.isfinite(k) or k <= 0.0:
            raise ValueError(f"curvature parameter must be a positive finite real, got {kappa!r}")


@dataclass(frozen=True)
class LorentzPoint:
    """Point on the hyperboloid; time component derived from the spatial part."""

    spatial: object  # (n,) array or tape.Var
    time: object     # scalar, derived as sqrt(1/kappa + |spatial|^2)

    @property
    def dim(self):
        return int(value_of(self.spatial).shape[0])

    def vector(self):
        """Full (n+1) coordinate array [time, spatial...] (untraced)."""
        return np.concatenate([[float(value_of(self.time))], value_of(self.spatial)])


@dataclass(frozen=True)
class TangentVector:
    """Vector in the tangent space at ``base``: <base, components>_L = 0."""

    base: LorentzPoint
    components: np.ndarray  # (n+1,) [time, spatial...]

    @property
    def spatial(self):
        return self.components[1:]


def lorentz_inner(p, q):
    """Lorentzian inner product -p0*q0 + <spatial(p), spatial(q)> of full vectors."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.ndim != 1 or q.ndim != 1 or p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    if p.shape[0] < 2:
        raise ValueError("vectors must have length >= 2 (time + at least one spatial)")
    return float(-p[0] * q[0] + np.dot(p[1:], q[1:]))


def point_inner(p: LorentzPoint, q: LorentzPoint):
    """<p, q>_L from stored components; traced when the points are traced."""
    return tape.dot(p.spatial, q.spatial) - p.time * q.time


def lift(spatial, kappa) -> LorentzPoint:
    """Spatial coordinates -> hyperboloid point, deriving the time component."""
    _check_kappa(kappa)
    if not isinstance(spatial, Var):
        spatial = np.asarray(spatial, dtype=np.float64)
        if spatial.ndim != 1:
            raise ValueError("spatial coordinates must be a 1-d vector")
        if not np.all(np.isfinite(spatial)):
            raise ValueError("spatial coordinates must be finite")
    time = tape.sqrt(1.0 / kappa + tape.dot(spatial, spatial))
    return LorentzPoint(spatial, time)


def origin(n, kappa) -> LorentzPoint:
    """The time origin (sqrt(1/kappa), 0, ..., 0)."""
    return lift(np.zeros(n), kappa)


def acosh1p(excess):
    """acosh(1 + excess) for excess >= 0; series sqrt(2e)*(1 - e/12) below 1e-7.

    Raw acosh loses all precision just above 1 (near-coincident points).
    """
    excess = tape.clamp_min(excess, 0.0)
    series = tape.sqrt(2.0 * excess) * (1.0 - excess / 12.0)
    return tape.where(value_of(excess) < _ACOSH_SERIES_BOUND, series, tape.acosh(1.0 + excess))


def stable_acosh(x):
    """acosh for arguments >= 1 with the near-1 series branch."""
    return acosh1p(x - 1.0)


def sinhc(x):
    """sinh(x)/x with the 1 + x^2/6 series below 1e-6, handling x = 0."""
    xv = value_of(x)
    series = 1.0 + x * x / 6.0
    safe = tape.clamp_min(x, _SINHC_SERIES_BOUND)
    return tape.where(xv < _SINHC_SERIES_BOUND, series, tape.sinh(safe) / safe)


def geodesic_distance(p: LorentzPoint, q: LorentzPoint, kappa):
    """Geodesic distance sqrt(1/kappa) * acosh(-kappa * <p,q>_L).

    The acosh argument is formed as 1 + (kappa/2) * <p-q, p-q>_L, which equals
    -kappa*<p,q>_L exactly but avoids the cancellation that would otherwise
    leave d(p, p) at the rounding floor instead of 0; the excess is clamped to
    >= 0 before evaluation.
    """
    _check_kappa(kappa)
    ds = p.spatial - q.spatial
    dt = p.time - q.time
    excess = 0.5 * kappa * (tape.dot(ds, ds) - dt * dt)
    return acosh1p(excess) / tape.sqrt(kappa)


def exp_map(p: LorentzPoint, v: TangentVector, t, kappa) -> LorentzPoint:
    """Follow the geodesic from p along t*v and re-lift the spatial part.

    t outside [0, 1] extrapolates; this library does not clamp.
    """
    _check_kappa(kappa)
    comps = np.asarray(v.components, dtype=np.float64)
    norm2 = -comps[0] * comps[0] + np.dot(comps[1:], comps[1:])
    if norm2 < -1e-9:
        raise ValueError(f"tangent vector is timelike (<v,v>_L = {norm2:.3e} < 0)")
    phi = np.sqrt(float(value_of(kappa)) * max(norm2, 0.0))
    ct = np.cosh(t * phi)
    # sinh(t*phi)/phi == t * sinhc(t*phi); exact limit t*v at phi -> 0
    st = t * float(value_of(sinhc(abs(t) * phi)))
    spatial = ct * value_of(p.spatial) + st * comps[1:]
    return lift(spatial, kappa)


def log_map(p: LorentzPoint, q: LorentzPoint, kappa) -> TangentVector:
    """Tangent vector at p pointing to q; inverse of exp_map along the geodesic."""
    _check_kappa(kappa)
    kappa = float(value_of(kappa))
    pvec = p.vector()
    qvec = q.vector()
    ds = qvec[1:] - pvec[1:]
    dt = qvec[0] - pvec[0]
    excess = max(0.0, 0.5 * kappa * (float(np.dot(ds, ds)) - dt * dt))
    if excess == 0.0:
        return TangentVector(p, np.zeros_like(pvec))
    alpha = 1.0 + excess
    if excess < _ACOSH_SERIES_BOUND:
        # acosh(alpha)/sqrt(alpha^2-1) -> 1 - e/3 + O(e^2) as alpha -> 1
        coef = 1.0 - excess / 3.0
    else:
        coef = np.arccosh(alpha) / np.sqrt(alpha * alpha - 1.0)
    return TangentVector(p, coef * (qvec - alpha * pvec))


def exp_map_origin(v_enc, kappa) -> LorentzPoint:
    """Lift an encoder output: exp map at the time origin of [0, v_enc]."""
    _check_kappa(kappa)
    if not isinstance(v_enc, Var):
        v_enc = np.asarray(v_enc, dtype=np.float64)
        if not np.all(np.isfinite(v_enc)):
            raise ValueError("encoder output must be finite")
    r = tape.sqrt(tape.dot(v_enc, v_enc))
    coef = sinhc(tape.sqrt(kappa) * r)
    return lift(coef * v_enc, kappa)


def tangent_norm(v: TangentVector):
    """Lorentzian norm sqrt(<v,v>_L) of a spacelike tangent vector."""
    comps = np.asarray(v.components, dtype=np.float64)
    norm2 = -comps[0] * comps[0] + np.dot(comps[1:], comps[1:])
    return float(np.sqrt(max(norm2, 0.0)))


def constraint_residual(p: LorentzPoint, kappa) -> float:
    """|kappa * <p,p>_L + 1|; zero on the hyperboloid."""
    inner = float(value_of(point_inner(p, p)))
    return abs(float(value_of(kappa)) * inner + 1.0)


# ---------------------------------------------------------------------------
# batched forms used by the model and evaluation paths (rows are items)

def lift_batch(spatial, kappa):
    """Time components (B,) for spatial rows (B, n)."""
    sq = tape.sum_(spatial * spatial, axis=1)
    return tape.sqrt(1.0 / kappa + sq)


def exp_map_origin_batch(venc, kappa):
    """Spatial parts (B, n) of exp-at-origin lifts of encoder rows (B, n)."""
    r = tape.sqrt(tape.sum_(venc * venc, axis=1))
    y = tape.sqrt(kappa) * r
    coef = sinhc(y)
    b = value_of(venc).shape[0]
    return tape.reshape(coef, (b, 1)) * venc


def pairwise_inner(sa, ta, sb, tb):
    """Row-by-row Lorentzian inner products (B,)."""
    return tape.sum_(sa * sb, axis=1) - ta * tb


def distance_matrix(sa, ta, sb, tb, kappa):
    """All-pairs geodesic distances (A, B) between two batches of points."""
    a = value_of(sa).shape[0]
    b = value_of(sb).shape[0]
    cross = tape.matmul(sa, tape.transpose(sb))
    tt = tape.reshape(ta, (a, 1)) * tape.reshape(tb, (1, b))
    arg = tape.clamp_min(-kappa * (cross - tt), 1.0)
    return stable_acosh(arg) / tape.sqrt(kappa)


def paired_distance(sa, ta, sb, tb, kappa):
    """Row-wise geodesic distances (B,) between aligned batches."""
    arg = tape.clamp_min(-kappa * pairwise_inner(sa, ta, sb, tb), 1.0)
    return stable_acosh(arg) / tape.sqrt(kappa)


def origin_distance(spatial, kappa):
    """Distance to the time origin: asinh(sqrt(kappa)*|spatial|)/sqrt(kappa).

    Equivalent to the acosh form through the hyperboloid constraint but exact
    for small norms.
    """
    spatial = np.asarray(value_of(spatial), dtype=np.float64)
    k = float(value_of(kappa))
    norms = np.linalg.norm(np.atleast_2d(spatial), axis=1)
    d = np.arcsinh(np.sqrt(k) * norms) / np.sqrt(k)
    return d if np.asarray(spatial).ndim > 1 else float(d[0])
