"""Two-tower alignment model on the hyperboloid.

Visual side: semantic and perceptual feature vectors are projected by
learnable square matrices, scaled by a shared learnable scalar, lifted at the
time origin, and fused by geodesic interpolation with a per-item learned
coefficient t = sigmoid(w_t . feature + bias).  Brain side: an affine encoder
followed by its own scale and lift.  The two towers meet in a symmetric
temperature-scaled contrastive objective on negative geodesic distance.

Temperature and curvature are stored as logs so both stay positive under
unconstrained optimization.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import hygeo, interp, tape
from .grad import ParamVector
from .hygeo import LorentzPoint
from .ioutil import atomic_write_bytes, atomic_write_text
from .tape import value_of

T_INPUTS = ("semantic", "perceptual", "original", "brain")
LOSS_MODES = ("standard", "paper_literal")
ABLATIONS = ("full", "no_interp", "euclidean_interp", "euclidean_space")

# when enabled, per-item visual encoding asserts the interpolant is no farther
# from the origin than either endpoint (a consequence of compression)
debug_checks = False

_PARAM_FIELDS = ("w_s", "w_p", "w_t", "w_t_bias", "brain_w", "brain_b",
                 "alpha_v", "alpha_b", "log_tau", "log_kappa")


@dataclass
class ModelConfig:
    d: int
    d_b: int
    fix_alpha_v: bool = False
    t_input: str = "semantic"
    loss_mode: str = "standard"

    def __post_init__(self):
        if self.d < 1 or self.d_b < 1:
            raise ValueError("feature dimensions must be positive")
        if self.t_input not in T_INPUTS:
            raise ValueError(f"t_input must be one of {T_INPUTS}, got {self.t_input!r}")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")


@dataclass
class HyfiParams:
    """Named views into a ParamVector (arrays untraced, tape vars traced)."""

    w_s: object       # (d, d) semantic projection
    w_p: object       # (d, d) perceptual projection
    w_t: object       # (d,)  coefficient head
    w_t_bias: object  # ()    coefficient bias
    brain_w: object   # (d_b, d) affine brain encoder
    brain_b: object   # (d,)
    alpha_v: object   # () visual lift scale
    alpha_b: object   # () brain lift scale
    log_tau: object   # () log temperature
    log_kappa: object  # () log curvature

    @classmethod
    def from_vector(cls, params: ParamVector) -> "HyfiParams":
        return cls(*(params.view(name) for name in _PARAM_FIELDS))

    def tau(self):
        return tape.exp(self.log_tau)

    def kappa(self):
        return tape.exp(self.log_kappa)


@dataclass
class EmbeddingBatch:
    """Aligned batch of hyperboloid points; pair i in one batch matches i in the other."""

    points: list
    ids: np.ndarray

    def __len__(self):
        return len(self.points)

    def spatial_rows(self):
        return np.stack([np.asarray(value_of(p.spatial), dtype=np.float64) for p in self.points])

    def time_rows(self):
        return np.array([float(value_of(p.time)) for p in self.points])


def init_params(config: ModelConfig, rng) -> ParamVector:
    """Initial parameters: near-identity projections, centered coefficient head.

    alpha scales start at sqrt(1/d) (1 when alpha_v is fixed), temperature at
    0.07, curvature at 1.
    """
    d, d_b = config.d, config.d_b
    named = {
        "w_s": np.eye(d) + 0.01 * rng.standard_normal((d, d)),
        "w_p": np.eye(d) + 0.01 * rng.standard_normal((d, d)),
        "w_t": np.zeros(d),
        "w_t_bias": np.zeros(()),
        "brain_w": rng.standard_normal((d_b, d)) / np.sqrt(d_b),
        "brain_b": np.zeros(d),
        "alpha_v": np.array(1.0 if config.fix_alpha_v else np.sqrt(1.0 / d)),
        "alpha_b": np.array(np.sqrt(1.0 / d)),
        "log_tau": np.array(np.log(0.07)),
        "log_kappa": np.array(0.0),
    }
    return ParamVector.pack(named)


def frozen_names(config: ModelConfig):
    return ("alpha_v",) if config.fix_alpha_v else ()


# ---------------------------------------------------------------------------
# encoders (batched rows; per-item wrappers below)

def _coefficient_features(x_s, x_p, x_b, hp, config):
    if config.t_input == "semantic":
        return x_s
    if config.t_input == "perceptual":
        return x_p
    if config.t_input == "original":
        return 0.5 * (np.asarray(x_s) + np.asarray(x_p))
    if x_b is None:
        raise ValueError("t_input='brain' needs brain signals alongside the visual features")
    return tape.matmul(x_b, hp.brain_w) + hp.brain_b


def coefficient_batch(x_s, x_p, hp, config, x_b=None):
    """Per-item interpolation coefficients t (B,), strictly inside (0, 1)."""
    feats = _coefficient_features(x_s, x_p, x_b, hp, config)
    return tape.sigmoid(tape.matmul(feats, hp.w_t) + hp.w_t_bias)


def visual_tangents(x_s, x_p, hp):
    """Scaled projections of both visual feature sets, before lifting."""
    u_s = hp.alpha_v * tape.matmul(x_s, tape.transpose(hp.w_s))
    u_p = hp.alpha_v * tape.matmul(x_p, tape.transpose(hp.w_p))
    return u_s, u_p


def brain_tangent(x_b, hp):
    return hp.alpha_b * (tape.matmul(x_b, hp.brain_w) + hp.brain_b)


def encode_visual_batch(x_s, x_p, hp, config, x_b=None, ablation="full"):
    """Visual-tower spatial parts and times (B, d)/(B,) for one batch.

    Returns (spatial, time, aux) where aux carries the endpoint embeddings
    and coefficients for analysis.
    """
    kappa = hp.kappa()
    u_s, u_p = visual_tangents(x_s, x_p, hp)
    sp_s = hygeo.exp_map_origin_batch(u_s, kappa)
    tm_s = hygeo.lift_batch(sp_s, kappa)
    if ablation == "no_interp":
        aux = {"sp_s": sp_s, "tm_s": tm_s, "sp_p": None, "tm_p": None, "t": None, "kappa": kappa}
        return sp_s, tm_s, aux
    sp_p = hygeo.exp_map_origin_batch(u_p, kappa)
    tm_p = hygeo.lift_batch(sp_p, kappa)
    t = coefficient_batch(x_s, x_p, hp, config, x_b=x_b)
    if ablation == "euclidean_interp":
        # straight-line mix of the spatial parts instead of the geodesic;
        # re-lifting derives the time component as always
        b = value_of(u_s).shape[0]
        tc = tape.reshape(t, (b, 1))
        sp = (1.0 - tc) * sp_s + tc * sp_p
    elif ablation == "full":
        sp = interp.interpolate_batch(sp_s, tm_s, sp_p, tm_p, t, kappa)
    else:
        raise ValueError(f"unknown hyperbolic ablation {ablation!r}")
    tm = hygeo.lift_batch(sp, kappa)
    aux = {"sp_s": sp_s, "tm_s": tm_s, "sp_p": sp_p, "tm_p": tm_p, "t": t, "kappa": kappa}
    return sp, tm, aux


def encode_brain_batch(x_b, hp):
    """Brain-tower spatial parts and times (B, d_b rows encoded to d)."""
    kappa = hp.kappa()
    u_b = brain_tangent(x_b, hp)
    sp = hygeo.exp_map_origin_batch(u_b, kappa)
    return sp, hygeo.lift_batch(sp, kappa)


def _as_params(params) -> HyfiParams:
    return params if isinstance(params, HyfiParams) else HyfiParams.from_vector(params)


def encode_visual_pair(x_s, x_p, params, config: ModelConfig, x_b=None) -> LorentzPoint:
    """Interpolated visual embedding of one (semantic, perceptual) feature pair."""
    x_s = np.asarray(x_s, dtype=np.float64)
    x_p = np.asarray(x_p, dtype=np.float64)
    if not (np.all(np.isfinite(x_s)) and np.all(np.isfinite(x_p))):
        raise ValueError("visual features must be finite")
    hp = _as_params(params)
    xb_row = None if x_b is None else np.asarray(x_b, dtype=np.float64).reshape(1, -1)
    sp, tm, aux = encode_visual_batch(x_s.reshape(1, -1), x_p.reshape(1, -1), hp, config,
                                      x_b=xb_row)
    point = LorentzPoint(sp[0], tm[0])
    if debug_checks:
        kappa = float(value_of(aux["kappa"]))
        d_hat = hygeo.origin_distance(value_of(point.spatial), kappa)
        d_s = hygeo.origin_distance(value_of(aux["sp_s"])[0], kappa)
        d_p = hygeo.origin_distance(value_of(aux["sp_p"])[0], kappa)
        if d_hat > max(d_s, d_p) + 1e-9:
            raise AssertionError(
                f"interpolant farther from origin than both endpoints: {d_hat} > max({d_s}, {d_p})")
    return point


def encode_brain(x_b, params, config: ModelConfig) -> LorentzPoint:
    """Hyperboloid embedding of one brain-signal vector."""
    x_b = np.asarray(x_b, dtype=np.float64)
    if not np.all(np.isfinite(x_b)):
        raise ValueError("brain signal must be finite")
    hp = _as_params(params)
    sp, tm = encode_brain_batch(x_b.reshape(1, -1), hp)
    return LorentzPoint(sp[0], tm[0])


# ---------------------------------------------------------------------------
# contrastive objective

def _direction_nce(logits, mode):
    """Mean InfoNCE over rows of a (B, B) logit matrix; positives on the diagonal."""
    b = value_of(logits).shape[0]
    eye = np.eye(b, dtype=bool)
    if mode == "paper_literal":
        # denominator excludes the positive term, exactly as printed
        lse = tape.logsumexp(tape.where(eye, -1e30, logits), axis=1)
    elif mode == "standard":
        lse = tape.logsumexp(logits, axis=1)
    else:
        raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {mode!r}")
    pos = logits[np.arange(b), np.arange(b)]
    return tape.mean_(lse - pos)


def nce_from_distances(dist, tau, mode="standard"):
    """Symmetric contrastive loss from an all-pairs distance matrix."""
    logits = -dist / tau
    return _direction_nce(logits, mode) + _direction_nce(tape.transpose(logits), mode)


def contrastive_loss(z_v: EmbeddingBatch, z_b: EmbeddingBatch, tau, kappa,
                     mode="standard"):
    """One directional loss L(z_v, z_b): rows query visual, columns are brain candidates."""
    if len(z_v) < 2 or len(z_b) != len(z_v):
        raise ValueError(f"need two aligned batches of size >= 2, got {len(z_v)} and {len(z_b)}")
    dist = hygeo.distance_matrix(z_v.spatial_rows(), z_v.time_rows(),
                                 z_b.spatial_rows(), z_b.time_rows(), float(kappa))
    return float(value_of(_direction_nce(-dist / float(tau), mode)))


def _cosine_logits(u_v, u_b, tau):
    nv = tape.sqrt(tape.clamp_min(tape.sum_(u_v * u_v, axis=1), 1e-24))
    nb = tape.sqrt(tape.clamp_min(tape.sum_(u_b * u_b, axis=1), 1e-24))
    b = value_of(u_v).shape[0]
    vhat = u_v / tape.reshape(nv, (b, 1))
    bhat = u_b / tape.reshape(nb, (b, 1))
    return tape.matmul(vhat, tape.transpose(bhat)) / tau


def total_loss(x_s, x_p, x_b, params, config: ModelConfig, ablation="full"):
    """Symmetric alignment objective on one aligned batch of feature rows.

    ``ablation`` selects the pipeline variant: ``full`` interpolates on the
    manifold, ``no_interp`` aligns the semantic embedding alone,
    ``euclidean_interp`` mixes in the flat feature space before lifting, and
    ``euclidean_space`` drops the manifold entirely in favor of
    cosine-similarity contrast on the flat semantic features.
    """
    if ablation not in ABLATIONS:
        raise ValueError(f"ablation must be one of {ABLATIONS}, got {ablation!r}")
    n = value_of(x_s).shape[0]
    if n < 2:
        raise ValueError("contrastive batches need at least 2 items")
    hp = _as_params(params)
    tau = hp.tau()
    mode = config.loss_mode
    if ablation == "euclidean_space":
        u_s, _ = visual_tangents(x_s, x_p, hp)
        u_b = brain_tangent(x_b, hp)
        logits = _cosine_logits(u_s, u_b, tau)
    else:
        sp_v, tm_v, _ = encode_visual_batch(x_s, x_p, hp, config, x_b=x_b, ablation=ablation)
        sp_b, tm_b = encode_brain_batch(x_b, hp)
        dist = hygeo.distance_matrix(sp_v, tm_v, sp_b, tm_b, hp.kappa())
        logits = -dist / tau
    return _direction_nce(logits, mode) + _direction_nce(tape.transpose(logits), mode)


# ---------------------------------------------------------------------------
# checkpoint format: JSON manifest + raw little-endian float64 blob

CHECKPOINT_VERSION = 1


def save_checkpoint(base_path, params: ParamVector, config: ModelConfig, extra=None):
    """Write ``<base>.json`` (manifest) and ``<base>.bin`` (parameter blob)."""
    base = os.fspath(base_path)
    blob_name = os.path.basename(base) + ".bin"
    manifest = {
        "format": "hyfi-checkpoint",
        "version": CHECKPOINT_VERSION,
        "blob": blob_name,
        "dtype": "<f8",
        "n_params": len(params),
        "layout": [
            {"name": name, "offset": off, "size": size, "shape": list(shape)}
            for name, (off, size, shape) in params.layout.items()
        ],
        "model": asdict(config),
        "extra": extra or {},
    }
    atomic_write_bytes(base + ".bin", np.asarray(params.flat, dtype="<f8").tobytes())
    atomic_write_text(base + ".json", json.dumps(manifest, indent=2) + "\n")
    return base + ".json", base + ".bin"


def load_checkpoint(base_path):
    """Read a checkpoint pair back into (ParamVector, ModelConfig, extra)."""
    base = os.fspath(base_path)
    if base.endswith(".json"):
        base = base[:-5]
    with open(base + ".json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "hyfi-checkpoint":
        raise ValueError(f"{base}.json is not a checkpoint manifest")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('version')!r}")
    blob_path = os.path.join(os.path.dirname(os.path.abspath(base)), manifest["blob"])
    flat = np.frombuffer(open(blob_path, "rb").read(), dtype="<f8").astype(np.float64)
    if flat.size != manifest["n_params"]:
        raise ValueError(f"blob holds {flat.size} values, manifest promises {manifest['n_params']}")
    layout = {e["name"]: (e["offset"], e["size"], tuple(e["shape"])) for e in manifest["layout"]}
    params = ParamVector(flat, layout)
    params.validate()
    config = ModelConfig(**manifest["model"])
    return params, config, manifest.get("extra", {})
