"""Deterministic training loop, retrieval evaluation, and analysis summaries.

Optimization is plain decoupled-weight-decay Adam on the flat parameter
vector.  Shuffling draws from its own seeded stream so the data seed and the
training seed vary independently; the last incomplete batch of each epoch is
dropped (contrastive losses degrade at tiny batch sizes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hygeo, model as model_mod
from .grad import ParamVector, value_and_grad
from .model import ABLATIONS, HyfiParams, ModelConfig
from .synth import PairedDataset
from .tape import value_of

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    lr: float = 3e-4
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 60
    seed: int = 0
    loss_mode: str = "standard"
    ablation: str = "full"

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 2:
            raise ValueError("contrastive training needs batch_size >= 2")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def optimizer_step(params, grads, state: AdamState, config: TrainConfig, mask=None):
    """One decoupled-weight-decay Adam update; returns (new params, new state).

    Decay acts on the parameters directly, not through the gradients.  ``mask``
    freezes coordinates (no update, no decay) where it is zero.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape:
        raise ValueError(f"gradient shape {grads.shape} does not match parameters {params.shape}")
    if not np.all(np.isfinite(grads)):
        raise ArithmeticError("non-finite gradient")
    step = state.step + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grads
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grads * grads
    m_hat = m / (1.0 - ADAM_BETA1 ** step)
    v_hat = v / (1.0 - ADAM_BETA2 ** step)
    update = m_hat / (np.sqrt(v_hat) + ADAM_EPS) + config.weight_decay * params
    if mask is not None:
        update = update * mask
    return params - config.lr * update, AdamState(m, v, step)


def _freeze_mask(params: ParamVector, model_config: ModelConfig):
    names = model_mod.frozen_names(model_config)
    if not names:
        return None
    mask = np.ones(len(params))
    for name in names:
        mask[params.slice_of(name)] = 0.0
    return mask


def train(dataset: PairedDataset, params: ParamVector, model_config: ModelConfig,
          config: TrainConfig):
    """Optimize the alignment objective; returns (final params, loss per epoch).

    Deterministic for a fixed (dataset, params, config): the shuffle stream is
    seeded by ``config.seed`` alone.
    """
    if len(dataset) == 0:
        raise ValueError("training set is empty")
    params = params.copy()
    rng = np.random.default_rng(config.seed)
    state = AdamState.zeros(len(params))
    mask = _freeze_mask(params, model_config)
    x_s, x_p, x_b = dataset.semantic, dataset.perceptual, dataset.brain
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(dataset) - config.batch_size + 1, config.batch_size):
            rows = order[start:start + config.batch_size]

            def objective(pv):
                return model_mod.total_loss(x_s[rows], x_p[rows], x_b[rows], pv,
                                            model_config, ablation=config.ablation)

            loss, grad = value_and_grad(objective, params)
            new_flat, state = optimizer_step(params.flat, grad.flat, state, config, mask=mask)
            params = ParamVector(new_flat, params.layout)
            losses.append(loss)
        history.append(float(np.mean(losses)) if losses else float("nan"))
    return params, history


@dataclass
class RetrievalReport:
    top1: float
    top5: float
    n_ways: int
    per_item_ranks: list = field(default_factory=list)

    def hit_rate(self, k):
        ranks = np.asarray(self.per_item_ranks)
        return float(np.mean(ranks <= k))


def _embed_for_retrieval(brain, semantic, perceptual, params, model_config, ablation):
    hp = HyfiParams.from_vector(params)
    if ablation == "euclidean_space":
        u_s, _ = model_mod.visual_tangents(semantic, perceptual, hp)
        u_b = model_mod.brain_tangent(brain, hp)
        vs, bs = value_of(u_s), value_of(u_b)
        vs = vs / np.maximum(np.linalg.norm(vs, axis=1, keepdims=True), 1e-12)
        bs = bs / np.maximum(np.linalg.norm(bs, axis=1, keepdims=True), 1e-12)
        return -(bs @ vs.T)  # negated similarity ranks like a distance
    sp_v, tm_v, _ = model_mod.encode_visual_batch(semantic, perceptual, hp, model_config,
                                                  x_b=brain, ablation=ablation)
    sp_b, tm_b = model_mod.encode_brain_batch(brain, hp)
    return value_of(hygeo.distance_matrix(sp_b, tm_b, sp_v, tm_v, hp.kappa()))


def evaluate_retrieval(brain, semantic, perceptual, params: ParamVector,
                       model_config: ModelConfig, k_list=(1, 5), ablation="full"):
    """Zero-shot n-way retrieval: rank all visual candidates per brain query.

    Items are aligned by row (one item per held-out concept); a top-k hit
    means the paired candidate is among the k nearest.
    """
    brain = np.asarray(brain, dtype=np.float64)
    semantic = np.asarray(semantic, dtype=np.float64)
    perceptual = np.asarray(perceptual, dtype=np.float64)
    n = brain.shape[0]
    if not (semantic.shape[0] == n and perceptual.shape[0] == n):
        raise ValueError("test batches must be aligned")
    for k in k_list:
        if k >= n:
            raise ValueError(f"k={k} must be below the number of candidates n_ways={n}")
    dist = _embed_for_retrieval(brain, semantic, perceptual, params, model_config, ablation)
    ranks = []
    for i in range(n):
        ranks.append(1 + int(np.sum(dist[i] < dist[i, i])))
    ranks = np.array(ranks)
    return RetrievalReport(
        top1=float(np.mean(ranks <= 1)),
        top5=float(np.mean(ranks <= 5)),
        n_ways=n,
        per_item_ranks=[int(r) for r in ranks],
    )


# ---------------------------------------------------------------------------
# distribution summaries

@dataclass
class HistogramSummary:
    mean: float
    std: float
    count: int
    counts: list
    bin_edges: list
    min_index: int = -1
    max_index: int = -1


def _summarize(values, bins, value_range=None):
    values = np.asarray(values, dtype=np.float64)
    counts, edges = np.histogram(values, bins=bins, range=value_range)
    return HistogramSummary(
        mean=float(values.mean()),
        std=float(values.std()),
        count=int(values.size),
        counts=[int(c) for c in counts],
        bin_edges=[float(e) for e in edges],
        min_index=int(values.argmin()),
        max_index=int(values.argmax()),
    )


def root_distance_stats(spatial_rows, kappa, bins=30):
    """Distribution of geodesic distances from the time origin."""
    spatial_rows = np.asarray(spatial_rows, dtype=np.float64)
    if spatial_rows.size == 0:
        raise ValueError("no embeddings to summarize")
    d = hygeo.origin_distance(spatial_rows, kappa)
    return _summarize(d, bins)


def embedding_populations(dataset: PairedDataset, params: ParamVector,
                          model_config: ModelConfig):
    """Spatial rows of the interpolated/semantic/perceptual/brain embeddings."""
    hp = HyfiParams.from_vector(params)
    sp, _, aux = model_mod.encode_visual_batch(dataset.semantic, dataset.perceptual, hp,
                                               model_config, x_b=dataset.brain)
    sp_b, _ = model_mod.encode_brain_batch(dataset.brain, hp)
    kappa = float(value_of(aux["kappa"]))
    return {
        "interpolated": value_of(sp),
        "semantic": value_of(aux["sp_s"]),
        "perceptual": value_of(aux["sp_p"]),
        "brain": value_of(sp_b),
    }, kappa


def root_distance_report(dataset, params, model_config, bins=30):
    """Per-population origin-distance summaries for a dataset."""
    pops, kappa = embedding_populations(dataset, params, model_config)
    return {name: root_distance_stats(rows, kappa, bins=bins) for name, rows in pops.items()}


def coefficient_stats(dataset: PairedDataset, params: ParamVector,
                      model_config: ModelConfig, bins=30):
    """Distribution of the learned interpolation coefficient over items."""
    if len(dataset) == 0:
        raise ValueError("no items to summarize")
    hp = HyfiParams.from_vector(params)
    t = value_of(model_mod.coefficient_batch(dataset.semantic, dataset.perceptual, hp,
                                             model_config, x_b=dataset.brain))
    return _summarize(t, bins, value_range=(0.0, 1.0))
