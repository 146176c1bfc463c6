"""Synthetic paired data with planted semantic/perceptual structure.

Each concept gets one prototype vector (its semantic feature).  Every item of
the concept perturbs the prototype to make its perceptual feature, and the
brain signal is a fixed random projection of a convex mix of the two, plus
noise.  The projection dimension is strictly below the feature dimension, so
brain signals carry less information than the visual features they pair with
— the information imbalance the alignment model must cope with.

Also here: the two image-space blur augmentations used to tell semantic from
perceptual content apart (verified on synthetic images; the learning pipeline
itself consumes feature vectors directly), and the on-disk embedding format.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .ioutil import atomic_write_bytes, atomic_write_text

MAGIC = b"HYFI"
FORMAT_VERSION = 1


class EmbeddingFormatError(ValueError):
    """Raised for malformed embedding files; messages carry the byte offset."""


@dataclass
class SynthConfig:
    n_concepts: int = 200          # training concepts; test adds n_concepts // 4 more
    images_per_concept: int = 5
    d: int = 32
    d_b: int = 12
    semantic_scale: float = 1.0
    perceptual_scale: float = 2.0
    entangle_weight: float = 0.4   # brain mix: w * semantic + (1 - w) * perceptual
    brain_noise_std: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.n_concepts < 2:
            raise ValueError("need at least 2 concepts")
        if self.images_per_concept < 1:
            raise ValueError("need at least one item per concept")
        if not self.d_b < self.d:
            raise ValueError(f"brain dimension must be below feature dimension, got {self.d_b} >= {self.d}")
        if self.semantic_scale <= 0 or self.perceptual_scale <= 0:
            raise ValueError("scales must be positive")
        if not 0.0 <= self.entangle_weight <= 1.0:
            raise ValueError("entangle_weight must lie in [0, 1]")
        if self.brain_noise_std < 0:
            raise ValueError("brain_noise_std must be nonnegative")


@dataclass
class PairedDataset:
    semantic: np.ndarray    # (N, d_s)
    perceptual: np.ndarray  # (N, d_p)
    brain: np.ndarray       # (N, d_b)
    concept_ids: np.ndarray  # (N,) nonnegative ints

    def __len__(self):
        return self.semantic.shape[0]

    def dims(self):
        return (self.semantic.shape[1], self.perceptual.shape[1], self.brain.shape[1])


# log-std of the per-item perceptual salience spread; some items are iconic
# (tiny perturbation), some are dominated by low-level appearance
_SALIENCE_SPREAD = 0.75


def _emit_items(protos, concept_ids, proj, config, rng, items_per_concept):
    rows = np.repeat(np.arange(protos.shape[0]), items_per_concept)
    semantic = protos[rows]
    n_items = semantic.shape[0]
    # mean-one lognormal per-item scale keeps perceptual_scale the average magnitude
    salience = np.exp(_SALIENCE_SPREAD * rng.standard_normal(n_items)
                      - 0.5 * _SALIENCE_SPREAD ** 2)
    pert = rng.standard_normal(semantic.shape) * (config.perceptual_scale * salience)[:, None]
    # norm-preserving perturbation: appearance changes the direction of the
    # feature, not its magnitude, so salience is an angle between the views
    raw = semantic + pert
    norms = np.linalg.norm(semantic, axis=1) / np.maximum(np.linalg.norm(raw, axis=1), 1e-12)
    perceptual = raw * norms[:, None]
    mix = config.entangle_weight * semantic + (1.0 - config.entangle_weight) * perceptual
    brain = mix @ proj.T + config.brain_noise_std * rng.standard_normal((n_items, config.d_b))
    ids = np.asarray(concept_ids, dtype=np.int64)[rows]
    return PairedDataset(semantic, perceptual, brain, ids)


def generate(config: SynthConfig):
    """Deterministic (train, test) split with test concepts disjoint from train.

    Test holds one item for each of n_concepts // 4 extra concepts, mirroring
    a zero-shot n-way retrieval protocol at small scale.
    """
    rng = np.random.default_rng(config.seed)
    n_test = max(1, config.n_concepts // 4)
    n_total = config.n_concepts + n_test
    protos = config.semantic_scale * rng.standard_normal((n_total, config.d))
    proj = rng.standard_normal((config.d_b, config.d)) / np.sqrt(config.d)
    train = _emit_items(protos[:config.n_concepts], np.arange(config.n_concepts),
                        proj, config, rng, config.images_per_concept)
    test = _emit_items(protos[config.n_concepts:], np.arange(config.n_concepts, n_total),
                       proj, config, rng, 1)
    return train, test


# ---------------------------------------------------------------------------
# image augmentations

def _check_image(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image must be a 2-d grid, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image must be finite")
    return img


def _gaussian_taps(sigma, radius):
    if radius < 1 or radius % 2 == 0:
        raise ValueError(f"kernel radius must be a positive odd count, got {radius}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    half = radius // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    taps = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def _convolve_axis(img, taps, axis):
    half = len(taps) // 2
    n = img.shape[axis]
    out = np.zeros_like(img)
    for i, w in enumerate(taps):
        idx = np.clip(np.arange(n) + (i - half), 0, n - 1)  # edge replication
        out += w * np.take(img, idx, axis=axis)
    return out


def gaussian_blur(img, sigma, radius):
    """Blur with a sampled Gaussian kernel of odd width ``radius``.

    The sampled kernel is renormalized to unit sum, so constant images pass
    through unchanged.  Borders replicate the edge pixel.  The 2-d kernel
    separates exactly into two 1-d passes.
    """
    img = _check_image(img)
    taps = _gaussian_taps(sigma, radius)
    return _convolve_axis(_convolve_axis(img, taps, 0), taps, 1)


def fovea_blur(img, lam, sigma, radius, center):
    """Blend the image with its blur, sharper near ``center``.

    The blend weight is exp(-lam * d / L) with d the pixel's Euclidean
    distance to center and L the largest such distance in the grid, so the
    center pixel is preserved exactly and weight decays outward.
    """
    img = _check_image(img)
    ci, cj = center
    h, w = img.shape
    if not (0 <= ci < h and 0 <= cj < w):
        raise ValueError(f"center {center} outside {h}x{w} grid")
    if lam <= 0:
        raise ValueError("lam must be positive")
    blurred = gaussian_blur(img, sigma, radius)
    ii, jj = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    dist = np.hypot(ii - ci, jj - cj)
    span = dist.max()
    delta = np.exp(-lam * dist / span) if span > 0 else np.ones_like(dist)
    return delta * img + (1.0 - delta) * blurred


# ---------------------------------------------------------------------------
# on-disk embedding format: "HYFI" header + per-item id and three f64 vectors

def dataset_to_bytes(dataset: PairedDataset) -> bytes:
    n = len(dataset)
    d_s, d_p, d_b = dataset.dims()
    ids = np.asarray(dataset.concept_ids, dtype=np.int64)
    if n and (ids.min() < 0 or ids.max() > 0xFFFFFFFF):
        raise ValueError("concept ids must fit an unsigned 32-bit integer")
    parts = [MAGIC, struct.pack("<5I", FORMAT_VERSION, n, d_s, d_p, d_b)]
    for i in range(n):
        parts.append(struct.pack("<I", int(ids[i])))
        parts.append(np.asarray(dataset.semantic[i], dtype="<f8").tobytes())
        parts.append(np.asarray(dataset.perceptual[i], dtype="<f8").tobytes())
        parts.append(np.asarray(dataset.brain[i], dtype="<f8").tobytes())
    return b"".join(parts)


def dataset_from_bytes(blob: bytes) -> PairedDataset:
    offset = 0

    def read(n, what):
        nonlocal offset
        if offset + n > len(blob):
            raise EmbeddingFormatError(
                f"truncated file: needed {n} bytes for {what} at byte {offset}, "
                f"file ends at {len(blob)}")
        piece = blob[offset:offset + n]
        offset += n
        return piece

    magic = read(4, "magic")
    if magic != MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    version, n, d_s, d_p, d_b = struct.unpack("<5I", read(20, "header"))
    if version != FORMAT_VERSION:
        raise EmbeddingFormatError(f"unsupported format version {version} at byte 4")
    semantic = np.zeros((n, d_s))
    perceptual = np.zeros((n, d_p))
    brain = np.zeros((n, d_b))
    ids = np.zeros(n, dtype=np.int64)
    for i in range(n):
        ids[i] = struct.unpack("<I", read(4, f"concept id of item {i}"))[0]
        semantic[i] = np.frombuffer(read(8 * d_s, f"semantic vector of item {i}"), dtype="<f8")
        perceptual[i] = np.frombuffer(read(8 * d_p, f"perceptual vector of item {i}"), dtype="<f8")
        brain[i] = np.frombuffer(read(8 * d_b, f"brain vector of item {i}"), dtype="<f8")
    if offset != len(blob):
        raise EmbeddingFormatError(f"{len(blob) - offset} trailing bytes after byte {offset}")
    return PairedDataset(semantic, perceptual, brain, ids)


def write_embeddings(path, dataset: PairedDataset, config: SynthConfig | None = None):
    """Write the binary file; with a config, also a JSON manifest alongside."""
    atomic_write_bytes(path, dataset_to_bytes(dataset))
    if config is not None:
        atomic_write_text(str(path) + ".json", json.dumps(asdict(config), indent=2) + "\n")


def read_embeddings(path) -> PairedDataset:
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read())
