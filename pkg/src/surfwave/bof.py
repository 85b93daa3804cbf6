"""Bag-of-features aggregation of per-vertex signatures.

A vocabulary of signature prototypes is learned once with K-means over
the pooled training signatures. Each surface is then encoded by
soft-assigning every vertex signature to the vocabulary with a Gaussian
kernel and sum-pooling the resulting code columns into one histogram;
per-subject descriptors concatenate the four surface histograms
(left/right white and gray matter), optionally followed by the
gray-minus-white difference blocks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    DegenerateDataError,
    DimensionError,
    DomainError,
    FormatError,
    MismatchError,
    MissingSurfaceError,
)

KMEANS_MAX_ITER = 300
KMEANS_REL_TOL = 1e-6

BLOCK_LAYOUT = ("LW", "LG", "RW", "RG")
DIFFERENCE_BLOCKS = (("LG", "LW"), ("RG", "RW"))

DICT_MAGIC = b"SGWD1"


@dataclass
class Dictionary:
    """K-means vocabulary: ``atoms`` is p x k, one atom per column."""

    atoms: np.ndarray
    k: int
    training_meta: dict = field(default_factory=dict)

    @property
    def p(self):
        return self.atoms.shape[0]

    @property
    def sigma_auto(self):
        """Mean nearest-atom distance over the training set (self-scaling
        default bandwidth for soft assignment)."""
        return self.training_meta.get("mean_nearest_distance")


@dataclass
class SurfaceHistogram:
    values: np.ndarray
    surface_label: str = ""
    area_normalized: bool = False


@dataclass
class WaveletBrainMatrix:
    """Per-subject descriptor columns stacked side by side."""

    columns: np.ndarray  # (block length * len(layout), n_subjects)
    block_layout: tuple
    subject_ids: list

    @property
    def n_subjects(self):
        return self.columns.shape[1]


def _kmeans_pp_init(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining mass on existing centers; fall back to uniform
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def _lloyd(points, centers):
    """Deterministic Lloyd iterations with farthest-point reseeding of
    empty clusters. Returns (centers, n_iter, inertia)."""
    k = centers.shape[0]
    n_iter = 0
    for n_iter in range(1, KMEANS_MAX_ITER + 1):
        d2 = cdist(points, centers, "sqeuclidean")
        assign = d2.argmin(axis=1)
        own_d2 = d2[np.arange(points.shape[0]), assign]

        new_centers = np.empty_like(centers)
        counts = np.bincount(assign, minlength=k)
        taken = np.array([], dtype=np.int64)
        for r in range(k):
            if counts[r] > 0:
                new_centers[r] = points[assign == r].mean(axis=0)
            else:
                candidates = own_d2.copy()
                candidates[taken] = -np.inf
                far = int(candidates.argmax())
                new_centers[r] = points[far]
                taken = np.append(taken, far)

        movement = np.linalg.norm(new_centers - centers)
        scale = max(np.linalg.norm(centers), np.finfo(float).tiny)
        centers = new_centers
        if movement / scale < KMEANS_REL_TOL:
            break

    d2 = cdist(points, centers, "sqeuclidean")
    inertia = float(d2.min(axis=1).sum())
    return centers, n_iter, inertia


def build_dictionary(signatures, k, seed):
    """Learn a vocabulary from the pooled columns of the given signatures.

    K-means with k-means++ initialization, run to convergence (relative
    center movement below 1e-6) or 300 iterations; bit-identical output
    for a fixed seed.
    """
    mats = list(signatures)
    if not mats:
        raise DomainError("no signatures given")
    p = mats[0].p
    for s in mats:
        if s.p != p:
            raise MismatchError(f"signature dimension mismatch: {s.p} != {p}")
    points = np.concatenate([s.values.T for s in mats], axis=0)
    n = points.shape[0]
    if k < 1 or k > n:
        raise DomainError(f"vocabulary size {k} exceeds sample count {n}")
    if np.unique(points, axis=0).shape[0] < k:
        raise DegenerateDataError(
            f"fewer than {k} distinct signatures in the training set"
        )

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    centers, n_iter, inertia = _lloyd(points, centers)

    nearest = cdist(points, centers).min(axis=1)
    meta = {
        "seed": int(seed),
        "n_iter": int(n_iter),
        "inertia": inertia,
        "n_training_points": int(n),
        "mean_nearest_distance": float(nearest.mean()),
    }
    return Dictionary(atoms=centers.T.copy(), k=int(k), training_meta=meta)


def soft_assign(sgws, dictionary, sigma):
    """Gaussian soft-assignment codes: k x m, every column sums to 1.

    ``u_ri`` is the softmax over atoms of ``-||s_i - v_r||^2 / (2 sigma^2)``,
    computed with max subtraction so tiny bandwidths stay stable.
    """
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if sgws.p != dictionary.p:
        raise DimensionError(
            f"signature dimension {sgws.p} != dictionary dimension {dictionary.p}"
        )
    d2 = cdist(dictionary.atoms.T, sgws.values.T, "sqeuclidean")  # (k, m)
    logits = -d2 / (2.0 * sigma * sigma)
    logits -= logits.max(axis=0, keepdims=True)
    u = np.exp(logits)
    u /= u.sum(axis=0, keepdims=True)
    return u


def pool_histogram(codes, mesh_area, normalize=True, surface_label=""):
    """Sum-pool code columns into one histogram; optionally divide by the
    total surface area."""
    codes = np.asarray(codes, dtype=np.float64)
    if codes.ndim != 2:
        raise DimensionError(f"codes must be 2-D, got shape {codes.shape}")
    values = codes.sum(axis=1)
    if normalize:
        if mesh_area <= 0:
            raise DomainError(f"mesh_area must be positive, got {mesh_area}")
        values = values / mesh_area
    return SurfaceHistogram(
        values=values, surface_label=surface_label, area_normalized=bool(normalize)
    )


def assemble_waveletbrain(histograms, with_differences=False):
    """Concatenate one subject's surface histograms into a descriptor column.

    Blocks follow the fixed layout LW, LG, RW, RG regardless of mapping
    order; ``with_differences`` appends (LG - LW, RG - RW), growing the
    descriptor from 4k to 6k entries.
    """
    blocks = {}
    k = None
    normalized = None
    for tag in BLOCK_LAYOUT:
        h = histograms.get(tag)
        if h is None:
            raise MissingSurfaceError(f"surface {tag!r} missing from histogram map")
        if k is None:
            k, normalized = h.values.shape[0], h.area_normalized
        elif h.values.shape[0] != k:
            raise MismatchError(
                f"histogram size mismatch for {tag!r}: {h.values.shape[0]} != {k}"
            )
        elif h.area_normalized != normalized:
            raise MismatchError(f"normalization state mismatch for {tag!r}")
        blocks[tag] = h.values
    parts = [blocks[tag] for tag in BLOCK_LAYOUT]
    if with_differences:
        parts.extend(blocks[a] - blocks[b] for a, b in DIFFERENCE_BLOCKS)
    return np.concatenate(parts)


def block_layout(with_differences=False):
    layout = list(BLOCK_LAYOUT)
    if with_differences:
        layout.extend(f"{a}-{b}" for a, b in DIFFERENCE_BLOCKS)
    return tuple(layout)


# ---------------------------------------------------------------------------
# Dictionary store: magic "SGWD1", int32 p, int32 k, float64 sigma_auto,
# float64 inertia, int64 seed, int32 n_iter, atoms float64 row-major.


def write_dictionary(dictionary, path):
    meta = dictionary.training_meta
    with open(path, "wb") as f:
        f.write(DICT_MAGIC)
        f.write(
            struct.pack(
                "<iiddqi",
                dictionary.p,
                dictionary.k,
                float(meta.get("mean_nearest_distance", 0.0)),
                float(meta.get("inertia", 0.0)),
                int(meta.get("seed", 0)),
                int(meta.get("n_iter", 0)),
            )
        )
        f.write(dictionary.atoms.astype("<f8").tobytes(order="C"))


def read_dictionary(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:5] != DICT_MAGIC:
        raise FormatError(f"{path}: bad dictionary magic")
    try:
        p, k, mean_nn, inertia, seed, n_iter = struct.unpack_from("<iiddqi", blob, 5)
    except struct.error:
        raise FormatError(f"{path}: truncated header") from None
    header = 5 + struct.calcsize("<iiddqi")
    expected = header + 8 * p * k
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(blob)}")
    atoms = np.frombuffer(blob, dtype="<f8", count=p * k, offset=header).reshape(p, k)
    meta = {
        "seed": int(seed),
        "n_iter": int(n_iter),
        "inertia": float(inertia),
        "mean_nearest_distance": float(mean_nn),
    }
    return Dictionary(atoms=atoms.copy(), k=int(k), training_meta=meta)
