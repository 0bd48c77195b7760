"""Fixed-size clustering: K-means rounds that peel off 256-element clusters.

Each round runs K-means (K-means++ seeding, Euclidean distance) with
``K = remaining // 256``, randomly splits every intermediate cluster of at
least 256 members into 256-element clusters, and returns leftovers to the
pool for the next round.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import WrongState
from .layout import BLOCK_ELEMS
from .model_io import ANCHOR, OFFSETS, SH_AC, GaussianModel, ModelKind

MAX_LLOYD_ITERS = 50
LLOYD_TOL = 1e-6


def extract_features(model: GaussianModel) -> np.ndarray:
    """Clustering/NNS feature vectors, one row per element (float64).

    3DGS: the 15 luminance SH AC coefficients (model must be in YUV).
    Scaffold-GS: anchor position followed by the 30 offset features.
    """
    if model.kind == ModelKind.THREEDGS:
        if model.color_space != "yuv":
            raise WrongState("3DGS features need SH coefficients converted to YUV first")
        return model.params[:, SH_AC.start : SH_AC.start + 15].astype(np.float64)
    return np.concatenate(
        [model.params[:, ANCHOR], model.params[:, OFFSETS]], axis=1
    ).astype(np.float64)


@dataclass(frozen=True)
class ClusterSet:
    """Clusters in order of creation; each holds sorted element indices."""

    clusters: tuple

    def __len__(self):
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)

    def __getitem__(self, i):
        return self.clusters[i]

    def is_partition(self, n: int, size: int = BLOCK_ELEMS) -> bool:
        if any(len(c) != size for c in self.clusters):
            return False
        if not self.clusters:
            return n == 0
        allidx = np.concatenate(self.clusters)
        return allidx.size == n and np.array_equal(np.sort(allidx), np.arange(n))


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    state = _kernels.SeedingState(X, k)
    state.add(X[rng.integers(n)])
    for _ in range(1, k):
        cum = np.cumsum(state.mind2)
        if cum[-1] > 0:
            idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        state.add(X[idx])
    return state.centres


def _centroids(X, labels, k):
    sums, counts = _kernels.centroid_sums(X, labels, k)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / counts[:, None]
    return means, counts


def kmeans(X: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = MAX_LLOYD_ITERS, tol: float = LLOYD_TOL):
    """Lloyd iterations from K-means++ seeds.

    Stops when no centroid moves by more than ``tol`` times the bounding-box
    diagonal of ``X``, or after ``max_iter`` iterations. An empty cluster is
    re-seeded at the point farthest from its assigned centroid.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    centers = kmeans_plusplus(X, k, rng)
    diameter = float(np.linalg.norm(X.max(axis=0) - X.min(axis=0)))
    labels = None
    for _ in range(max_iter):
        labels, d2 = _kernels.nearest_centroid(X, centers, labels)
        new, counts = _centroids(X, labels, k)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            far = np.argsort(-d2, kind="stable")[: empty.size]
            new[empty] = X[far]
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift <= tol * diameter:
            break
    labels, _ = _kernels.nearest_centroid(X, centers, labels)
    return labels, centers


def _merge_closest(groups: list, X: np.ndarray, size: int) -> list:
    """Merge the two groups with the closest centroids until one group has at
    least ``size`` members. Guards the extraction round against making no
    progress."""
    groups = [g for g in groups if len(g)]
    while max(len(g) for g in groups) < size:
        cents = np.stack([X[g].mean(axis=0) for g in groups])
        d = ((cents[:, None, :] - cents[None, :, :]) ** 2).sum(-1)
        d[np.diag_indices(len(groups))] = np.inf
        a, b = np.unravel_index(int(np.argmin(d)), d.shape)
        a, b = min(a, b), max(a, b)
        merged = np.sort(np.concatenate([groups[a], groups[b]]))
        groups = [g for i, g in enumerate(groups) if i not in (a, b)] + [merged]
    return groups


def fixed_size_kmeans(features: np.ndarray, seed: int, size: int = BLOCK_ELEMS) -> ClusterSet:
    """Partition the rows of ``features`` into clusters of exactly ``size``."""
    X = np.ascontiguousarray(features, dtype=np.float64)
    n = X.shape[0]
    if n == 0 or n % size:
        raise ValueError(f"feature count {n} is not a positive multiple of {size}")
    rng = np.random.default_rng(seed)
    clusters: list[np.ndarray] = []
    remaining = np.arange(n)
    while remaining.size:
        if remaining.size == size:
            clusters.append(remaining.copy())
            break
        k = remaining.size // size
        labels, _ = kmeans(X[remaining], k, rng)
        order = np.argsort(labels, kind="stable")
        bounds = np.cumsum(np.bincount(labels, minlength=k))[:-1]
        groups = np.split(remaining[order], bounds)
        if all(len(g) < size for g in groups):
            groups = _merge_closest(groups, X, size)
        taken = np.zeros(n, dtype=bool)
        for g in groups:
            q = len(g) // size
            if q == 0:
                continue
            perm = rng.permutation(g)
            for t in range(q):
                clusters.append(np.sort(perm[t * size : (t + 1) * size]))
            taken[perm[: q * size]] = True
        remaining = remaining[~taken[remaining]]
    return ClusterSet(tuple(clusters))
