"""Nearest-neighbour-based sorting (NNS) and parameter-map construction.

NNS places ``S = w * h`` feature vectors on a grid. The element closest to
the per-coordinate median goes in the top-left cell. The remaining cells are
visited in snake order, and each gets the unplaced element closest to the
mean of its already-filled neighbours (left, right, top-left, top,
top-right). Ties go to the lowest element index.

It runs twice: once on cluster centroids to choose which block holds which
cluster, and once inside every 16x16 block to place that cluster's members.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .clustering import ClusterSet
from .errors import SizeMismatch
from .layout import BLOCK, BLOCK_ELEMS, MapGeometry
from .model_io import GaussianModel, ModelKind, PARAM_NAMES


@dataclass(frozen=True)
class AssignmentMatrix:
    """``cells[row, col]`` holds an element index; ``level`` is ``"block"``
    (indices of clusters) or ``"pixel"`` (indices of model elements)."""

    cells: np.ndarray
    level: str = "pixel"

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    def is_permutation(self) -> bool:
        flat = np.sort(self.cells.ravel())
        return np.array_equal(flat, np.arange(flat.size))


def snake_order(w: int, h: int):
    """Cells ``(row, col)`` in snake-scan order."""
    for i in range(h):
        cols = range(w) if i % 2 == 0 else range(w - 1, -1, -1)
        for j in cols:
            yield i, j


def nns_sort(features: np.ndarray, w: int, h: int) -> AssignmentMatrix:
    F = np.asarray(features, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != w * h or w < 1 or h < 1:
        raise SizeMismatch(f"{F.shape[0]} elements cannot fill a {w}x{h} grid")
    median = np.median(F, axis=0)
    seed = int(np.argmin(_kernels.sq_dist_to_point(F, median)))
    return AssignmentMatrix(_kernels.nns_fill(F, seed, w, h))


def cluster_centroids(clusters: ClusterSet, features: np.ndarray) -> np.ndarray:
    F = np.asarray(features, dtype=np.float64)
    return np.stack([F[c].mean(axis=0) for c in clusters])


def assign_clusters_to_blocks(clusters: ClusterSet, features: np.ndarray,
                              geometry: MapGeometry) -> AssignmentMatrix:
    if len(clusters) != geometry.n_blocks:
        raise SizeMismatch(f"{len(clusters)} clusters for {geometry.n_blocks} blocks")
    centroids = cluster_centroids(clusters, features)
    m = nns_sort(centroids, geometry.n_blocks_w, geometry.n_blocks_h)
    return AssignmentMatrix(m.cells, level="block")


def fill_blocks(clusters: ClusterSet, features: np.ndarray, m_blocks: AssignmentMatrix,
                geometry: MapGeometry) -> AssignmentMatrix:
    F = np.asarray(features, dtype=np.float64)
    m_all = np.full((geometry.h_map, geometry.w_map), -1, dtype=np.int64)
    for bi, bj in snake_order(geometry.n_blocks_w, geometry.n_blocks_h):
        members = np.asarray(clusters[int(m_blocks.cells[bi, bj])])
        if members.size != BLOCK_ELEMS:
            raise SizeMismatch(f"cluster of {members.size} elements cannot fill a block")
        local = nns_sort(F[members], BLOCK, BLOCK).cells
        m_all[bi * BLOCK : (bi + 1) * BLOCK, bj * BLOCK : (bj + 1) * BLOCK] = members[local]
    return AssignmentMatrix(m_all, level="pixel")


@dataclass(frozen=True)
class ParameterMapSet:
    """``maps[k]`` is the ``h x w`` image of parameter ``k`` (canonical
    order). Pixel ``(y, x)`` of every map belongs to the same element."""

    kind: ModelKind
    maps: np.ndarray
    color_space: str | None = None

    @property
    def param_ids(self) -> tuple[str, ...]:
        return PARAM_NAMES[self.kind]

    @property
    def shape(self) -> tuple[int, int]:
        return self.maps.shape[1:]

    def __len__(self):
        return self.maps.shape[0]


def build_maps(model: GaussianModel, m_all: AssignmentMatrix) -> ParameterMapSet:
    cells = m_all.cells
    if cells.size != len(model):
        raise SizeMismatch(f"{cells.size} pixels for {len(model)} elements")
    maps = model.params[cells.ravel()].T.reshape(model.n_params, *cells.shape)
    return ParameterMapSet(model.kind, np.ascontiguousarray(maps), model.color_space)


def invert_maps(maps: ParameterMapSet, kind=None, *, mlp_blob: bytes | None = None) -> GaussianModel:
    """One element per pixel, in row-major pixel order."""
    kind = ModelKind(maps.kind if kind is None else kind)
    arr = np.asarray(maps.maps)
    if arr.ndim != 3 or arr.shape[0] != len(PARAM_NAMES[kind]):
        raise SizeMismatch(f"map stack of shape {arr.shape} does not fit a {kind.name} model")
    params = arr.reshape(arr.shape[0], -1).T
    cs = (maps.color_space or "yuv") if kind == ModelKind.THREEDGS else None
    return GaussianModel(kind, params, mlp_blob=mlp_blob, color_space=cs)
