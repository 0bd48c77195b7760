"""Map geometry and importance-based pruning.

Maps are tiled by 16x16 blocks, one cluster of 256 elements per block, so the
element count is trimmed to a multiple of 256 whose block count has a
non-trivial factorisation, then split into the most square block grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MissingMlp, TooFewElements
from .model_io import OFFSETS, OPACITY, GaussianModel, ModelKind

BLOCK = 16
BLOCK_ELEMS = BLOCK * BLOCK

# Scaffold-GS reference MLPs (feature dim 32, 10 offsets, no distance or
# appearance inputs): opacity 35->32->10, covariance 35->32->70,
# colour 35->32->30; 7086 float32 values in that order.
SCAFFOLD_FEAT_DIM = 32
SCAFFOLD_N_OFFSETS = 10
_OPACITY_MLP_SHAPES = ((32, 35), (32,), (10, 32), (10,))
SCAFFOLD_MLP_FLOATS = 1482 + 3462 + 2142
CANONICAL_VIEW_DIR = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class MapGeometry:
    w_map: int
    h_map: int
    n_blocks_w: int
    n_blocks_h: int
    n_kept: int
    n_pruned: int

    @property
    def n_blocks(self) -> int:
        return self.n_blocks_w * self.n_blocks_h

    def check(self) -> None:
        assert self.w_map % BLOCK == 0 and self.h_map % BLOCK == 0
        assert self.w_map * self.h_map == self.n_kept
        assert self.n_blocks_w * self.n_blocks_h * BLOCK_ELEMS == self.n_kept
        assert self.n_blocks_w >= self.n_blocks_h


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    for f in range(3, math.isqrt(n) + 1, 2):
        if n % f == 0:
            return False
    return True


def most_square_factors(n: int) -> tuple[int, int]:
    """Factor pair ``(w, h)`` of ``n`` with ``w >= h`` and minimal ``w - h``."""
    h = math.isqrt(n)
    while n % h:
        h -= 1
    return n // h, h


def compute_geometry(n_elements: int) -> MapGeometry:
    if n_elements < BLOCK_ELEMS:
        raise TooFewElements(f"need at least {BLOCK_ELEMS} elements, got {n_elements}")
    blocks = n_elements // BLOCK_ELEMS
    while blocks > 1 and is_prime(blocks):
        blocks -= 1
    bw, bh = most_square_factors(blocks)
    n_kept = blocks * BLOCK_ELEMS
    return MapGeometry(
        w_map=bw * BLOCK,
        h_map=bh * BLOCK,
        n_blocks_w=bw,
        n_blocks_h=bh,
        n_kept=n_kept,
        n_pruned=n_elements - n_kept,
    )


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def decode_opacity_mlp(blob: bytes):
    """Opacity MLP weights ``(W1, b1, W2, b2)`` from a Scaffold MLP blob."""
    if blob is None or len(blob) != SCAFFOLD_MLP_FLOATS * 4:
        raise MissingMlp(
            "MLP blob does not have the reference Scaffold-GS layout "
            f"({SCAFFOLD_MLP_FLOATS} float32 values); use the proxy score"
        )
    flat = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    if not np.isfinite(flat).all():
        raise MissingMlp("MLP blob contains non-finite weights")
    out, pos = [], 0
    for shape in _OPACITY_MLP_SHAPES:
        size = int(np.prod(shape))
        out.append(flat[pos : pos + size].reshape(shape))
        pos += size
    return tuple(out)


def scaffold_mlp_opacity(model: GaussianModel, view_dir=CANONICAL_VIEW_DIR) -> np.ndarray:
    """Mean opacity of each voxel's neural Gaussians seen from ``view_dir``.

    Negative MLP outputs are Gaussians Scaffold-GS masks out; they count as
    zero opacity.
    """
    w1, b1, w2, b2 = decode_opacity_mlp(model.mlp_blob)
    feats = model.anchor_features.astype(np.float64)
    x = np.concatenate([feats, np.broadcast_to(view_dir, (len(model), 3))], axis=1)
    hidden = np.maximum(x @ w1.T + b1, 0.0)
    opacity = np.tanh(hidden @ w2.T + b2)
    return np.clip(opacity, 0.0, None).mean(axis=1)


def scaffold_proxy_score(model: GaussianModel) -> np.ndarray:
    """Mean absolute offset-feature magnitude per voxel."""
    return np.abs(model.params[:, OFFSETS].astype(np.float64)).mean(axis=1)


def importance_scores(model: GaussianModel, scaffold_score: str = "mlp") -> np.ndarray:
    """Per-element importance used for pruning.

    ``scaffold_score`` is ``"mlp"`` (evaluate the stored opacity MLP),
    ``"proxy"`` or ``"auto"`` (MLP when decodable, otherwise proxy).
    """
    if model.kind == ModelKind.THREEDGS:
        return sigmoid(model.params[:, OPACITY])
    if scaffold_score == "proxy":
        return scaffold_proxy_score(model)
    if scaffold_score == "mlp":
        return scaffold_mlp_opacity(model)
    if scaffold_score == "auto":
        try:
            return scaffold_mlp_opacity(model)
        except MissingMlp:
            return scaffold_proxy_score(model)
    raise ValueError(f"unknown scaffold score mode {scaffold_score!r}")


def pruned_indices(scores: np.ndarray, n_pruned: int) -> np.ndarray:
    """Indices of the ``n_pruned`` lowest scores; among equal scores the
    higher index goes first."""
    idx = np.arange(scores.size)
    order = np.lexsort((-idx, scores))
    return np.sort(order[:n_pruned])


def prune(model: GaussianModel, geometry: MapGeometry, scores=None, scaffold_score="mlp") -> GaussianModel:
    if geometry.n_pruned + geometry.n_kept != len(model):
        raise ValueError("geometry was not computed for this model")
    if geometry.n_pruned == 0:
        return model
    if scores is None:
        scores = importance_scores(model, scaffold_score)
    keep = np.ones(len(model), dtype=bool)
    keep[pruned_indices(np.asarray(scores), geometry.n_pruned)] = False
    return model.subset(np.flatnonzero(keep))
