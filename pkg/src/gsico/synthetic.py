"""Deterministic synthetic models with blob structure in the clustering space.

Each blob is a small 2-D manifold (plus noise) embedded in the feature space
used by clustering: luminance SH AC coefficients for 3DGS, anchor position
concatenated with offsets for Scaffold-GS. Blob centres are rejection-sampled
so that the closest pair of centres is at least ``SEPARATION`` times the
designed blob radius apart.
"""
from __future__ import annotations

import numpy as np

from .color import YUV_TO_RGB
from .model_io import (
    ANCHOR,
    ANCHOR_FEATURES,
    OFFSETS,
    OPACITY,
    POSITION,
    ROTATION,
    SCALE,
    SCALE_FACTOR,
    SH_AC,
    SH_DC,
    GaussianModel,
    ModelKind,
)

SEPARATION = 15.0
SCAFFOLD_MLP_FLOATS = 7086


def _blob_labels(rng, n, n_blobs):
    return rng.permutation(np.arange(n) % n_blobs)


def _centres(rng, n_blobs, dim, scale, min_dist):
    for _ in range(1000):
        c = rng.normal(0.0, scale, size=(n_blobs, dim))
        if n_blobs == 1:
            return c
        d = np.sqrt(((c[:, None, :] - c[None, :, :]) ** 2).sum(-1))
        d[np.diag_indices(n_blobs)] = np.inf
        if d.min() >= min_dist:
            return c
        scale *= 1.1
    raise RuntimeError("could not place blob centres")  # pragma: no cover


def _manifold(rng, labels, n_blobs, dim, amplitude, noise):
    """Per-element offsets that vary smoothly along a 2-D latent per blob."""
    basis = rng.normal(0.0, amplitude, size=(n_blobs, 2, dim))
    z = rng.uniform(-1.0, 1.0, size=(labels.size, 2))
    smooth = np.einsum("nk,nkd->nd", z, basis[labels])
    return smooth + rng.normal(0.0, noise, size=(labels.size, dim))


def _radius(amplitude, noise, dim):
    # RMS distance to the blob mean for the manifold model above
    return np.sqrt(dim * (2.0 * amplitude**2 / 3.0 + noise**2))


def generate_synthetic_with_labels(kind, n_elements: int, n_blobs: int, seed: int):
    """Like :func:`generate_synthetic` but also returns blob labels."""
    kind = ModelKind(kind)
    if n_elements < 1 or n_blobs < 1:
        raise ValueError("n_elements and n_blobs must be >= 1")
    rng = np.random.default_rng(seed)
    labels = _blob_labels(rng, n_elements, n_blobs)
    n = n_elements

    if kind == ModelKind.THREEDGS:
        params = np.zeros((n, 59))
        amp, noise = 0.02, 0.005
        centres = _centres(rng, n_blobs, 15, 0.5, SEPARATION * _radius(amp, noise, 15))
        y_ac = centres[labels] + _manifold(rng, labels, n_blobs, 15, amp, noise)
        tint = rng.normal(0.0, 0.02, size=(n_blobs, 2, 15))
        uv_ac = tint[labels] + rng.normal(0.0, 0.004, size=(n, 2, 15))
        yuv_ac = np.concatenate([y_ac[:, None, :], uv_ac], axis=1)  # (n, 3, 15)

        dc_centres = rng.normal([0.0, 0.0, 0.0], [0.8, 0.1, 0.1], size=(n_blobs, 3))
        yuv_dc = dc_centres[labels] + rng.normal(0.0, 0.05, size=(n, 3))

        rgb_ac = np.einsum("ij,njk->nik", YUV_TO_RGB, yuv_ac)
        rgb_dc = yuv_dc @ YUV_TO_RGB.T

        spatial = rng.uniform(-10.0, 10.0, size=(n_blobs, 3))
        params[:, POSITION] = spatial[labels] + rng.normal(0.0, 1.0, size=(n, 3))
        params[:, SH_DC] = rgb_dc
        params[:, SH_AC] = rgb_ac.reshape(n, 45)
        log_scale = rng.normal(-4.0, 0.5, size=(n_blobs, 3))
        params[:, SCALE] = log_scale[labels] + rng.normal(0.0, 0.3, size=(n, 3))
        q = rng.normal(size=(n, 4))
        params[:, ROTATION] = q / np.linalg.norm(q, axis=1, keepdims=True)
        params[:, OPACITY] = rng.normal(0.0, 2.0, size=n)
        return GaussianModel(kind, params, color_space="rgb"), labels

    params = np.zeros((n, 66))
    amp, noise = 0.05, 0.01
    centres = _centres(rng, n_blobs, 33, 2.0, SEPARATION * _radius(amp, noise, 33))
    params[:, ANCHOR] = centres[labels, :3] * 5.0 + _manifold(rng, labels, n_blobs, 3, amp, noise)
    params[:, OFFSETS] = centres[labels, 3:] + _manifold(rng, labels, n_blobs, 30, amp, noise)
    feats = rng.normal(0.0, 0.5, size=(n_blobs, 32))
    params[:, ANCHOR_FEATURES] = feats[labels] + _manifold(rng, labels, n_blobs, 32, 0.05, 0.02)
    params[:, SCALE_FACTOR] = rng.normal(-2.0, 0.3, size=n)
    blob = rng.normal(0.0, 0.2, size=SCAFFOLD_MLP_FLOATS).astype("<f4").tobytes()
    return GaussianModel(kind, params, mlp_blob=blob), labels


def generate_synthetic(kind, n_elements: int, n_blobs: int, seed: int) -> GaussianModel:
    """Deterministic model with ``n_blobs`` well-separated feature-space groups."""
    return generate_synthetic_with_labels(kind, n_elements, n_blobs, seed)[0]
