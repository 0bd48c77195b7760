"""Linear RGB <-> YUV transform of 3DGS spherical-harmonic coefficients.

Full-range BT.601 without offset or clipping: SH coefficients are unbounded
signed reals, so the transform is a plain 3x3 matrix applied per SH basis.
"""
from __future__ import annotations

import numpy as np

from .errors import WrongFlavor, WrongState
from .model_io import SH_AC, SH_DC, GaussianModel, ModelKind

RGB_TO_YUV = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ],
    dtype=np.float64,
)
YUV_TO_RGB = np.linalg.inv(RGB_TO_YUV)

N_SH_BASES = 16


def sh_channel_triples(params: np.ndarray) -> np.ndarray:
    """View SH columns of a (N, 59) matrix as (N, 16, 3) channel triples.

    Basis 0 is the DC term; bases 1..15 are the AC terms, stored channel-major
    in the file (15 R coefficients, then 15 G, then 15 B).
    """
    dc = params[:, SH_DC]
    ac = params[:, SH_AC].reshape(-1, 3, 15).transpose(0, 2, 1)
    return np.concatenate([dc[:, None, :], ac], axis=1)


def _from_triples(params: np.ndarray, triples: np.ndarray) -> np.ndarray:
    out = np.array(params, copy=True)
    out[:, SH_DC] = triples[:, 0, :]
    out[:, SH_AC] = triples[:, 1:, :].transpose(0, 2, 1).reshape(-1, 45)
    return out


def apply_color_matrix(triples: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Apply ``matrix`` to the last axis (size 3) of ``triples`` in float64."""
    return np.asarray(triples, dtype=np.float64) @ matrix.T


def _transform(model: GaussianModel, matrix, src: str, dst: str) -> GaussianModel:
    if model.kind != ModelKind.THREEDGS:
        raise WrongFlavor("color transform only applies to 3DGS models")
    if model.color_space != src:
        raise WrongState(f"model SH coefficients are {model.color_space}, expected {src}")
    params = model.params.astype(np.float64)
    triples = apply_color_matrix(sh_channel_triples(params), matrix)
    out = _from_triples(params, triples)
    # non-SH columns are copied bit-exactly from the float32 source
    result = model.params.copy()
    result[:, SH_DC] = out[:, SH_DC]
    result[:, SH_AC] = out[:, SH_AC]
    return model.replace(params=result, color_space=dst)


def sh_rgb_to_yuv(model: GaussianModel) -> GaussianModel:
    return _transform(model, RGB_TO_YUV, "rgb", "yuv")


def sh_yuv_to_rgb(model: GaussianModel) -> GaussianModel:
    """Inverse transform; discarded (zero) chroma yields grey-consistent RGB."""
    return _transform(model, YUV_TO_RGB, "yuv", "rgb")
