"""Uniform mid-tread quantization of parameter maps and operating points.

step = (max - min) / 2**b and index = round((x - min) / step), clamped to
2**b - 1 so indices fit in b bits. Reconstruction is index * step + min.
A constant map has step 0 and reconstructs exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadIndex, NonFiniteInput
from .model_io import ModelKind

MAX_BIT_DEPTH = 16
LOSSLESS = 100


@dataclass(frozen=True)
class QuantizedMap:
    indices: np.ndarray
    bit_depth: int
    x_min: float
    x_max: float
    param_id: int = 0

    @property
    def q_step(self) -> float:
        if self.bit_depth == 0:
            return 0.0
        return (self.x_max - self.x_min) / float(1 << self.bit_depth)

    @property
    def max_index(self) -> int:
        return (1 << self.bit_depth) - 1


def _f32_floor(v: float) -> float:
    f = np.float32(v)
    if float(f) > v:
        f = np.nextafter(f, np.float32(-np.inf))
    return float(f)


def _f32_ceil(v: float) -> float:
    f = np.float32(v)
    if float(f) < v:
        f = np.nextafter(f, np.float32(np.inf))
    return float(f)


def quantize_values(values: np.ndarray, bit_depth: int, x_min: float, x_max: float) -> np.ndarray:
    """Indices for ``values`` under a given range (no range estimation)."""
    x = np.asarray(values, dtype=np.float64)
    if bit_depth == 0 or x_max == x_min:
        return np.zeros(x.shape, dtype=np.uint16)
    step = (x_max - x_min) / float(1 << bit_depth)
    idx = np.floor((x - x_min) / step + 0.5)
    return np.clip(idx, 0, (1 << bit_depth) - 1).astype(np.uint16)


def quantize_map(values: np.ndarray, bit_depth: int, param_id: int = 0) -> QuantizedMap:
    """Quantize one map with its own observed range.

    ``bit_depth`` 0 marks a discarded map: all-zero indices, and it
    reconstructs as zeros. The range is widened outward to float32 so that it
    survives the container's 32-bit metadata fields unchanged.
    """
    if not 0 <= bit_depth <= MAX_BIT_DEPTH:
        raise BadIndex(f"bit depth {bit_depth} outside 0..{MAX_BIT_DEPTH}")
    x = np.asarray(values, dtype=np.float64)
    if not np.isfinite(x).all():
        raise NonFiniteInput("map contains NaN or infinite values")
    lo = _f32_floor(float(x.min()))
    hi = _f32_ceil(float(x.max()))
    return QuantizedMap(quantize_values(x, bit_depth, lo, hi), int(bit_depth), lo, hi, param_id)


def dequantize_map(q: QuantizedMap) -> np.ndarray:
    idx = np.asarray(q.indices)
    if q.bit_depth == 0:
        return np.zeros(idx.shape)
    idx = np.minimum(idx.astype(np.float64), q.max_index)
    return idx * q.q_step + q.x_min


# operating points -----------------------------------------------------------

THREEDGS_GROUPS = (
    "position", "scale", "rotation", "sh_dc", "sh_ac_y1", "sh_ac_y23", "sh_ac_uv", "opacity",
)
SCAFFOLD_GROUPS = ("position", "scale_factor", "offsets", "anchor_features")
GROUPS = {ModelKind.THREEDGS: THREEDGS_GROUPS, ModelKind.SCAFFOLD: SCAFFOLD_GROUPS}

_THREEDGS_DEPTHS = dict(position=14, scale=8, rotation=8, sh_dc=8, sh_ac_y1=6,
                        sh_ac_y23=5, sh_ac_uv=0, opacity=6)
_THREEDGS_SH_QUALITY = {1: 96, 2: 90, 3: 70, 4: 20, 5: 0}
_SH_GROUPS = ("sh_dc", "sh_ac_y1", "sh_ac_y23", "sh_ac_uv")

_SCAFFOLD_DEPTHS = {
    1: (16, 8, 8, 8),
    2: (16, 8, 8, 6),
    3: (16, 8, 6, 6),
    4: (16, 8, 6, 4),
    5: (16, 8, 4, 4),
}


def param_group(kind, param_id: int) -> str:
    """Operating-point group of a parameter (canonical column index)."""
    kind = ModelKind(kind)
    if kind == ModelKind.THREEDGS:
        if param_id < 3:
            return "position"
        if param_id < 6:
            return "sh_dc"
        if param_id < 51:
            channel, basis = divmod(param_id - 6, 15)
            if channel:
                return "sh_ac_uv"
            return "sh_ac_y1" if basis < 3 else "sh_ac_y23"
        if param_id < 54:
            return "scale"
        if param_id < 58:
            return "rotation"
        if param_id == 58:
            return "opacity"
    else:
        if param_id < 3:
            return "position"
        if param_id < 33:
            return "offsets"
        if param_id < 65:
            return "anchor_features"
        if param_id == 65:
            return "scale_factor"
    raise BadIndex(f"parameter id {param_id} out of range for {kind.name}")


@dataclass(frozen=True)
class OperatingPoint:
    """Bit depth and codec quality per parameter group.

    Quality 100 means lossless; ``rd_index`` 0 marks a custom point.
    """

    kind: ModelKind
    rd_index: int
    bit_depths: dict = field(default_factory=dict)
    qualities: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        groups = GROUPS[self.kind]
        if set(self.bit_depths) != set(groups) or set(self.qualities) != set(groups):
            raise BadIndex(f"operating point must define exactly the groups {groups}")
        for g, b in self.bit_depths.items():
            if not 0 <= int(b) <= MAX_BIT_DEPTH:
                raise BadIndex(f"bit depth {b} for {g} outside 0..{MAX_BIT_DEPTH}")
        for g, q in self.qualities.items():
            if not 0 <= int(q) <= LOSSLESS:
                raise BadIndex(f"quality {q} for {g} outside 0..{LOSSLESS}")

    def depth(self, param_id: int) -> int:
        return int(self.bit_depths[param_group(self.kind, param_id)])

    def quality(self, param_id: int) -> int:
        return int(self.qualities[param_group(self.kind, param_id)])

    def with_depths(self, **depths) -> "OperatingPoint":
        unknown = set(depths) - set(GROUPS[self.kind])
        if unknown:
            raise BadIndex(f"unknown parameter groups {sorted(unknown)}")
        return OperatingPoint(self.kind, 0, {**self.bit_depths, **depths}, dict(self.qualities))

    def all_lossless(self) -> "OperatingPoint":
        return OperatingPoint(self.kind, self.rd_index, dict(self.bit_depths),
                              {g: LOSSLESS for g in self.qualities})


def preset(kind, rd_index: int) -> OperatingPoint:
    kind = ModelKind(kind)
    if rd_index not in range(1, 6):
        raise BadIndex(f"rd_index must be 1..5, got {rd_index}")
    if kind == ModelKind.THREEDGS:
        q = _THREEDGS_SH_QUALITY[rd_index]
        qualities = {g: (q if g in _SH_GROUPS else LOSSLESS) for g in THREEDGS_GROUPS}
        return OperatingPoint(kind, rd_index, dict(_THREEDGS_DEPTHS), qualities)
    depths = dict(zip(SCAFFOLD_GROUPS, _SCAFFOLD_DEPTHS[rd_index]))
    return OperatingPoint(kind, rd_index, depths, {g: LOSSLESS for g in SCAFFOLD_GROUPS})
