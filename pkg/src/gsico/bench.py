"""Ordering benchmark: compressed map sizes under different element orderings.

Every strategy reuses the encoder's pruning, map building and map coding;
only the pixel assignment differs. The NNS row is taken from ``encode`` itself.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bitstream import code_maps, encode_detailed
from .clustering import extract_features
from .imaging import export_map_png
from .metrics import mean_gradient
from .model_io import PARAM_NAMES, ModelKind
from .nns import AssignmentMatrix, build_maps
from .quantization import preset

STRATEGIES = ("random", "rowsorted", "morton", "nns")
MORTON_BITS = 10


@dataclass
class OrderingBenchResult:
    strategy: str
    seed: int | None
    per_map_bytes: list
    total_bytes: int
    mean_gradient: float
    maps: object = field(default=None, repr=False, compare=False)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("maps")
        return d


def feature_map_ids(kind) -> list[int]:
    """Maps holding the features NNS orders by."""
    if ModelKind(kind) == ModelKind.THREEDGS:
        return list(range(6, 21))
    return list(range(0, 33))


def feature_gradient(maps) -> float:
    """Mean gradient over the feature maps, each normalised by its own range."""
    vals = []
    for pid in feature_map_ids(maps.kind):
        m = maps.maps[pid].astype(np.float64)
        span = m.max() - m.min()
        vals.append(mean_gradient(m) / span if span > 0 else 0.0)
    return float(np.mean(vals))


def _row_major(order: np.ndarray, geometry) -> AssignmentMatrix:
    return AssignmentMatrix(np.asarray(order, dtype=np.int64).reshape(geometry.h_map, geometry.w_map))


def random_order(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).permutation(n)


def rowsorted_order(features: np.ndarray) -> np.ndarray:
    """Lexicographic sort on the feature vector (first column most significant)."""
    return np.lexsort(np.asarray(features).T[::-1])


def morton_codes(positions: np.ndarray, bits: int = MORTON_BITS) -> np.ndarray:
    p = np.asarray(positions, dtype=np.float64)
    lo, hi = p.min(axis=0), p.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    q = np.minimum(((p - lo) / span * (1 << bits)).astype(np.uint64), (1 << bits) - 1)
    codes = np.zeros(len(p), dtype=np.uint64)
    for bit in range(bits):
        for axis in range(3):
            codes |= ((q[:, axis] >> np.uint64(bit)) & np.uint64(1)) << np.uint64(3 * bit + axis)
    return codes


def morton_order(positions: np.ndarray) -> np.ndarray:
    return np.argsort(morton_codes(positions), kind="stable")


def _result(strategy, seed, maps, records):
    sizes = [len(r.payload) for r in records]
    return OrderingBenchResult(strategy, seed, sizes, int(sum(sizes)), feature_gradient(maps), maps)


def bench_orderings(model, point=None, backend="png", strategies=STRATEGIES, n_seeds: int = 20,
                    seed: int = 0, *, scaffold_score: str = "mlp") -> list[OrderingBenchResult]:
    """Run the map pipeline once per strategy (``random`` ``n_seeds`` times).

    ``per_map_bytes`` are compressed payload sizes; container framing is
    excluded so all strategies compare on the same footing.
    """
    point = preset(model.kind, 1) if point is None else point
    unknown = set(strategies) - set(STRATEGIES)
    if unknown:
        raise ValueError(f"unknown strategies {sorted(unknown)}; choose from {STRATEGIES}")
    trace = encode_detailed(model, point, backend, seed, scaffold_score=scaffold_score)
    pruned, geometry = trace.model, trace.geometry
    n = len(pruned)
    out = []
    for strategy in strategies:
        if strategy == "nns":
            out.append(_result("nns", seed, trace.maps, trace.records))
            continue
        if strategy == "random":
            orders = [(seed + i, random_order(n, seed + i)) for i in range(n_seeds)]
        elif strategy == "rowsorted":
            orders = [(None, rowsorted_order(extract_features(pruned)))]
        else:
            orders = [(None, morton_order(pruned.params[:, :3]))]
        for s, order in orders:
            maps = build_maps(pruned, _row_major(order, geometry))
            _, records = code_maps(maps, point, backend)
            out.append(_result(strategy, s, maps, records))
    return out


def summarize(results) -> dict:
    """Median total bytes and gradient per strategy."""
    by = {}
    for r in results:
        by.setdefault(r.strategy, []).append(r)
    return {
        s: {"runs": len(rs),
            "median_total_bytes": float(np.median([r.total_bytes for r in rs])),
            "median_mean_gradient": float(np.median([r.mean_gradient for r in rs]))}
        for s, rs in by.items()
    }


def write_csv(results, path, kind) -> None:
    names = PARAM_NAMES[ModelKind(kind)]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["strategy", "seed", "total_bytes", "mean_gradient", *names])
        for r in results:
            w.writerow([r.strategy, "" if r.seed is None else r.seed, r.total_bytes,
                        f"{r.mean_gradient:.6g}", *r.per_map_bytes])


def write_json(results, path) -> None:
    Path(path).write_text(json.dumps({"results": [r.row() for r in results],
                                      "summary": summarize(results)}, indent=2))


def dump_maps(results, directory, param_id: int) -> list[Path]:
    """Write one greyscale PNG of map ``param_id`` per result."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in results:
        tag = r.strategy if r.seed is None or r.strategy == "nns" else f"{r.strategy}_{r.seed}"
        p = d / f"{tag}_map{param_id}.png"
        export_map_png(r.maps.maps[param_id], p)
        paths.append(p)
    return paths
