"""Map statistics: empirical entropy, gradient energy, PSNR."""
from __future__ import annotations

import numpy as np


def shannon_entropy(q) -> float:
    """Empirical entropy in bits/sample of an integer map (or QuantizedMap)."""
    values = np.asarray(getattr(q, "indices", q)).ravel()
    if values.size == 0:
        return 0.0
    counts = np.bincount(values.astype(np.int64))
    p = counts[counts > 0] / values.size
    return float(-(p * np.log2(p)).sum()) + 0.0


def mean_gradient(grid) -> float:
    """Mean |horizontal difference| + |vertical difference| per sample."""
    g = np.asarray(grid, dtype=np.float64)
    dx = np.abs(np.diff(g, axis=1)).sum()
    dy = np.abs(np.diff(g, axis=0)).sum()
    return float((dx + dy) / g.size)


def psnr(reference, test, peak: float) -> float:
    ref = np.asarray(reference, dtype=np.float64)
    mse = float(((ref - np.asarray(test, dtype=np.float64)) ** 2).mean())
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak**2 / mse)
