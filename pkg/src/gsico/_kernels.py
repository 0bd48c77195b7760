"""Hot inner loops, each with a numba and a pure-numpy implementation.

Set ``GSICO_DISABLE_NUMBA=1`` to run the numpy versions. Both paths
accumulate squared distances dimension by dimension in the same order, so
they produce bit-identical results (ties included); tests and
``benchmarks/bench_kernels.py`` check this.

``GSICO_THREADS`` caps the numba thread pool. Parallel kernels only split
work over independent rows, so results do not depend on the thread count.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # skip the TBB probe: it warns on older system TBB builds
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_FALSY = ("", "0", "false", "no", "off")

USE_NUMBA = HAVE_NUMBA and os.environ.get("GSICO_DISABLE_NUMBA", "").lower() in _FALSY


def set_threads(n: int | None = None) -> None:
    """Apply ``n`` (or ``$GSICO_THREADS``) as the numba thread cap."""
    if not HAVE_NUMBA:
        return
    if n is None:
        env = os.environ.get("GSICO_THREADS")
        if not env:
            return
        n = int(env)
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


# squared distances --------------------------------------------------------

def sq_dist_to_point(X: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance of every row of ``X`` to ``c``."""
    acc = np.zeros(X.shape[0])
    for k in range(X.shape[1]):
        diff = X[:, k] - c[k]
        acc += diff * diff
    return acc


def _nearest_np(X, C, prev):
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    chunk = max(1, (1 << 22) // max(1, C.shape[0]))
    for s in range(0, n, chunk):
        xs = X[s : s + chunk]
        acc = np.zeros((xs.shape[0], C.shape[0]))
        for k in range(X.shape[1]):
            diff = xs[:, k, None] - C[None, :, k]
            acc += diff * diff
        lab = np.argmin(acc, axis=1)
        labels[s : s + chunk] = lab
        best[s : s + chunk] = acc[np.arange(lab.size), lab]
    return labels, best


def _nearest_np_pairwise(C):
    acc = np.zeros((C.shape[0], C.shape[0]))
    for k in range(C.shape[1]):
        diff = C[:, k, None] - C[None, :, k]
        acc += diff * diff
    return acc


def _kpp_update_np(X, c, mind2):
    np.minimum(mind2, sq_dist_to_point(X, c), out=mind2)


def _nns_np(F, seed, w, h):
    S, d = F.shape
    M = np.full((h, w), -1, dtype=np.int64)
    used = np.zeros(S, dtype=bool)
    M[0, 0] = seed
    used[seed] = True
    for i in range(h):
        cols = range(w) if i % 2 == 0 else range(w - 1, -1, -1)
        for j in cols:
            if i == 0 and j == 0:
                continue
            avg = np.zeros(d)
            count = 0
            for di, dj in _NEIGHBOURS:
                ii, jj = i + di, j + dj
                if 0 <= ii and 0 <= jj < w and M[ii, jj] >= 0:
                    avg += F[M[ii, jj]]
                    count += 1
            avg /= count
            dist = sq_dist_to_point(F, avg)
            dist[used] = np.inf
            best = int(np.argmin(dist))
            M[i, j] = best
            used[best] = True
    return M


def _paeth(a, b, c):
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter_np(raw, h, stride, bpp):
    out = np.zeros((h, stride), dtype=np.uint8)
    rows = raw.reshape(h, stride + 1)
    prev = np.zeros(stride, dtype=np.int64)
    for y in range(h):
        ft = int(rows[y, 0])
        line = rows[y, 1:].astype(np.int64)
        if ft == 0:
            cur = line
        elif ft == 1:
            cur = np.cumsum(line.reshape(-1, bpp), axis=0).reshape(-1) & 255
        elif ft == 2:
            cur = (line + prev) & 255
        elif ft in (3, 4):
            cur = np.zeros(stride, dtype=np.int64)
            for x in range(stride):
                a = int(cur[x - bpp]) if x >= bpp else 0
                b = int(prev[x])
                if ft == 3:
                    cur[x] = (line[x] + ((a + b) >> 1)) & 255
                else:
                    c = int(prev[x - bpp]) if x >= bpp else 0
                    cur[x] = (line[x] + _paeth(a, b, c)) & 255
        else:
            return out, y
        out[y] = cur
        prev = cur
    return out, -1


# Neighbour positions consulted by NNS, as (row, col) offsets. Summed in
# this order when averaging. Cells below the current row are never filled.
_NEIGHBOURS = ((0, -1), (0, 1), (-1, -1), (-1, 0), (-1, 1))

if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _nearest_nb(X, C, prev, order, cc):
        # order[b] lists centroids by distance from centroid b (cc[b] sorted
        # ascending). A centroid j with cc[b, j] > 2 * d(x, c_b) is strictly
        # farther from x than c_b, so the scan stops there.
        n, d = X.shape
        K = C.shape[0]
        labels = np.empty(n, dtype=np.int64)
        best = np.empty(n)
        for i in prange(n):
            b0 = prev[i]
            if b0 < 0 or b0 >= K:
                b0 = 0
            bd = 0.0
            for k in range(d):
                diff = X[i, k] - C[b0, k]
                bd += diff * diff
            radius = 2.0 * np.sqrt(bd) * (1.0 + 1e-9) + 1e-300
            b = b0
            for t in range(K):
                j = order[b0, t]
                if cc[b0, j] > radius:
                    break
                if j == b0:
                    continue
                acc = 0.0
                pruned = False
                for k in range(d):
                    diff = X[i, k] - C[j, k]
                    acc += diff * diff
                    if acc > bd:
                        pruned = True
                        break
                if not pruned and (acc < bd or j < b):
                    bd = acc
                    b = j
            labels[i] = b
            best[i] = bd
        return labels, best

    @njit(parallel=True, cache=True)
    def _kpp_update_nb(X, c, mind2, owner, cdist):
        # cdist[o] = |c - centre_o|; a point whose current nearest centre o
        # has cdist[o] > 2 * sqrt(mind2) cannot get closer to c.
        n, d = X.shape
        for i in prange(n):
            o = owner[i]
            if o >= 0 and cdist[o] > 2.0 * np.sqrt(mind2[i]) * (1.0 + 1e-9) + 1e-300:
                continue
            acc = 0.0
            for k in range(d):
                diff = X[i, k] - c[k]
                acc += diff * diff
            if acc < mind2[i]:
                mind2[i] = acc
                owner[i] = -2

    @njit(parallel=True, cache=True)
    def _pairwise_nb(C):
        K, d = C.shape
        out = np.empty((K, K))
        for a in prange(K):
            for b in range(K):
                acc = 0.0
                for k in range(d):
                    diff = C[a, k] - C[b, k]
                    acc += diff * diff
                out[a, b] = acc
        return out

    @njit(cache=True)
    def _centroid_sums_nb(X, labels, k):
        n, d = X.shape
        sums = np.zeros((k, d))
        counts = np.zeros(k, dtype=np.int64)
        for i in range(n):
            lab = labels[i]
            counts[lab] += 1
            for j in range(d):
                sums[lab, j] += X[i, j]
        return sums, counts

    @njit(cache=True)
    def _nns_nb(F, seed, w, h):
        S, d = F.shape
        M = np.full((h, w), -1, dtype=np.int64)
        used = np.zeros(S, dtype=np.bool_)
        M[0, 0] = seed
        used[seed] = True
        avg = np.empty(d)
        dis = (0, 0, -1, -1, -1)
        djs = (-1, 1, -1, 0, 1)
        for i in range(h):
            for t in range(w):
                j = t if i % 2 == 0 else w - 1 - t
                if i == 0 and j == 0:
                    continue
                avg[:] = 0.0
                count = 0
                for q in range(5):
                    ii = i + dis[q]
                    jj = j + djs[q]
                    if ii >= 0 and jj >= 0 and jj < w and M[ii, jj] >= 0:
                        e = M[ii, jj]
                        for k in range(d):
                            avg[k] += F[e, k]
                        count += 1
                for k in range(d):
                    avg[k] /= count
                best = -1
                bd = np.inf
                for e in range(S):
                    if used[e]:
                        continue
                    acc = 0.0
                    for k in range(d):
                        diff = F[e, k] - avg[k]
                        acc += diff * diff
                        if acc >= bd:
                            break
                    if acc < bd:
                        bd = acc
                        best = e
                M[i, j] = best
                used[best] = True
        return M

    @njit(cache=True)
    def _unfilter_nb(raw, h, stride, bpp):
        out = np.zeros((h, stride), dtype=np.uint8)
        for y in range(h):
            base = y * (stride + 1)
            ft = raw[base]
            if ft > 4:
                return out, y
            for x in range(stride):
                v = np.int64(raw[base + 1 + x])
                a = np.int64(out[y, x - bpp]) if x >= bpp else 0
                b = np.int64(out[y - 1, x]) if y > 0 else 0
                if ft == 1:
                    v += a
                elif ft == 2:
                    v += b
                elif ft == 3:
                    v += (a + b) >> 1
                elif ft == 4:
                    c = np.int64(out[y - 1, x - bpp]) if (x >= bpp and y > 0) else 0
                    p = a + b - c
                    pa = abs(p - a)
                    pb = abs(p - b)
                    pc = abs(p - c)
                    if pa <= pb and pa <= pc:
                        v += a
                    elif pb <= pc:
                        v += b
                    else:
                        v += c
                out[y, x] = v & 255
        return out, -1


# dispatchers -------------------------------------------------------------

def nearest_centroid(X: np.ndarray, C: np.ndarray, prev: np.ndarray | None = None):
    """Index of (and squared distance to) the nearest row of ``C`` for each
    row of ``X``; ties go to the lowest index. ``prev`` is only a search hint.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    if USE_NUMBA:
        if prev is None:
            prev = np.zeros(X.shape[0], dtype=np.int64)
        cc = np.sqrt(_pairwise_nb(C))
        order = np.argsort(cc, axis=1, kind="stable")
        return _nearest_nb(X, C, np.ascontiguousarray(prev, dtype=np.int64), order, cc)
    return _nearest_np(X, C, prev)


class SeedingState:
    """Running nearest-seed distances for K-means++ seeding."""

    def __init__(self, X: np.ndarray, k: int):
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.mind2 = np.full(X.shape[0], np.inf)
        self.owner = np.full(X.shape[0], -1, dtype=np.int64)
        self.centres = np.empty((k, X.shape[1]))
        self.n = 0

    def add(self, c: np.ndarray) -> None:
        """Add seed ``c``: ``mind2 = minimum(mind2, |X - c|^2)``."""
        idx = self.n
        self.centres[idx] = c
        self.n += 1
        if not USE_NUMBA:
            _kpp_update_np(self.X, c, self.mind2)
            return
        cdist = np.sqrt(sq_dist_to_point(self.centres[:idx], c)) if idx else np.empty(0)
        _kpp_update_nb(self.X, self.centres[idx], self.mind2, self.owner, cdist)
        self.owner[self.owner == -2] = idx


def centroid_sums(X: np.ndarray, labels: np.ndarray, k: int):
    """Per-label coordinate sums (accumulated in row order) and counts."""
    if USE_NUMBA:
        return _centroid_sums_nb(np.ascontiguousarray(X, dtype=np.float64), labels, k)
    counts = np.bincount(labels, minlength=k)
    sums = np.stack(
        [np.bincount(labels, weights=X[:, j], minlength=k) for j in range(X.shape[1])],
        axis=1,
    )
    return sums, counts


def nns_fill(F: np.ndarray, seed: int, w: int, h: int) -> np.ndarray:
    """Snake-scan greedy placement of the rows of ``F`` on an ``h x w`` grid."""
    F = np.ascontiguousarray(F, dtype=np.float64)
    if USE_NUMBA:
        return _nns_nb(F, np.int64(seed), np.int64(w), np.int64(h))
    return _nns_np(F, int(seed), int(w), int(h))


def png_unfilter(raw: np.ndarray, h: int, stride: int, bpp: int):
    """Undo PNG scanline filters. Returns ``(rows, bad_row)``; ``bad_row`` is
    -1 on success or the first row with an invalid filter type."""
    raw = np.ascontiguousarray(raw, dtype=np.uint8)
    if USE_NUMBA:
        return _unfilter_nb(raw, np.int64(h), np.int64(stride), np.int64(bpp))
    return _unfilter_np(raw, h, stride, bpp)
