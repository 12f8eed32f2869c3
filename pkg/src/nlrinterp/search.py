"""Nonlocal similar-patch search inside a square window.

Candidates are patch origins on the stride-1 grid whose patches lie entirely
inside the ``window x window`` pixel square centered on the query patch's
center, i.e. center offsets of at most ``(window - p) // 2`` along each axis.
Candidates are ranked by squared Euclidean distance between patch vectors,
ties resolved by raster order of the candidate origin.

Neighbor indices are flat indices into the stride-1 origin grid of the image
(``r * (width - p + 1) + c``); for a stride-1 :class:`PatchSystem` these are
the patch indices themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import PatchSystem


@dataclass(frozen=True)
class SearchConfig:
    window: int = 31
    max_candidates: int = 64
    exclude_self: bool = False
    threshold: float | None = None  # optional cap on squared distance

    def __post_init__(self):
        if self.window % 2 == 0:
            raise ValueError("search window must be odd")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")

    def radius(self, patch_size: int) -> int:
        if self.window < patch_size:
            raise ValueError("search window must be at least the patch size")
        return (self.window - patch_size) // 2


@dataclass
class SimilarPatchSet:
    query_index: int
    neighbor_indices: np.ndarray
    distances: np.ndarray
    origins: np.ndarray  # (n, 2) origins of the neighbors


def dense_grid_shape(shape, patch_size):
    return shape[0] - patch_size + 1, shape[1] - patch_size + 1


def find_similar(img: np.ndarray, system: PatchSystem, i: int, cfg: SearchConfig,
                 count: int) -> SimilarPatchSet:
    """Exhaustive window scan for one query patch."""
    if count < 1:
        raise ValueError("count must be >= 1")
    p = system.patch_size
    r0, c0 = system.origin(i)
    query = img[r0:r0 + p, c0:c0 + p]
    nr, nc = dense_grid_shape(img.shape, p)
    rad = cfg.radius(p)
    cands, dists = [], []
    for r in range(max(0, r0 - rad), min(nr - 1, r0 + rad) + 1):
        for c in range(max(0, c0 - rad), min(nc - 1, c0 + rad) + 1):
            if cfg.exclude_self and (r, c) == (r0, c0):
                continue
            # same summation order as search_all, so exact ties stay exact
            d = float(_box_sum((img[r:r + p, c:c + p] - query) ** 2, p)[0, 0])
            if cfg.threshold is not None and d > cfg.threshold:
                continue
            cands.append((r, c))
            dists.append(d)
    dists = np.array(dists)
    order = np.argsort(dists, kind="stable")[:min(count, cfg.max_candidates)]
    origins = np.array(cands, dtype=np.intp).reshape(-1, 2)[order]
    return SimilarPatchSet(
        query_index=i,
        neighbor_indices=origins[:, 0] * nc + origins[:, 1],
        distances=dists[order],
        origins=origins,
    )


def _box_sum(a: np.ndarray, p: int) -> np.ndarray:
    """Sums over every ``p x p`` window (valid positions only)."""
    rows = a[:a.shape[0] - p + 1].copy()
    for d in range(1, p):
        rows += a[d:a.shape[0] - p + 1 + d]
    out = rows[:, :a.shape[1] - p + 1].copy()
    for d in range(1, p):
        out += rows[:, d:a.shape[1] - p + 1 + d]
    return out


def _smallest_k(dist: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` smallest entries along the last axis, ascending.

    Equal values keep their axis order, exactly as a stable full sort would,
    but only the selected ``k`` entries are sorted.
    """
    n = dist.shape[-1]
    if k >= n:
        return np.argsort(dist, axis=-1, kind="stable")
    kth = np.partition(dist, k - 1, axis=-1)[..., k - 1:k]
    below = dist < kth
    need = k - below.sum(axis=-1, keepdims=True)
    tie = dist == kth
    # ties at the cut are admitted in axis order until k entries are taken
    keep = below | (tie & (np.cumsum(tie, axis=-1) <= need))
    picked = np.nonzero(keep.reshape(-1, n))[1].reshape(dist.shape[:-1] + (k,))
    vals = np.take_along_axis(dist, picked, axis=-1)
    return np.take_along_axis(picked, np.argsort(vals, axis=-1, kind="stable"), axis=-1)


def search_all(img: np.ndarray, patch_size: int, cfg: SearchConfig, count: int,
               query_rows=None, query_cols=None, band: int = 32):
    """Vectorized window search for a grid of query origins.

    ``query_rows``/``query_cols`` select the query origins (default: the full
    stride-1 grid). Returns ``(indices, distances)`` of shape
    ``(len(query_rows) * len(query_cols), k)`` with ``k = min(count,
    max_candidates, window candidates)``; queries whose window holds fewer
    valid candidates are padded with index ``-1`` and distance ``inf``.
    """
    img = np.asarray(img, dtype=np.float64)
    p = patch_size
    nr, nc = dense_grid_shape(img.shape, p)
    qr = np.arange(nr) if query_rows is None else np.asarray(query_rows)
    qc = np.arange(nc) if query_cols is None else np.asarray(query_cols)
    rad = cfg.radius(p)
    offsets = [(dr, dc) for dr in range(-rad, rad + 1) for dc in range(-rad, rad + 1)
               if not (cfg.exclude_self and dr == 0 and dc == 0)]
    k = min(count, cfg.max_candidates, len(offsets))
    off = np.array(offsets, dtype=np.intp).reshape(-1, 2)
    if k == 0:
        return np.empty((len(qr) * len(qc), 0), np.intp), np.empty((len(qr) * len(qc), 0))

    # pad so every offset is addressable; padded candidates are masked out
    padded = np.pad(img, rad)
    out_idx = np.empty((len(qr), len(qc), k), dtype=np.intp)
    out_dist = np.empty((len(qr), len(qc), k))
    for start in range(0, len(qr), band):
        rows = qr[start:start + band]
        lo, hi = rows.min(), rows.max()
        block = img[lo:hi + p, :]
        dist = np.empty((len(rows), len(qc), len(offsets)))
        for j, (dr, dc) in enumerate(offsets):
            shifted = padded[lo + rad + dr:hi + p + rad + dr,
                             rad + dc:rad + dc + img.shape[1]]
            d = _box_sum((block - shifted) ** 2, p)
            dist[:, :, j] = d[rows - lo][:, qc]
        cand_r = rows[:, None, None] + off[None, None, :, 0]
        cand_c = qc[None, :, None] + off[None, None, :, 1]
        valid = (cand_r >= 0) & (cand_r < nr) & (cand_c >= 0) & (cand_c < nc)
        if cfg.threshold is not None:
            valid &= dist <= cfg.threshold
        dist[~np.broadcast_to(valid, dist.shape)] = np.inf
        order = _smallest_k(dist, k)
        best = np.take_along_axis(dist, order, axis=2)
        r_sel = np.take_along_axis(np.broadcast_to(cand_r, dist.shape), order, axis=2)
        c_sel = np.take_along_axis(np.broadcast_to(cand_c, dist.shape), order, axis=2)
        idx = r_sel * nc + c_sel
        idx[~np.isfinite(best)] = -1
        out_idx[start:start + len(rows)] = idx
        out_dist[start:start + len(rows)] = best
    return out_idx.reshape(-1, k), out_dist.reshape(-1, k)


def similarity_weights(distances, h1: float) -> np.ndarray:
    """Normalized ``exp(-d / h1)`` weights along the last axis.

    Infinite distances (padding) get weight zero.
    """
    if h1 <= 0:
        raise ValueError("h1 must be positive")
    d = np.asarray(distances, dtype=np.float64)
    if d.shape[-1] == 0:
        raise ValueError("at least one distance is required")
    # shifting by the row minimum leaves the normalized weights unchanged
    dmin = np.min(d, axis=-1, keepdims=True)
    w = np.exp(-(d - dmin) / h1)
    return w / np.sum(w, axis=-1, keepdims=True)
