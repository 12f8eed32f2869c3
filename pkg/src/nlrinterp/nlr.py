"""Nonlocal linear regression (NLR) operator.

Each pixel that is the center of a patch is predicted as an affine
combination of the center pixels of its ``m`` most similar nonlocal patches:
``x_i ~ sum_j a_ij x[c_j] + b_i``. The coefficients come from a
kernel-weighted ridge regression of the whole patch on the neighbor patches
plus a constant column, with kernel weights decaying with spatial distance
from the patch center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .image import DimensionError, PatchSystem
from .numerics import ridge_solve, ridge_solve_batch
from .search import SearchConfig, dense_grid_shape, search_all


def kernel_weights(p: int, sigma: float) -> np.ndarray:
    """``exp(-(dr^2 + dc^2) / sigma^2)`` over a ``p x p`` patch, row-major."""
    if p % 2 == 0:
        raise ValueError(f"patch size must be odd, got {p}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.arange(p) - p // 2
    dist2 = d[:, None] ** 2 + d[None, :] ** 2
    return np.exp(-dist2 / sigma ** 2).ravel()


def _design(neighbors):
    neighbors = np.asarray(neighbors, dtype=np.float64)
    ones = np.ones(neighbors.shape[:-2] + (neighbors.shape[-1], 1))
    return np.concatenate([np.swapaxes(neighbors, -1, -2), ones], axis=-1)


def regression_objective(omega, target, neighbors, kw, chi) -> float:
    """Kernel-weighted ridge objective ``||k^1/2 (x - X w)||^2 + chi ||w||^2``."""
    resid = np.asarray(target) - _design(neighbors) @ omega
    return float(np.sum(kw * resid ** 2) + chi * np.sum(omega ** 2))


def fit_patch_regression(target, neighbors, kw, chi: float):
    """Fit ``target ~ neighbors^T a + b``.

    ``neighbors`` is ``(m, p*p)``. Returns ``(a, b)``.
    """
    if chi <= 0:
        raise ValueError("ridge parameter chi must be positive")
    target = np.asarray(target, dtype=np.float64)
    neighbors = np.atleast_2d(np.asarray(neighbors, dtype=np.float64))
    if neighbors.shape[1] != target.shape[0] or kw.shape != target.shape:
        raise DimensionError("target, neighbors and kernel weights disagree in length")
    x = _design(neighbors)
    gram = x.T @ (kw[:, None] * x) + chi * np.eye(x.shape[1])
    omega = ridge_solve(gram, x.T @ (kw * target))
    return omega[:-1], float(omega[-1])


def fit_batch(targets, neighbors, kw, chi: float) -> np.ndarray:
    """Stacked regression fits; ``neighbors`` is ``(B, m, p*p)``.

    Returns ``omega`` of shape ``(B, m + 1)`` (last column is the bias).
    All-zero neighbor rows decouple and receive zero weight.
    """
    if chi <= 0:
        raise ValueError("ridge parameter chi must be positive")
    x = _design(neighbors)
    xk = x * kw[None, :, None]
    gram = np.swapaxes(xk, -1, -2) @ x
    gram += chi * np.eye(x.shape[-1])
    rhs = np.einsum("bkm,bk->bm", xk, targets)
    return ridge_solve_batch(gram, rhs)


@dataclass
class NlrOperator:
    """Affine map ``x -> H x + b`` on flattened HR images."""

    matrix: sparse.csr_matrix
    bias: np.ndarray
    shape: tuple

    def apply(self, img: np.ndarray) -> np.ndarray:
        return apply_nlr(self, img)

    def apply_linear(self, img: np.ndarray) -> np.ndarray:
        self._check(img)
        return (self.matrix @ np.ravel(img)).reshape(self.shape)

    def adjoint(self, img: np.ndarray) -> np.ndarray:
        """``H^T v`` (the bias does not enter the adjoint)."""
        self._check(img)
        return (self.matrix.T @ np.ravel(img)).reshape(self.shape)

    def _check(self, img):
        if np.shape(img) != self.shape:
            raise DimensionError(
                f"image shape {np.shape(img)} does not match operator {self.shape}")

    @classmethod
    def identity(cls, shape):
        n = shape[0] * shape[1]
        return cls(sparse.identity(n, format="csr"), np.zeros(n), tuple(shape))


def apply_nlr(op: NlrOperator, img: np.ndarray) -> np.ndarray:
    op._check(img)
    return (op.matrix @ np.ravel(img) + op.bias).reshape(op.shape)


def assemble(shape, rows, neighbor_pixels, omega) -> NlrOperator:
    """Build the sparse operator from fitted rows.

    ``rows`` are flat HR pixel indices, ``neighbor_pixels`` the ``(R, m)``
    flat indices of the neighbor centers (``-1`` for missing neighbors) and
    ``omega`` the ``(R, m + 1)`` fitted weights. Other pixels get identity rows.
    """
    n = shape[0] * shape[1]
    weights = omega[:, :-1]
    keep = neighbor_pixels >= 0
    r_idx = np.repeat(rows, keep.sum(axis=1))
    fitted = np.zeros(n, dtype=bool)
    fitted[rows] = True
    ident = np.flatnonzero(~fitted)
    data = np.concatenate([weights[keep], np.ones(len(ident))])
    ii = np.concatenate([r_idx, ident])
    jj = np.concatenate([neighbor_pixels[keep], ident])
    matrix = sparse.csr_matrix((data, (ii, jj)), shape=(n, n))
    bias = np.zeros(n)
    bias[rows] = omega[:, -1]
    return NlrOperator(matrix, bias, tuple(shape))


def build_nlr_operator(img: np.ndarray, system: PatchSystem, cfg: SearchConfig,
                       m: int = 15, sigma: float = 1.7, chi: float = 0.01,
                       only=None) -> NlrOperator:
    """Fit one regression row per patch center of ``system``.

    The query patch itself is never its own neighbor. ``only`` optionally
    restricts fitting to pixels where the boolean HR mask is true; every
    other pixel keeps an identity row.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    img = np.asarray(img, dtype=np.float64)
    p = system.patch_size
    half = p // 2
    qr, qc = system.row_origins, system.col_origins
    if only is not None:
        only = np.asarray(only, dtype=bool)
        qr = qr[only[qr + half].any(axis=1)]
        qc = qc[only[:, qc + half].any(axis=0)]
    cfg = SearchConfig(cfg.window, max(cfg.max_candidates, m), True, cfg.threshold)
    idx, _ = search_all(img, p, cfg, m, qr, qc)
    _, nc = dense_grid_shape(img.shape, p)
    patches = np.lib.stride_tricks.sliding_window_view(img, (p, p)).reshape(-1, p * p)

    rr, cc = np.meshgrid(qr, qc, indexing="ij")
    q_dense = (rr * nc + cc).ravel()
    targets = patches[q_dense]
    missing = idx < 0
    nbr = patches[np.where(missing, 0, idx)]
    nbr[missing] = 0.0
    omega = fit_batch(targets, nbr, kernel_weights(p, sigma), chi)

    width = img.shape[1]
    rows = (rr.ravel() + half) * width + (cc.ravel() + half)
    nbr_pix = np.where(missing, -1, (idx // nc + half) * width + (idx % nc + half))
    if only is not None:
        sel = only.ravel()[rows]
        rows, nbr_pix, omega = rows[sel], nbr_pix[sel], omega[sel]
    return assemble(img.shape, rows, nbr_pix, omega)
