"""Adaptive PCA sub-dictionaries learned from groups of similar patches.

Each patch owns an orthonormal basis whose rows are the principal directions
of its group of nonlocal neighbors (mean removed), ordered by decreasing
variance. Codes are taken around the group mean::

    code(v)   = basis @ (v - mean)
    decode(a) = basis.T @ a + mean
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import DimensionError
from .numerics import sym_eig


@dataclass
class SubDictionary:
    basis: np.ndarray      # (d, d), rows are principal directions
    mean: np.ndarray       # (d,)
    patch_index: int = -1
    eigenvalues: np.ndarray | None = None


def _covariance(samples: np.ndarray):
    mean = samples.mean(axis=-2)
    centered = samples - mean[..., None, :]
    cov = np.swapaxes(centered, -1, -2) @ centered / samples.shape[-2]
    # symmetrize away rounding so the eigen-solver's symmetry check is exact
    return mean, 0.5 * (cov + np.swapaxes(cov, -1, -2))


def train_subdictionary(samples, patch_index: int = -1) -> SubDictionary:
    """PCA basis of ``n`` patch vectors (``(n, d)`` array, ``n >= 2``)."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError("at least two training samples are required")
    basis, mean, evals = train_batch(samples[None])
    return SubDictionary(basis[0], mean[0], patch_index, evals[0])


def train_batch(samples: np.ndarray):
    """Train one basis per group; ``samples`` is ``(B, n, d)``.

    Returns ``(bases, means, eigenvalues)``. Groups with zero variance get the
    identity basis.
    """
    mean, cov = _covariance(samples)
    eig = sym_eig(cov)
    bases = np.swapaxes(eig.eigenvectors, -1, -2).copy()
    # compare samples directly: rounding in the mean can leave a tiny nonzero covariance
    flat = np.all(samples == samples[..., :1, :], axis=(-1, -2))
    if np.any(flat):
        bases[flat] = np.eye(samples.shape[-1])
        mean[flat] = samples[flat][..., 0, :]
    return bases, mean, eig.eigenvalues


def code(d: SubDictionary, patch) -> np.ndarray:
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape != d.mean.shape:
        raise DimensionError(f"patch length {patch.shape} != {d.mean.shape}")
    return d.basis @ (patch - d.mean)


def decode(d: SubDictionary, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != d.mean.shape:
        raise DimensionError(f"coefficient length {alpha.shape} != {d.mean.shape}")
    return d.basis.T @ alpha + d.mean


def prior_coefficient(d: SubDictionary, neighbors, weights) -> np.ndarray:
    """Code of the weighted average of ``neighbors`` (``(t, d)``)."""
    neighbors = np.atleast_2d(np.asarray(neighbors, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (neighbors.shape[0],):
        raise ValueError(
            f"{weights.shape[0] if weights.ndim else 1} weights for "
            f"{neighbors.shape[0]} neighbors")
    return code(d, weights @ neighbors)


def code_batch(bases, means, patches):
    return np.einsum("bij,bj->bi", bases, patches - means)


def decode_batch(bases, means, alphas):
    return np.einsum("bji,bj->bi", bases, alphas) + means
