"""Small dense linear algebra and a matrix-free conjugate-gradient solver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg as sla


class SingularSystemError(np.linalg.LinAlgError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class DivergenceError(RuntimeError):
    pass


class SymEig(NamedTuple):
    eigenvalues: np.ndarray   # (..., n), descending
    eigenvectors: np.ndarray  # (..., n, n), column k pairs with eigenvalue k


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip eigenvector columns so the largest-magnitude entry is positive.

    Ties in magnitude resolve to the first such entry.
    """
    idx = np.argmax(np.abs(vectors), axis=-2)
    lead = np.take_along_axis(vectors, idx[..., None, :], axis=-2)
    signs = np.where(lead < 0, -1.0, 1.0)
    return vectors * signs


def sym_eig(a: np.ndarray, rtol: float = 1e-10) -> SymEig:
    """Eigendecomposition of a symmetric matrix (or a stack of them).

    Eigenvalues are returned in descending order with the deterministic
    sign convention of :func:`fix_signs`.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("matrix has non-finite entries")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - np.swapaxes(a, -1, -2)), initial=0.0) > rtol * max(scale, 1e-300):
        raise ValueError("matrix is not symmetric")
    w, v = np.linalg.eigh(a)
    w = w[..., ::-1]
    v = fix_signs(v[..., ::-1])
    return SymEig(w, v)


def ridge_solve(g: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Solve ``g z = r`` for symmetric positive definite ``g`` by Cholesky."""
    g = np.asarray(g, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    try:
        factor = sla.cho_factor(g, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(
            "system is not positive definite; is the ridge parameter positive?"
        ) from exc
    return sla.cho_solve(factor, r)


def ridge_solve_batch(g: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Stacked version of :func:`ridge_solve`: ``g`` is ``(B, n, n)``, ``r`` is ``(B, n)``."""
    try:
        chol = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "a system in the batch is not positive definite") from exc
    z = np.linalg.solve(chol, r[..., None])
    return np.linalg.solve(np.swapaxes(chol, -1, -2), z)[..., 0]


@dataclass
class LinearOperator:
    """Matrix-free square operator: ``matvec`` maps an n-vector to an n-vector."""

    n: int
    matvec: callable
    diagonal: np.ndarray | None = None

    @property
    def shape(self):
        return self.n, self.n

    def __matmul__(self, v):
        return self.matvec(v)


def as_operator(a) -> LinearOperator:
    if isinstance(a, LinearOperator):
        return a
    if hasattr(a, "shape") and hasattr(a, "dot"):
        n = a.shape[0]
        diag = a.diagonal() if hasattr(a, "diagonal") else None
        return LinearOperator(n, a.dot, None if diag is None else np.asarray(diag))
    raise TypeError(f"cannot interpret {type(a).__name__} as a linear operator")


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float      # relative: ||A x - b|| / ||b||
    converged: bool


def conjugate_gradient(a, rhs, x0=None, tol: float = 1e-6, max_iter: int = 400,
                       precondition: bool = False) -> CGResult:
    """Conjugate gradients for an SPD operator.

    Stops once ``||A x - rhs|| <= tol * ||rhs||``. With ``precondition`` the
    operator's ``diagonal`` is used as a Jacobi preconditioner. Raises
    :class:`NonFiniteError` on NaN/inf and :class:`DivergenceError` when the
    residual grows tenfold past the best one seen.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    op = as_operator(a)
    b = np.asarray(rhs, dtype=np.float64)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0, True)

    inv_diag = None
    if precondition:
        if op.diagonal is None:
            raise ValueError("preconditioning requires the operator diagonal")
        inv_diag = 1.0 / op.diagonal

    r = b - op.matvec(x)
    rnorm = np.linalg.norm(r)
    best = rnorm
    if not np.isfinite(rnorm):
        raise NonFiniteError("non-finite initial residual")
    if rnorm <= tol * bnorm:
        return CGResult(x, 0, rnorm / bnorm, True)

    z = r if inv_diag is None else inv_diag * r
    d = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        ad = op.matvec(d)
        curv = d @ ad
        if not np.isfinite(curv):
            raise NonFiniteError(f"non-finite curvature at CG iteration {it}")
        if curv <= 0:
            raise DivergenceError(
                f"operator is not positive definite (d'Ad = {curv:.3e})")
        step = rz / curv
        x += step * d
        r -= step * ad
        rnorm = np.linalg.norm(r)
        if not np.isfinite(rnorm):
            raise NonFiniteError(f"non-finite residual at CG iteration {it}")
        if rnorm <= tol * bnorm:
            return CGResult(x, it, rnorm / bnorm, True)
        if rnorm > 10.0 * best:
            raise DivergenceError(
                f"CG residual grew from {best:.3e} to {rnorm:.3e}")
        best = min(best, rnorm)
        z = r if inv_diag is None else inv_diag * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    return CGResult(x, max_iter, rnorm / bnorm, False)
