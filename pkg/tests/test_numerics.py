import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlrinterp.numerics import (
    DivergenceError, LinearOperator, NonFiniteError, SingularSystemError,
    conjugate_gradient, ridge_solve, ridge_solve_batch, sym_eig,
)


def _random_sym(rng, n):
    a = rng.normal(size=(n, n))
    return (a + a.T) / 2


def _random_spd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T + n * np.eye(n)


def test_eig_identity():
    e = sym_eig(np.eye(3))
    np.testing.assert_allclose(e.eigenvalues, [1, 1, 1])
    np.testing.assert_allclose(e.eigenvectors.T @ e.eigenvectors, np.eye(3), atol=1e-12)


def test_eig_diag_is_sorted_and_axis_aligned():
    e = sym_eig(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(e.eigenvalues, [3, 2, 1])
    np.testing.assert_allclose(np.abs(e.eigenvectors), [[1, 0, 0], [0, 0, 1], [0, 1, 0]])


def test_eig_reconstructs_random_25():
    rng = np.random.default_rng(0)
    a = _random_sym(rng, 25)
    e = sym_eig(a)
    q, lam = e.eigenvectors, e.eigenvalues
    assert np.max(np.abs(q @ np.diag(lam) @ q.T - a)) <= 1e-8
    assert np.max(np.abs(q.T @ q - np.eye(25))) <= 1e-10
    norm = np.linalg.norm(a, 2)
    for k in range(25):
        assert np.linalg.norm(a @ q[:, k] - lam[k] * q[:, k]) <= 1e-8 * norm
    assert np.all(np.diff(lam) <= 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 40))
def test_eig_trace_and_sign_convention(seed, n):
    rng = np.random.default_rng(seed)
    a = _random_sym(rng, n)
    e = sym_eig(a)
    assert e.eigenvalues.sum() == pytest.approx(np.trace(a), rel=1e-9, abs=1e-9)
    lead = e.eigenvectors[np.argmax(np.abs(e.eigenvectors), axis=0), np.arange(n)]
    assert np.all(lead > 0)


def test_eig_is_deterministic_across_batches():
    rng = np.random.default_rng(4)
    stack = np.stack([_random_sym(rng, 6) for _ in range(5)])
    batch = sym_eig(stack)
    for i in range(5):
        single = sym_eig(stack[i])
        np.testing.assert_allclose(batch.eigenvectors[i], single.eigenvectors, atol=1e-12)


def test_eig_rejects_bad_input():
    with pytest.raises(ValueError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NonFiniteError):
        sym_eig(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_ridge_examples():
    r = np.array([1.5, -2.0, 0.25])
    np.testing.assert_allclose(ridge_solve(np.eye(3), r), r)
    np.testing.assert_allclose(ridge_solve(2 * np.eye(2), [4.0, 6.0]), [2, 3])


def test_ridge_random_residual_and_stationarity():
    rng = np.random.default_rng(1)
    g = _random_spd(rng, 16)
    r = rng.normal(size=16)
    z = ridge_solve(g, r)
    assert np.linalg.norm(g @ z - r) <= 1e-10 * np.linalg.norm(r)
    # gradient of 0.5 z'Gz - r'z
    assert np.linalg.norm(g @ z - r) <= 1e-8 * np.linalg.norm(r)
    zb = ridge_solve_batch(g[None], r[None])[0]
    np.testing.assert_allclose(zb, z, rtol=1e-10)


def test_ridge_singular():
    with pytest.raises(SingularSystemError):
        ridge_solve(np.zeros((2, 2)), np.ones(2))
    with pytest.raises(SingularSystemError):
        ridge_solve_batch(np.zeros((1, 2, 2)), np.ones((1, 2)))


def test_cg_identity_one_step():
    rhs = np.arange(1.0, 6.0)
    res = conjugate_gradient(np.eye(5), rhs)
    assert res.iterations == 1 and res.converged
    np.testing.assert_allclose(res.x, rhs)


def test_cg_diagonal_matches_direct():
    a = np.diag(np.arange(1.0, 11.0))
    res = conjugate_gradient(a, np.ones(10), tol=1e-10)
    np.testing.assert_allclose(res.x, 1.0 / np.arange(1.0, 11.0), rtol=1e-8)


def test_cg_exact_start_takes_no_iterations():
    rng = np.random.default_rng(2)
    a = _random_spd(rng, 12)
    b = rng.normal(size=12)
    res = conjugate_gradient(a, b, x0=np.linalg.solve(a, b))
    assert res.iterations == 0 and res.residual <= 1e-6


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 200), pre=st.booleans())
def test_cg_matches_dense_oracle(seed, n, pre):
    rng = np.random.default_rng(seed)
    a = _random_spd(rng, n)
    b = rng.normal(size=n)
    op = LinearOperator(n, lambda v: a @ v, np.diag(a).copy())
    res = conjugate_gradient(op, b, tol=1e-10, max_iter=1000, precondition=pre)
    exact = np.linalg.solve(a, b)
    assert np.linalg.norm(res.x - exact) <= 1e-6 * np.linalg.norm(exact)


def test_linear_operator_is_linear():
    rng = np.random.default_rng(5)
    m = rng.normal(size=(7, 7))
    op = LinearOperator(7, lambda v: m @ v)
    u, v = rng.normal(size=7), rng.normal(size=7)
    np.testing.assert_allclose(op @ (2 * u - 3 * v), 2 * (op @ u) - 3 * (op @ v), atol=1e-10)


def test_cg_reports_non_convergence():
    a = np.diag(np.logspace(0, 6, 50))
    res = conjugate_gradient(a, np.ones(50), tol=1e-14, max_iter=3)
    assert not res.converged and res.iterations == 3


def test_cg_errors():
    with pytest.raises(NonFiniteError):
        conjugate_gradient(np.array([[np.nan]]), np.ones(1))
    with pytest.raises(DivergenceError):
        conjugate_gradient(-np.eye(3), np.ones(3))
    with pytest.raises(ValueError):
        conjugate_gradient(np.eye(2), np.ones(2), tol=0)
