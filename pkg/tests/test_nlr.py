import numpy as np
import pytest
from scipy import sparse

from nlrinterp.image import DimensionError, PatchSystem
from nlrinterp.nlr import (
    NlrOperator, apply_nlr, assemble, build_nlr_operator, fit_batch,
    fit_patch_regression, kernel_weights, regression_objective,
)
from nlrinterp.search import SearchConfig


def _smooth_image(n, seed=0):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:n, 0:n] / n
    img = 0.5 + 0.2 * np.sin(6 * xx + 2 * yy) + 0.15 * np.cos(5 * yy * (1 + xx))
    return np.clip(img + 0.01 * rng.normal(size=img.shape), 0, 1)


def _numeric_grad(f, w, h=1e-6):
    g = np.zeros_like(w)
    for k in range(len(w)):
        e = np.zeros_like(w)
        e[k] = h
        g[k] = (f(w + e) - f(w - e)) / (2 * h)
    return g


def test_kernel_center_and_corner():
    kw = kernel_weights(5, 1.7)
    assert kw[12] == 1.0 and kw.max() == 1.0
    np.testing.assert_allclose(kw, kw[::-1])
    assert kernel_weights(3, 1.0)[0] == pytest.approx(np.exp(-2), abs=1e-12)
    assert kernel_weights(3, 1.0)[0] == pytest.approx(0.13534, abs=1e-5)
    np.testing.assert_allclose(kernel_weights(5, 1e6), 1.0, atol=1e-6)


def test_kernel_rejects_even():
    with pytest.raises(ValueError):
        kernel_weights(4, 1.0)


def test_self_representation():
    rng = np.random.default_rng(0)
    t = rng.random(25)
    kw = kernel_weights(5, 1.7)
    a, b = fit_patch_regression(t, t[None], kw, chi=1e-9)
    assert a[0] == pytest.approx(1.0, abs=1e-6)
    assert b == pytest.approx(0.0, abs=1e-6)


def test_zero_neighbors_give_weighted_mean_bias():
    rng = np.random.default_rng(1)
    t = rng.random(25)
    kw = kernel_weights(5, 1.7)
    chi = 0.01
    a, b = fit_patch_regression(t, np.zeros((3, 25)), kw, chi)
    assert np.all(a == 0)
    # one-dimensional normal equation (sum kw + chi) b = kw . t
    assert b == pytest.approx(kw @ t / (kw.sum() + chi), rel=1e-12)
    assert b == pytest.approx(kw @ t / kw.sum(), rel=2 * chi / kw.sum())


def test_stationarity_random_instance():
    rng = np.random.default_rng(2)
    t, nb = rng.random(25), rng.random((15, 25))
    kw = kernel_weights(5, 1.7)
    a, b = fit_patch_regression(t, nb, kw, 0.01)
    w = np.append(a, b)
    g = _numeric_grad(lambda v: regression_objective(v, t, nb, kw, 0.01), w)
    assert np.linalg.norm(g) <= 1e-6


def test_fit_errors():
    kw = kernel_weights(5, 1.7)
    with pytest.raises(ValueError):
        fit_patch_regression(np.zeros(25), np.zeros((1, 25)), kw, 0.0)
    with pytest.raises(DimensionError):
        fit_patch_regression(np.zeros(25), np.zeros((1, 9)), kw, 0.1)


def test_batch_matches_single():
    rng = np.random.default_rng(3)
    t, nb = rng.random((4, 25)), rng.random((4, 6, 25))
    kw = kernel_weights(5, 1.7)
    om = fit_batch(t, nb, kw, 0.05)
    for i in range(4):
        a, b = fit_patch_regression(t[i], nb[i], kw, 0.05)
        np.testing.assert_allclose(om[i], np.append(a, b), rtol=1e-9, atol=1e-12)


def test_ridge_monotone():
    rng = np.random.default_rng(4)
    t, nb = rng.random(25), rng.random((15, 25))
    kw = kernel_weights(5, 1.7)
    norms = [np.linalg.norm(np.append(*fit_patch_regression(t, nb, kw, chi)))
             for chi in (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


def test_constant_image_exact_fit():
    img = np.full((16, 16), 0.6)
    ps = PatchSystem(img.shape)
    op = build_nlr_operator(img, ps, SearchConfig(window=11), m=15, chi=1e-8)
    np.testing.assert_allclose(op.apply(img), 0.6, atol=1e-6)


def test_border_rows_are_identity():
    img = _smooth_image(16)
    ps = PatchSystem(img.shape)
    op = build_nlr_operator(img, ps, SearchConfig(window=11), m=8)
    out = op.apply(img)
    band = np.ones(img.shape, bool)
    band[2:-2, 2:-2] = False
    np.testing.assert_array_equal(out[band], img[band])
    ones = np.ones(img.shape)
    row_sums = np.asarray(op.matrix.sum(axis=1)).ravel() + op.bias
    np.testing.assert_allclose(op.apply(ones).ravel(), row_sums, atol=1e-12)
    assert np.max(np.diff(op.matrix.indptr)) <= 8


def test_self_prediction_on_natural_crop():
    img = _smooth_image(32, seed=5)
    ps = PatchSystem(img.shape)
    op = build_nlr_operator(img, ps, SearchConfig())
    assert np.linalg.norm(op.apply(img) - img) / np.linalg.norm(img) <= 0.05


def test_rebuild_is_bit_identical():
    img = _smooth_image(20, seed=6)
    ps = PatchSystem(img.shape)
    a = build_nlr_operator(img, ps, SearchConfig(window=15))
    b = build_nlr_operator(img, ps, SearchConfig(window=15))
    assert (a.matrix != b.matrix).nnz == 0
    np.testing.assert_array_equal(a.bias, b.bias)


def test_only_mask_restricts_rows():
    img = _smooth_image(20, seed=7)
    ps = PatchSystem(img.shape)
    mask = np.zeros(img.shape, bool)
    mask[::2, ::2] = True
    full = build_nlr_operator(img, ps, SearchConfig(window=15))
    part = build_nlr_operator(img, ps, SearchConfig(window=15), only=mask)
    rows = np.flatnonzero(mask)
    assert (full.matrix[rows] != part.matrix[rows]).nnz == 0
    np.testing.assert_array_equal(full.bias[rows], part.bias[rows])
    other = np.flatnonzero(~mask)
    assert (part.matrix[other] != sparse.identity(img.size, format="csr")[other]).nnz == 0


def test_apply_examples_and_adjoint():
    shape = (6, 5)
    ident = NlrOperator.identity(shape)
    img = np.random.default_rng(8).random(shape)
    np.testing.assert_array_equal(apply_nlr(ident, img), img)
    b = np.arange(30.0)
    zero = NlrOperator(sparse.csr_matrix((30, 30)), b, shape)
    np.testing.assert_array_equal(zero.apply(img), b.reshape(shape))
    with pytest.raises(DimensionError):
        zero.apply(np.zeros((5, 6)))

    rng = np.random.default_rng(9)
    big = _smooth_image(24, seed=9)
    op = build_nlr_operator(big, PatchSystem(big.shape), SearchConfig(window=13))
    u, v = rng.normal(size=big.shape), rng.normal(size=big.shape)
    lhs = np.sum(op.apply_linear(u) * v)
    assert lhs == pytest.approx(np.sum(u * op.adjoint(v)), rel=1e-10)
    s, t = 1.7, -0.3
    np.testing.assert_allclose(op.apply(s * u + t * v) - op.bias.reshape(big.shape),
                               s * (op.apply(u) - op.bias.reshape(big.shape))
                               + t * (op.apply(v) - op.bias.reshape(big.shape)), atol=1e-10)


def test_assemble_skips_missing_neighbors():
    omega = np.array([[0.5, 0.25, 0.1]])
    op = assemble((3, 3), np.array([4]), np.array([[0, -1]]), omega)
    assert op.matrix[4, 0] == 0.5 and op.matrix[4].nnz == 1
    assert op.bias[4] == 0.1
