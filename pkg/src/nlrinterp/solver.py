"""Weighted-encoding interpolation with a nonlocal linear regression model.

Outer loop, one pass per iteration ``s``:

1. From the current estimate ``x``: search similar patches, train one PCA
   sub-dictionary per patch, compute the nonlocal prior codes ``beta`` and
   fit the NLR operator ``x -> H x + b``.
2. Coding update: per coefficient, blend the analysis code of the current
   patch with ``beta`` using the reweighting coefficients ``eta``.
3. Image update: solve the augmented-Lagrangian normal equations

       [(DH)^T W (DH) + gamma sum R_i^T R_i + mu D^T D] x
           = (DH)^T W (y - D b) + gamma sum R_i^T z_i + mu D^T y + D^T f / 2

   by conjugate gradients, where ``z_i`` is the decoded patch.
4. Multiplier and penalty: ``f += mu (y - D x)``, ``mu *= rho``; residual
   weights ``w = exp(-c1 (255 r)^2)`` with ``r = y - D(H x + b)``.
5. Reweighting: ``eta = k2 / ((alpha - beta)^2 + eps)``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import dictionary as dct
from .bicubic import bicubic_upscale
from .image import PatchSystem, as_image, downsample, sample_mask
from .nlr import NlrOperator, assemble, fit_batch, kernel_weights
from .numerics import LinearOperator, conjugate_gradient
from .search import SearchConfig, dense_grid_shape, search_all, similarity_weights

log = logging.getLogger(__name__)


class SolverAbort(FloatingPointError):
    """Raised when a stage produces non-finite values."""

    def __init__(self, stage: str, iteration: int, detail: str = ""):
        self.stage = stage
        self.iteration = iteration
        msg = f"non-finite values in stage '{stage}' at iteration {iteration}"
        super().__init__(msg + (f": {detail}" if detail else ""))


@dataclass
class SolverConfig:
    gamma: float = 0.1
    eta_init: float = 1.2
    mu_init: float = 0.68
    rho: float = 1.1
    nlr_neighbors: int = 15
    prior_neighbors: int = 23
    train_samples: int = 60
    c1: float = 0.006
    # residuals are expressed in 8-bit grey levels inside the weighting
    c1_scale: float = 255.0
    k2: float | None = None
    epsilon: float = 1e-6
    iterations: int = 18
    cg_tol: float = 1e-6
    cg_max_iter: int = 400
    patch_size: int = 5
    stride: int = 1
    window: int = 31
    h1: float | None = None
    noise_sigma: float = 0.03
    sigma: float = 1.7
    chi: float = 1.0
    prior_include_self: bool = False
    verify: bool = False
    chunk: int = 4096

    def __post_init__(self):
        positive = ("gamma", "eta_init", "mu_init", "rho", "c1", "c1_scale",
                    "epsilon", "cg_tol", "sigma", "chi", "noise_sigma")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rho <= 1:
            raise ValueError("rho must exceed 1")
        if self.patch_size % 2 == 0:
            raise ValueError("patch_size must be odd")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.train_samples < 2:
            raise ValueError("train_samples must be >= 2")
        for name in ("nlr_neighbors", "prior_neighbors", "stride", "cg_max_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def bandwidth(self) -> float:
        if self.h1 is not None:
            return self.h1
        return 2.0 * self.patch_size ** 2 * self.noise_sigma ** 2

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SolverState:
    x: np.ndarray
    f: np.ndarray
    mu: float
    w: np.ndarray
    eta: np.ndarray
    alphas: np.ndarray | None = None
    betas: np.ndarray | None = None
    k2: float | None = None
    iteration: int = 0


@dataclass
class Analysis:
    """Everything the iteration derives from the current estimate."""

    codes: np.ndarray          # analysis codes of the current patches
    betas: np.ndarray
    alphas: np.ndarray         # coding update
    patches: np.ndarray        # decoded patches z_i
    op: NlrOperator
    dict_orthonormality: float = 0.0
    dict_diagonalization: float = 0.0


@dataclass
class IterationRecord:
    iteration: int
    consistency_inf: float
    consistency_l2: float
    objective: float = math.nan
    cg_iterations: int = 0
    cg_residual: float = 0.0
    cg_converged: bool = True
    clamped: int = 0
    kurtosis_residual: float = math.nan
    kurtosis_weighted: float = math.nan
    mu: float = math.nan
    wall_time: float = 0.0
    dict_orthonormality: float = math.nan
    dict_diagonalization: float = math.nan


@dataclass
class ConvergenceReport:
    config: dict
    factor: int
    records: list = field(default_factory=list)
    k2: float | None = None
    warnings: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"# factor={self.factor}"]
        lines += [f"# {k}={v}" for k, v in sorted(self.config.items())]
        if self.k2 is not None:
            lines.append(f"# k2={self.k2:.6g}")
        lines.append(f"{'iter':>4} {'|y-Dx|inf':>11} {'|y-Dx|2':>11} {'objective':>12} "
                     f"{'cg':>4} {'kurt(r)':>9} {'kurt(wr)':>9} {'time':>8}")
        for r in self.records:
            lines.append(
                f"{r.iteration:>4d} {r.consistency_inf:>11.4e} {r.consistency_l2:>11.4e} "
                f"{r.objective:>12.6g} {r.cg_iterations:>4d} {r.kurtosis_residual:>9.3f} "
                f"{r.kurtosis_weighted:>9.3f} {r.wall_time:>8.2f}")
        lines += [f"# warning: {w}" for w in self.warnings]
        return "\n".join(lines) + "\n"

    def to_keyvalue(self) -> str:
        lines = []
        for r in self.records:
            lines.append(" ".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}"
                                  for k, v in dataclasses.asdict(r).items()))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        from pathlib import Path
        path = Path(path)
        path.write_text(self.to_text())
        path.with_name(path.name + ".kv").write_text(self.to_keyvalue())


def initialize(y: np.ndarray, factor: int, cfg: SolverConfig) -> SolverState:
    y = as_image(y)
    x = bicubic_upscale(y, factor)
    system = PatchSystem(x.shape, cfg.patch_size, cfg.stride)
    return SolverState(
        x=x,
        f=np.zeros(y.size),
        mu=cfg.mu_init,
        w=np.ones(y.size),
        eta=np.full((system.count, cfg.patch_size ** 2), cfg.eta_init),
    )


def analyze(x: np.ndarray, system: PatchSystem, cfg: SolverConfig, eta: np.ndarray,
            mask: np.ndarray | None = None) -> Analysis:
    """Search, dictionary training, prior codes, coding update and NLR fit.

    Sub-dictionaries are consumed chunk by chunk and never stored.

    ``mask`` restricts the NLR rows to the given HR pixels (the sampled
    grid is all the data-fidelity term ever reads); other rows are identity.
    """
    p = cfg.patch_size
    d = p * p
    half = p // 2
    n_nb = max(cfg.train_samples - 1, cfg.prior_neighbors, cfg.nlr_neighbors)
    search = SearchConfig(cfg.window, n_nb, exclude_self=True)
    idx, dist = search_all(x, p, search, n_nb, system.row_origins, system.col_origins)
    _, nc = dense_grid_shape(x.shape, p)
    patches = np.lib.stride_tricks.sliding_window_view(x, (p, p)).reshape(-1, d)
    rr, cc = np.meshgrid(system.row_origins, system.col_origins, indexing="ij")
    q_dense = (rr * nc + cc).ravel()
    queries = patches[q_dense]
    missing = idx < 0
    # groups short of candidates (tiny images) fall back to the query itself
    idx_filled = np.where(missing, q_dense[:, None], idx)

    h1 = cfg.bandwidth
    n_train = cfg.train_samples - 1
    t = cfg.prior_neighbors
    codes = np.empty((system.count, d))
    betas = np.empty((system.count, d))
    alphas = np.empty((system.count, d))
    decoded = np.empty((system.count, d))
    ortho = diag_err = 0.0
    for lo in range(0, system.count, cfg.chunk):
        sl = slice(lo, lo + cfg.chunk)
        q = queries[sl]
        samples = np.concatenate([q[:, None, :], patches[idx_filled[sl, :n_train]]], axis=1)
        bases, means, _ = dct.train_batch(samples)
        if cfg.prior_include_self:
            nb = np.concatenate([q[:, None, :], patches[idx_filled[sl, :t - 1]]], axis=1)
            nd = np.concatenate([np.zeros((len(q), 1)), dist[sl, :t - 1]], axis=1)
        else:
            nb = patches[idx_filled[sl, :t]]
            nd = dist[sl, :t]
        weights = similarity_weights(nd, h1)
        xhat = np.einsum("bk,bkd->bd", weights, nb)
        codes[sl] = dct.code_batch(bases, means, q)
        betas[sl] = dct.code_batch(bases, means, xhat)
        alphas[sl] = update_codes(codes[sl], betas[sl], eta[sl], cfg.gamma)
        decoded[sl] = dct.decode_batch(bases, means, alphas[sl])
        if cfg.verify:
            eye = np.eye(d)
            ortho = max(ortho, np.max(np.abs(bases @ np.swapaxes(bases, -1, -2) - eye)),
                        np.max(np.abs(np.swapaxes(bases, -1, -2) @ bases - eye)))
            _, cov = dct._covariance(samples)
            rot = bases @ cov @ np.swapaxes(bases, -1, -2)
            off = rot - rot * eye
            diag_err = max(diag_err, np.max(np.abs(off)))

    # NLR rows: one per patch center, fitted only where the mask asks for it
    centers = (rr.ravel() + half) * x.shape[1] + (cc.ravel() + half)
    sel = np.ones(len(centers), dtype=bool) if mask is None else mask.ravel()[centers]
    m = cfg.nlr_neighbors
    nidx = idx[sel, :m]
    nmiss = nidx < 0
    nbr = patches[np.where(nmiss, 0, nidx)]
    nbr[nmiss] = 0.0
    omega = fit_batch(queries[sel], nbr, kernel_weights(p, cfg.sigma), cfg.chi)
    nbr_pix = np.where(nmiss, -1, (nidx // nc + half) * x.shape[1] + (nidx % nc + half))
    op = assemble(x.shape, centers[sel], nbr_pix, omega)
    return Analysis(codes, betas, alphas, decoded, op, ortho, diag_err)


def update_codes(codes, betas, eta, gamma: float) -> np.ndarray:
    """Per-coefficient minimizer of ``gamma (a - c)^2 + eta (a - beta)^2``."""
    ratio = eta / gamma
    return (codes + ratio * betas) / (1.0 + ratio)


def residual(y_flat, op: NlrOperator, x, sampled) -> np.ndarray:
    """``y - D(H x + b)`` as a flat LR vector."""
    return y_flat - (op.matrix[sampled] @ x.ravel() + op.bias[sampled])


def update_weights(r: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    return np.exp(-cfg.c1 * (cfg.c1_scale * r) ** 2)


def system_operator(op: NlrOperator, sampled, w, gamma, counts, mu, mask):
    """The SPD operator of the image update plus its diagonal."""
    dh = op.matrix[sampled]
    dht = dh.T.tocsr()
    diag = gamma * counts.ravel() + mu * mask.ravel()
    full_diag = diag + dht.multiply(dht) @ w

    def matvec(v):
        return dht @ (w * (dh @ v)) + diag * v

    return LinearOperator(len(diag), matvec, full_diag), dh, dht


def update_image(state: SolverState, y: np.ndarray, op: NlrOperator, aggregated,
                 counts, mask, cfg: SolverConfig, mu: float | None = None):
    """Solve the image-update normal equations warm-started from ``state.x``.

    Returns the CG result (unclamped solution in ``result.x``).
    """
    mu = state.mu if mu is None else mu
    sampled = np.flatnonzero(mask)
    a, dh, dht = system_operator(op, sampled, state.w, cfg.gamma, counts, mu, mask)
    y_flat = y.ravel()
    scatter = np.zeros(mask.size)
    scatter[sampled] = mu * y_flat + state.f / 2.0
    rhs = dht @ (state.w * (y_flat - op.bias[sampled])) + cfg.gamma * aggregated.ravel() + scatter
    return conjugate_gradient(a, rhs, state.x.ravel(), cfg.cg_tol, cfg.cg_max_iter,
                              precondition=True)


def update_multiplier_and_eta(state: SolverState, y: np.ndarray, factor: int,
                              cfg: SolverConfig) -> SolverState:
    """``f += mu (y - Dx)``, ``mu *= rho`` and the ``eta`` reweighting."""
    state.f = state.f + state.mu * (y - downsample(state.x, factor)).ravel()
    state.mu = state.mu * cfg.rho
    if state.alphas is not None and state.betas is not None:
        gap2 = (state.alphas - state.betas) ** 2
        if state.k2 is None:
            state.k2 = cfg.k2 if cfg.k2 is not None else \
                cfg.eta_init * (float(np.mean(gap2)) + cfg.epsilon)
        state.eta = state.k2 / (gap2 + cfg.epsilon)
    return state


def _finite(name, arr, s):
    if not np.all(np.isfinite(arr)):
        raise SolverAbort(name, s, f"{np.count_nonzero(~np.isfinite(arr))} bad entries")


def excess_kurtosis(v: np.ndarray) -> float:
    if v.size < 4 or np.all(v == v.flat[0]):
        return math.nan
    return float(stats.kurtosis(v, fisher=True, bias=True))


def interpolate(y: np.ndarray, factor: int, cfg: SolverConfig | None = None,
                callback=None):
    """Reconstruct an HR image from its directly down-sampled observation.

    Returns ``(x, report)``. ``callback(state, analysis, record)`` is invoked
    after every outer iteration when given.
    """
    cfg = cfg or SolverConfig()
    if factor < 1:
        raise ValueError("factor must be a positive integer")
    y = as_image(y)
    state = initialize(y, factor, cfg)
    system = PatchSystem(state.x.shape, cfg.patch_size, cfg.stride)
    mask = sample_mask(state.x.shape, factor)
    sampled = np.flatnonzero(mask)
    counts = system.counts()
    y_flat = y.ravel()
    report = ConvergenceReport(cfg.as_dict(), factor)

    r0 = y - downsample(state.x, factor)
    report.records.append(IterationRecord(0, float(np.max(np.abs(r0))),
                                          float(np.linalg.norm(r0)), mu=state.mu))
    for s in range(1, cfg.iterations + 1):
        t0 = time.perf_counter()
        an = analyze(state.x, system, cfg, state.eta, mask)
        for name in ("codes", "betas", "alphas", "patches"):
            _finite(name, getattr(an, name), s)
        _finite("nlr", an.op.matrix.data, s)
        alphas, z = an.alphas, an.patches
        aggregated, _ = system.aggregate(z)

        mu_used, w_used, eta_used = state.mu, state.w, state.eta
        res = update_image(state, y, an.op, aggregated, counts, mask, cfg)
        _finite("image", res.x, s)
        if not res.converged:
            report.warnings.append(
                f"iteration {s}: CG stopped at {res.iterations} iterations, "
                f"relative residual {res.residual:.2e}")
        x_new = res.x.reshape(state.x.shape)
        clamped = int(np.count_nonzero((x_new < 0) | (x_new > 1)))
        if clamped:
            log.debug("iteration %d: clamped %d pixels", s, clamped)
        state.x = np.clip(x_new, 0.0, 1.0)
        state.alphas, state.betas = alphas, an.betas

        r = residual(y_flat, an.op, state.x, sampled)
        state.w = update_weights(r, cfg)
        state = update_multiplier_and_eta(state, y, factor, cfg)
        _finite("multiplier", state.f, s)
        state.iteration = s

        objective = (np.sum(w_used * r ** 2)
                     + cfg.gamma * np.sum((system.extract_all(state.x) - z) ** 2)
                     + np.sum(eta_used * (alphas - an.betas) ** 2))
        cons = y - downsample(state.x, factor)
        rec = IterationRecord(
            iteration=s,
            consistency_inf=float(np.max(np.abs(cons))),
            consistency_l2=float(np.linalg.norm(cons)),
            objective=float(objective),
            cg_iterations=res.iterations,
            cg_residual=float(res.residual),
            cg_converged=res.converged,
            clamped=clamped,
            kurtosis_residual=excess_kurtosis(r),
            kurtosis_weighted=excess_kurtosis(np.sqrt(state.w) * r),
            mu=mu_used,
            wall_time=time.perf_counter() - t0,
            dict_orthonormality=an.dict_orthonormality if cfg.verify else math.nan,
            dict_diagonalization=an.dict_diagonalization if cfg.verify else math.nan,
        )
        report.records.append(rec)
        log.info("iteration %d: |y-Dx|inf=%.3e cg=%d time=%.1fs", s,
                 rec.consistency_inf, rec.cg_iterations, rec.wall_time)
        if callback is not None:
            callback(state, an, rec)

    report.k2 = state.k2
    _check_trends(report)
    return state.x, report


def _check_trends(report: ConvergenceReport) -> None:
    recs = report.records[1:]
    for prev, cur in zip(recs, recs[1:]):
        if cur.objective > prev.objective:
            report.warnings.append(
                f"objective increased at iteration {cur.iteration} "
                f"({prev.objective:.6g} -> {cur.objective:.6g})")
    tail = [r.consistency_inf for r in recs[-3:]]
    if any(b > a for a, b in zip(tail, tail[1:])):
        report.warnings.append("|y - Dx|inf increased within the final 3 iterations")
