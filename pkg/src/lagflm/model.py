"""Lag historical functional linear model: estimation and prediction.

The response at time ``t`` depends on the dense predictor over
``[t - d12, t - d11]`` and on the sparse predictor over ``[t - d22, t - d21]``.
Each coefficient surface is expanded in a B-spline basis on its lag window, and
the time-varying basis coefficients solve a ridge system assembled from
smoothed covariance surfaces.

Estimation is split in two stages. :func:`estimate_covariances` does all the
smoothing, which depends on the data only. :func:`fit_from_estimates` turns the
surfaces into coefficients for one choice of lag windows and ridge penalties and
is cheap, so lag/penalty searches reuse a single set of estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .basis import BasisSystem, basis_at_nodes, eval_basis, make_bspline_basis
from .errors import (
    ConfigError,
    NumericError,
    OutOfDomainError,
    OutOfValidRangeError,
    ShapeError,
)
from .fpca import (
    DEFAULT_FVE,
    Eigensystem,
    blup_scores,
    eigendecompose,
    reconstruct_curve,
    select_truncation,
)
from .smoothing import (
    CovarianceSurface,
    DenseFunctionalPanel,
    SmoothingConfig,
    SparseFunctionalSample,
    center_panel,
    cross_covariance,
    dense_covariance,
    estimate_noise_variance,
    interp_rows,
    local_linear_1d,
    local_linear_operator,
    pooled,
    sparse_covariance,
)


@dataclass(frozen=True)
class LagWindow:
    lower: float
    upper: float

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if not (0.0 <= lo < hi <= 1.0):
            raise ConfigError(f"lag window must satisfy 0 <= lower < upper <= 1, got [{lo}, {hi}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def of(cls, w) -> "LagWindow":
        return w if isinstance(w, LagWindow) else cls(*w)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def as_tuple(self) -> Tuple[float, float]:
        return (self.lower, self.upper)

    def __str__(self):
        return f"[{self.lower:g},{self.upper:g}]"


@dataclass(frozen=True)
class ModelConfig:
    """Discretization and smoothing settings shared by fitting and prediction."""

    degree: int = 4
    interior_knots: int = 10
    quadrature_nodes: int = 30
    eval_grid_size: int = 100
    surface_grid_size: int = 100
    fve: float = DEFAULT_FVE
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)

    def basis(self, lags: LagWindow) -> BasisSystem:
        return make_bspline_basis(self.degree, self.interior_knots, lags.as_tuple())


@dataclass(frozen=True)
class FunctionalDataset:
    """Response, dense predictor and sparse predictor for the same subjects, in the same order."""

    y: Tuple[SparseFunctionalSample, ...]
    x1: DenseFunctionalPanel
    x2: Tuple[SparseFunctionalSample, ...]

    def __post_init__(self):
        object.__setattr__(self, "y", tuple(self.y))
        object.__setattr__(self, "x2", tuple(self.x2))
        ids_y = tuple(s.subject_id for s in self.y)
        ids_2 = tuple(s.subject_id for s in self.x2)
        if not (ids_y == tuple(self.x1.subject_ids) == ids_2):
            raise ShapeError("y, x1 and x2 must list the same subjects in the same order")
        if len(set(ids_y)) != len(ids_y):
            raise ShapeError("duplicate subject identifiers")

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def subject_ids(self) -> Tuple[str, ...]:
        return tuple(s.subject_id for s in self.y)

    def subset(self, rows) -> "FunctionalDataset":
        rows = [int(i) for i in rows]
        return FunctionalDataset(
            tuple(self.y[i] for i in rows),
            self.x1.subset(rows),
            tuple(self.x2[i] for i in rows),
        )


@dataclass(frozen=True)
class SurfaceSet:
    """The five covariance surfaces feeding the ridge system.

    ``c1y`` and ``c2y`` are indexed (predictor time, response time).
    """

    c1: CovarianceSurface
    c2: CovarianceSurface
    c12: CovarianceSurface
    c1y: CovarianceSurface
    c2y: CovarianceSurface


@dataclass(frozen=True)
class InducedCovariances:
    t: float
    C11: np.ndarray
    C12: np.ndarray
    C21: np.ndarray
    C22: np.ndarray
    C1Y: np.ndarray
    C2Y: np.ndarray


@dataclass(frozen=True)
class CovarianceEstimates:
    """Everything estimated from data before lags and penalties are chosen."""

    n: int
    surfaces: SurfaceSet
    y_grid: np.ndarray
    intercept: np.ndarray
    x1_grid: np.ndarray
    x1_mean: np.ndarray
    x2_grid: np.ndarray
    x2_mean: np.ndarray
    eigensystem2: Eigensystem
    truncation: int
    recovery_bandwidth: float
    smoothing: SmoothingConfig

    @property
    def response_range(self) -> Tuple[float, float]:
        return float(self.y_grid[0]), float(self.y_grid[-1])

    def intercept_at(self, t) -> np.ndarray:
        return interp_rows(self.y_grid, self.intercept, np.asarray(t, float))

    @property
    def dense_recovery_config(self) -> SmoothingConfig:
        return replace(self.smoothing, bandwidth_1d=self.recovery_bandwidth)


@dataclass(frozen=True)
class ModelFit:
    """Fitted coefficients ``b1(t)``, ``b2(t)`` on ``eval_grid`` plus the estimates used."""

    estimates: CovarianceEstimates
    basis1: BasisSystem
    basis2: BasisSystem
    lags1: LagWindow
    lags2: LagWindow
    rho: Tuple[float, float]
    eval_grid: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    quadrature_nodes: int = 30

    @property
    def valid_interval(self) -> Tuple[float, float]:
        return float(self.eval_grid[0]), float(self.eval_grid[-1])

    @property
    def intercept(self) -> np.ndarray:
        return self.estimates.intercept_at(self.eval_grid)

    @property
    def eigensystem2(self) -> Eigensystem:
        return self.estimates.eigensystem2

    @property
    def dense_recovery_config(self) -> SmoothingConfig:
        return self.estimates.dense_recovery_config

    def check_times(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        lo, hi = self.valid_interval
        bad = (t < lo - 1e-12) | (t > hi + 1e-12)
        if bad.any():
            raise OutOfValidRangeError(
                f"t={t[bad].ravel()[0]!r} outside valid interval [{lo:.6g}, {hi:.6g}] "
                f"(max upper lag {max(self.lags1.upper, self.lags2.upper):g})"
            )
        return t

    def coefficients_at(self, t) -> Tuple[np.ndarray, np.ndarray]:
        """Linearly interpolated ``b1(t)``, ``b2(t)``; shapes (len(t), K1) and (len(t), K2)."""
        t = self.check_times(np.atleast_1d(t))
        return (
            interp_rows(self.eval_grid, self.b1.T, t).T,
            interp_rows(self.eval_grid, self.b2.T, t).T,
        )


# --------------------------------------------------------------------------
# estimation


def estimate_intercept(
    response: Sequence[SparseFunctionalSample], cfg: Optional[SmoothingConfig], eval_grid
) -> np.ndarray:
    """Pooled local linear smooth of the responses."""
    t, v = pooled(response)
    if t.size == 0:
        raise ValueError("no responses to smooth")
    return local_linear_1d(t, v, eval_grid, cfg)


def _center_samples(samples, mean_fn) -> List[SparseFunctionalSample]:
    return [s.with_values(s.values - mean_fn(s.times)) for s in samples]


def estimate_covariances(
    data: FunctionalDataset, cfg: Optional[ModelConfig] = None
) -> CovarianceEstimates:
    """Smooth means, the five covariance surfaces and the sparse-predictor FPCA."""
    cfg = cfg or ModelConfig()
    sm = cfg.smoothing
    if data.n < 2:
        raise ValueError("fitting needs at least two subjects")
    G = cfg.surface_grid_size

    y_times, y_vals = pooled(data.y)
    y_grid = np.linspace(y_times.min(), y_times.max(), G)
    intercept = local_linear_1d(y_times, y_vals, y_grid, sm)
    y_center = local_linear_1d(y_times, y_vals, y_times, sm)
    yc, off = [], 0
    for s in data.y:
        yc.append(s.with_values(s.values - y_center[off : off + len(s)]))
        off += len(s)

    x1c, x1_mean = center_panel(data.x1)

    x2_grid = np.linspace(0.0, 1.0, G)
    x2_times, x2_vals = pooled(data.x2)
    x2_mean = local_linear_1d(x2_times, x2_vals, x2_grid, sm)
    x2_at_obs = local_linear_1d(x2_times, x2_vals, x2_times, sm)
    x2c, off = [], 0
    for s in data.x2:
        x2c.append(s.with_values(s.values - x2_at_obs[off : off + len(s)]))
        off += len(s)

    c1 = dense_covariance(x1c, sm)
    c2 = sparse_covariance(x2c, sm, x2_grid)
    c12 = cross_covariance(x1c, x2c, sm, x2_grid, x2_grid)
    c1y = cross_covariance(x1c, yc, sm, x2_grid, y_grid)
    c2y = cross_covariance(x2c, yc, sm, x2_grid, y_grid)

    noise = estimate_noise_variance(c2.raw_diagonal, c2.signal_diagonal, x2_grid)
    eig = eigendecompose(c2, noise)
    L = select_truncation(eig, cfg.fve)

    g1 = data.x1.grid
    h_rec = sm.bandwidth_curve(g1[-1] - g1[0], data.x1.values.size)
    return CovarianceEstimates(
        n=data.n,
        surfaces=SurfaceSet(c1, c2, c12, c1y, c2y),
        y_grid=y_grid,
        intercept=intercept,
        x1_grid=g1.copy(),
        x1_mean=x1_mean,
        x2_grid=x2_grid,
        x2_mean=x2_mean,
        eigensystem2=eig,
        truncation=L,
        recovery_bandwidth=float(h_rec),
        smoothing=sm,
    )


def _check_t_range(t: np.ndarray, basis1: BasisSystem, basis2: BasisSystem):
    upper = max(basis1.interval[1], basis2.interval[1])
    bad = (t < upper - 1e-12) | (t > 1.0 + 1e-12)
    if bad.any():
        raise OutOfValidRangeError(
            f"t={t[bad][0]!r} outside the valid interval [{upper:g}, 1] set by the max upper lag"
        )


def _induced_blocks(
    surfaces: SurfaceSet,
    basis1: BasisSystem,
    basis2: BasisSystem,
    t: np.ndarray,
    nodes: int,
):
    """Stacked induced covariances at every ``t``: (T,K1,K1), (T,K1,K2), (T,K2,K2), (T,K1), (T,K2)."""
    t = np.asarray(t, float)
    _check_t_range(t, basis1, basis2)
    r1, B1 = basis_at_nodes(basis1, nodes)
    r2, B2 = basis_at_nodes(basis2, nodes)
    G1 = r1.weights[:, None] * B1
    G2 = r2.weights[:, None] * B2
    a1 = t[:, None] - r1.nodes[None, :]
    a2 = t[:, None] - r2.nodes[None, :]

    P11 = surfaces.c1(a1[:, :, None], a1[:, None, :])
    P22 = surfaces.c2(a2[:, :, None], a2[:, None, :])
    P12 = surfaces.c12(a1[:, :, None], a2[:, None, :])
    P1y = surfaces.c1y(a1, t[:, None])
    P2y = surfaces.c2y(a2, t[:, None])
    C11 = np.einsum("ak,tab,bl->tkl", G1, P11, G1, optimize=True)
    C22 = np.einsum("ak,tab,bl->tkl", G2, P22, G2, optimize=True)
    C12 = np.einsum("ak,tab,bl->tkl", G1, P12, G2, optimize=True)
    C11 = 0.5 * (C11 + C11.transpose(0, 2, 1))
    C22 = 0.5 * (C22 + C22.transpose(0, 2, 1))
    return C11, C12, C22, P1y @ G1, P2y @ G2


def induced_covariance_matrices(
    surfaces: SurfaceSet,
    basis1: BasisSystem,
    basis2: BasisSystem,
    t: float,
    nodes: int = 30,
) -> InducedCovariances:
    """Covariances of the basis-induced predictors at a single response time ``t``."""
    C11, C12, C22, c1, c2 = _induced_blocks(surfaces, basis1, basis2, np.array([t]), nodes)
    return InducedCovariances(
        float(t), C11[0], C12[0], C12[0].T.copy(), C22[0], c1[0], c2[0]
    )


def ridge_system(
    C11, C12, C22, rho: Tuple[float, float], n: int
) -> np.ndarray:
    """Stacked ``[[C11, C12], [C21, C22]] + diag(rho1/n, rho2/n)``.

    The covariance part is first projected onto the positive semidefinite cone,
    which smoothing alone does not guarantee.
    """
    k1 = C11.shape[-1]
    top = np.concatenate([C11, C12], axis=-1)
    bot = np.concatenate([np.swapaxes(C12, -1, -2), C22], axis=-1)
    A = np.concatenate([top, bot], axis=-2)
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    lam, V = np.linalg.eigh(A)
    A = (V * np.clip(lam, 0.0, None)[..., None, :]) @ np.swapaxes(V, -1, -2)
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    pen = np.full(A.shape[-1], rho[1] / n)
    pen[:k1] = rho[0] / n
    idx = np.arange(A.shape[-1])
    A[..., idx, idx] += pen
    return A


def _spd_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"regularized system is not positive definite: {exc}") from exc
    y = np.linalg.solve(L, b[..., None])
    return np.linalg.solve(np.swapaxes(L, -1, -2), y)[..., 0]


def _check_rho(rho) -> Tuple[float, float]:
    r1, r2 = (float(r) for r in rho)
    if not (r1 > 0 and r2 > 0 and np.isfinite(r1) and np.isfinite(r2)):
        raise ConfigError(f"ridge parameters must be positive, got {rho!r}")
    return r1, r2


class _InducedSystem:
    """Induced covariance blocks for one pair of lag windows, reusable across penalties."""

    def __init__(self, surfaces, basis1, basis2, eval_grid, nodes):
        self.basis1, self.basis2 = basis1, basis2
        self.eval_grid = eval_grid
        C11, C12, C22, c1, c2 = _induced_blocks(surfaces, basis1, basis2, eval_grid, nodes)
        if not all(np.all(np.isfinite(x)) for x in (C11, C12, C22, c1, c2)):
            raise NumericError("non-finite induced covariances")
        self.blocks = (C11, C12, C22)
        self.rhs = np.concatenate([c1, c2], axis=-1)
        self._psd = None

    def solve(self, rho, n):
        if self._psd is None:
            # PSD projection is penalty independent; rho=(0, 0) adds nothing
            self._psd = ridge_system(*self.blocks, (0.0, 0.0), 1)
        k1 = self.basis1.size
        A = self._psd.copy()
        idx = np.arange(A.shape[-1])
        pen = np.full(A.shape[-1], rho[1] / n)
        pen[:k1] = rho[0] / n
        A[..., idx, idx] += pen
        b = _spd_solve(A, self.rhs)
        return b[:, :k1], b[:, k1:]


def solve_coefficients(
    surfaces: SurfaceSet,
    basis1: BasisSystem,
    basis2: BasisSystem,
    rho,
    n: int,
    eval_grid,
    nodes: int = 30,
) -> Tuple[np.ndarray, np.ndarray]:
    """Ridge solutions ``b1(t)``, ``b2(t)`` at each time of ``eval_grid``."""
    rho = _check_rho(rho)
    system = _InducedSystem(surfaces, basis1, basis2, np.asarray(eval_grid, float), nodes)
    return system.solve(rho, n)


def valid_interval(est: CovarianceEstimates, lags1: LagWindow, lags2: LagWindow):
    """Times with full predictor history that also lie inside the observed response range."""
    y_lo, y_hi = est.response_range
    lo = max(lags1.upper, lags2.upper, y_lo)
    hi = min(1.0, y_hi)
    if not lo < hi:
        raise ConfigError(
            f"empty valid interval: max upper lag {max(lags1.upper, lags2.upper):g} "
            f"leaves nothing of the response range [{y_lo:g}, {y_hi:g}]"
        )
    return lo, hi


def fit_from_estimates(
    est: CovarianceEstimates,
    lags1,
    lags2,
    rho,
    cfg: Optional[ModelConfig] = None,
    _system: Optional[_InducedSystem] = None,
) -> ModelFit:
    cfg = cfg or ModelConfig()
    lags1, lags2 = LagWindow.of(lags1), LagWindow.of(lags2)
    rho = _check_rho(rho)
    if _system is None:
        lo, hi = valid_interval(est, lags1, lags2)
        grid = np.linspace(lo, hi, cfg.eval_grid_size)
        _system = _InducedSystem(
            est.surfaces, cfg.basis(lags1), cfg.basis(lags2), grid, cfg.quadrature_nodes
        )
    b1, b2 = _system.solve(rho, est.n)
    return ModelFit(
        estimates=est,
        basis1=_system.basis1,
        basis2=_system.basis2,
        lags1=lags1,
        lags2=lags2,
        rho=rho,
        eval_grid=_system.eval_grid,
        b1=b1,
        b2=b2,
        quadrature_nodes=cfg.quadrature_nodes,
    )


def fit(
    y: Sequence[SparseFunctionalSample],
    x1: DenseFunctionalPanel,
    x2: Sequence[SparseFunctionalSample],
    lags1,
    lags2,
    rho,
    cfg: Optional[ModelConfig] = None,
) -> ModelFit:
    """Estimate the model for given lag windows and ridge parameters."""
    data = FunctionalDataset(tuple(y), x1, tuple(x2))
    est = estimate_covariances(data, cfg)
    return fit_from_estimates(est, lags1, lags2, rho, cfg)


# --------------------------------------------------------------------------
# direct penalized least squares on a common response grid


def ridge_coefficients(Z: np.ndarray, Y: np.ndarray, penalties) -> np.ndarray:
    """Minimizer of ``|Y - Z b|^2 + sum_k penalties[k] * b_k^2``."""
    Z = np.atleast_2d(np.asarray(Z, float))
    Y = np.asarray(Y, float)
    A = Z.T @ Z + np.diag(np.asarray(penalties, float))
    return np.linalg.solve(A, Z.T @ Y)


def induced_from_curves(curves: np.ndarray, grid, basis: BasisSystem, t, nodes: int = 30):
    """Basis-weighted integrals of each curve's past: shape (n_curves, len(t), K)."""
    rule, B = basis_at_nodes(basis, nodes)
    G = rule.weights[:, None] * B
    args = np.asarray(t, float)[:, None] - rule.nodes[None, :]
    vals = interp_rows(np.asarray(grid, float), np.atleast_2d(curves), args)
    return vals @ G


def fit_common_grid_oracle(
    y: np.ndarray,
    t0,
    x1: np.ndarray,
    x2: np.ndarray,
    grid,
    lags1,
    lags2,
    rho,
    cfg: Optional[ModelConfig] = None,
) -> np.ndarray:
    """Penalized least squares solution at each common response time.

    ``y`` is n-by-T on times ``t0``; ``x1`` and ``x2`` are n-by-m curves on
    ``grid``. Returns the stacked coefficient vectors, shape (T, K1 + K2).
    """
    cfg = cfg or ModelConfig()
    lags1, lags2 = LagWindow.of(lags1), LagWindow.of(lags2)
    r1, r2 = _check_rho(rho)
    t0 = np.asarray(t0, float)
    b1, b2 = cfg.basis(lags1), cfg.basis(lags2)
    _check_t_range(t0, b1, b2)
    Z1 = induced_from_curves(x1, grid, b1, t0, cfg.quadrature_nodes)
    Z2 = induced_from_curves(x2, grid, b2, t0, cfg.quadrature_nodes)
    pen = np.concatenate([np.full(b1.size, r1), np.full(b2.size, r2)])
    Y = np.asarray(y, float)
    out = np.empty((t0.size, b1.size + b2.size))
    for j in range(t0.size):
        Z = np.concatenate([Z1[:, j], Z2[:, j]], axis=1)
        out[j] = ridge_coefficients(Z, Y[:, j], pen)
    return out


def empirical_surfaces(y: np.ndarray, t0, x1: np.ndarray, x2: np.ndarray, grid) -> SurfaceSet:
    """Unsmoothed, uncentered sample covariances of fully observed curves."""
    n = y.shape[0]
    g = np.asarray(grid, float)
    t0 = np.asarray(t0, float)

    def surf(a, b, ga, gb):
        return CovarianceSurface(ga.copy(), gb.copy(), a.T @ b / n)

    return SurfaceSet(
        c1=surf(x1, x1, g, g),
        c2=surf(x2, x2, g, g),
        c12=surf(x1, x2, g, g),
        c1y=surf(x1, y, g, t0),
        c2y=surf(x2, y, g, t0),
    )


# --------------------------------------------------------------------------
# coefficient surfaces and prediction


def coefficient_surface(m: ModelFit, which: int, s_grid, t_grid) -> np.ndarray:
    """``beta_hat(s, t)`` for predictor 1 or 2 tabulated as (len(s_grid), len(t_grid))."""
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    basis = m.basis1 if which == 1 else m.basis2
    s = np.asarray(s_grid, float)
    lo, hi = basis.interval
    if np.any((s < lo) | (s > hi)):
        raise OutOfDomainError(f"s outside lag window [{lo:g}, {hi:g}]")
    b1, b2 = m.coefficients_at(np.asarray(t_grid, float))
    b = b1 if which == 1 else b2
    return eval_basis(basis, s) @ b.T


@dataclass(frozen=True)
class RecoveredCurves:
    """Centered predictor trajectories recovered for a set of subjects."""

    x1_grid: np.ndarray
    x1: np.ndarray
    x2_grid: np.ndarray
    x2: np.ndarray


def recover_dense(est: CovarianceEstimates, times, values) -> np.ndarray:
    """Centered local linear reconstruction of dense curves on ``est.x1_grid``.

    ``values`` is (k, len(times)); all curves share ``times``.
    """
    times = np.asarray(times, float)
    vals = np.atleast_2d(np.asarray(values, float))
    mean = np.interp(times, est.x1_grid, est.x1_mean)
    S = local_linear_operator(
        times, est.x1_grid, est.recovery_bandwidth, est.smoothing.kernel
    )
    return (vals - mean) @ S.T


def recover_sparse(est: CovarianceEstimates, sample: SparseFunctionalSample) -> np.ndarray:
    """Centered FPCA reconstruction of a sparse curve on ``est.x2_grid``."""
    centered = sample.with_values(sample.values - np.interp(sample.times, est.x2_grid, est.x2_mean))
    scores = blup_scores(est.eigensystem2, centered, est.truncation)
    return reconstruct_curve(est.eigensystem2, scores, est.x2_grid)


def recover_curves(
    est: CovarianceEstimates, x1: DenseFunctionalPanel, x2: Sequence[SparseFunctionalSample]
) -> RecoveredCurves:
    r1 = recover_dense(est, x1.grid, x1.values)
    r2 = np.array([recover_sparse(est, s) for s in x2]).reshape(len(x2), est.x2_grid.size)
    return RecoveredCurves(est.x1_grid, r1, est.x2_grid, r2)


def _predict_from_design(m: ModelFit, t, z1, z2):
    b1, b2 = m.coefficients_at(t)
    return m.estimates.intercept_at(t) + np.sum(b1 * z1, axis=1) + np.sum(b2 * z2, axis=1)


def predict(
    m: ModelFit,
    x1_obs: SparseFunctionalSample,
    x2_obs: SparseFunctionalSample,
    eval_times,
) -> np.ndarray:
    """Predicted response of a new subject at ``eval_times`` (intercept included)."""
    t = m.check_times(np.atleast_1d(np.asarray(eval_times, float)))
    est = m.estimates
    c1 = recover_dense(est, x1_obs.times, x1_obs.values)
    c2 = recover_sparse(est, x2_obs)
    z1 = induced_from_curves(c1, est.x1_grid, m.basis1, t, m.quadrature_nodes)[0]
    z2 = induced_from_curves(c2[None, :], est.x2_grid, m.basis2, t, m.quadrature_nodes)[0]
    return _predict_from_design(m, t, z1, z2)
