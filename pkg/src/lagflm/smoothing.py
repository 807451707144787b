"""Kernel smoothers for mean curves and covariance surfaces.

All smoothers aggregate raw observations onto their distinct time locations
first (counts and value sums), so a local fit at every output point reduces to
a handful of dense matrix products against kernel weight tables.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    EmptyPairingError,
    NumericError,
    RankDeficientError,
    ShapeError,
    SingularDesignError,
)

log = logging.getLogger(__name__)

# Bandwidth multipliers (of the surface bandwidth) for the rotated diagonal fit.
DIAGONAL_ALONG = 2.0
DIAGONAL_ACROSS = 0.7

# More distinct times than this are snapped onto an equally spaced bin grid.
MAX_DISTINCT_TIMES = 1000


# --------------------------------------------------------------------------
# data containers


@dataclass(frozen=True)
class SparseFunctionalSample:
    """Irregular observations of one variable for one subject on [0, 1]."""

    subject_id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if t.size == 0 or t.size != v.size:
            raise ShapeError(
                f"subject {self.subject_id}: need matching, nonempty times and values"
            )
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise NumericError(f"subject {self.subject_id}: non-finite observation")
        if t.min() < 0.0 or t.max() > 1.0:
            raise ValueError(f"subject {self.subject_id}: times must lie in [0, 1]")
        if np.any(np.diff(t) <= 0):
            raise ValueError(f"subject {self.subject_id}: times must be strictly increasing")
        object.__setattr__(self, "subject_id", str(self.subject_id))
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.times.size

    def with_values(self, values) -> "SparseFunctionalSample":
        return SparseFunctionalSample(self.subject_id, self.times, values)


@dataclass(frozen=True)
class DenseFunctionalPanel:
    """Curves of ``n`` subjects sampled on one regular grid; ``values`` is n-by-m."""

    grid: np.ndarray
    values: np.ndarray
    subject_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float).reshape(-1)
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.shape[1] != g.size:
            raise ShapeError(f"values have {v.shape[1]} columns for a grid of {g.size}")
        if g.size > 2:
            step = np.diff(g)
            if np.any(step <= 0) or np.ptp(step) > 1e-9 * max(1.0, abs(step.mean())):
                raise ValueError("dense grid must be strictly increasing and equally spaced")
        if not np.all(np.isfinite(v)):
            raise NumericError("dense panel contains non-finite values")
        ids = tuple(str(s) for s in self.subject_ids) or tuple(
            str(i) for i in range(v.shape[0])
        )
        if len(ids) != v.shape[0]:
            raise ShapeError("subject_ids length does not match panel rows")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "subject_ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def subset(self, rows) -> "DenseFunctionalPanel":
        rows = np.asarray(rows, dtype=int)
        return DenseFunctionalPanel(
            self.grid, self.values[rows], tuple(self.subject_ids[i] for i in rows)
        )

    def as_samples(self) -> List[SparseFunctionalSample]:
        return [
            SparseFunctionalSample(sid, self.grid, row)
            for sid, row in zip(self.subject_ids, self.values)
        ]


@dataclass(frozen=True)
class CovarianceSurface:
    """Covariance tabulated on ``grid_s x grid_u``.

    ``raw_diagonal`` holds the smoothed same-index products (signal plus noise)
    and ``signal_diagonal`` a rotated off-diagonal fit of the variance function
    when the surface came from :func:`sparse_covariance`.
    """

    grid_s: np.ndarray
    grid_u: np.ndarray
    surface: np.ndarray
    raw_diagonal: Optional[np.ndarray] = None
    signal_diagonal: Optional[np.ndarray] = None
    meta: Dict = field(default_factory=dict, compare=False)

    @property
    def grid(self) -> np.ndarray:
        return self.grid_s

    @property
    def is_square(self) -> bool:
        return self.grid_s.shape == self.grid_u.shape and np.array_equal(
            self.grid_s, self.grid_u
        )

    def diagonal(self) -> np.ndarray:
        if not self.is_square:
            raise ShapeError("diagonal requested on a rectangular surface")
        return np.diag(self.surface).copy()

    def __call__(self, s, u) -> np.ndarray:
        """Bilinear interpolation; arguments broadcast against each other."""
        s, u = np.broadcast_arrays(np.asarray(s, float), np.asarray(u, float))
        i, fs = _locate(self.grid_s, s)
        j, fu = _locate(self.grid_u, u)
        C = self.surface
        top = (1.0 - fu) * C[i, j] + fu * C[i, j + 1]
        bot = (1.0 - fu) * C[i + 1, j] + fu * C[i + 1, j + 1]
        return (1.0 - fs) * top + fs * bot


def _locate(grid: np.ndarray, x: np.ndarray):
    if grid.size == 1:
        raise ShapeError("cannot interpolate on a single-point grid")
    idx = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
    frac = (x - grid[idx]) / (grid[idx + 1] - grid[idx])
    return idx, np.clip(frac, 0.0, 1.0)


def interp_rows(grid: np.ndarray, rows: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Linear interpolation of each row of ``rows`` (tabulated on ``grid``) at ``x``.

    Returns an array of shape ``rows.shape[:-1] + x.shape``.
    """
    idx, frac = _locate(grid, np.asarray(x, float))
    lo = rows[..., idx]
    hi = rows[..., idx + 1]
    return (1.0 - frac) * lo + frac * hi


# --------------------------------------------------------------------------
# configuration and kernels


def _epanechnikov(x):
    return np.where(np.abs(x) < 1.0, 0.75 * (1.0 - x * x), 0.0)


def _uniform(x):
    return np.where(np.abs(x) < 1.0, 0.5, 0.0)


def _biweight(x):
    return np.where(np.abs(x) < 1.0, (15.0 / 16.0) * (1.0 - x * x) ** 2, 0.0)


KERNELS = {"epanechnikov": _epanechnikov, "uniform": _uniform, "biweight": _biweight}


@dataclass(frozen=True)
class SmoothingConfig:
    """Bandwidths (``None`` selects the rule of thumb) and kernel name.

    The rule of thumb is ``auto_constant * range * N**(-1/5)`` for curves, with
    ``N`` the number of observations, and ``auto_constant * range * N**(-1/6)``
    per axis for surfaces, with ``N`` the number of raw products.
    """

    bandwidth_1d: Optional[float] = None
    bandwidth_2d: Optional[float] = None
    kernel: str = "epanechnikov"
    auto_constant: float = 1.0

    def __post_init__(self):
        for name in ("bandwidth_1d", "bandwidth_2d"):
            h = getattr(self, name)
            if h is not None and not (np.isfinite(h) and h > 0):
                raise ValueError(f"{name} must be positive, got {h!r}")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; choose from {sorted(KERNELS)}")
        if not self.auto_constant > 0:
            raise ValueError("auto_constant must be positive")

    @property
    def kernel_fn(self):
        return KERNELS[self.kernel]

    def bandwidth_curve(self, data_range: float, n_obs: int) -> float:
        if self.bandwidth_1d is not None:
            return float(self.bandwidth_1d)
        return self.auto_constant * data_range * max(n_obs, 1) ** (-0.2)

    def bandwidth_surface(self, data_range: float, n_pairs: int) -> float:
        if self.bandwidth_2d is not None:
            return float(self.bandwidth_2d)
        return self.auto_constant * data_range * max(n_pairs, 1) ** (-1.0 / 6.0)


_DEFAULT_CFG = SmoothingConfig()


def _weights(kernel, centers: np.ndarray, x: np.ndarray, h: float, power: int = 0):
    """Table ``K((x_j - c_g)/h) * (x_j - c_g)**power`` of shape (len(centers), len(x))."""
    d = x[None, :] - centers[:, None]
    w = kernel(d / h)
    return w * d**power if power else w


def _distinct(times: np.ndarray):
    """Distinct time axis and the index of every input time on it."""
    axis, inverse = np.unique(times, return_inverse=True)
    if axis.size > MAX_DISTINCT_TIMES:
        lo, hi = axis[0], axis[-1]
        axis = np.linspace(lo, hi, MAX_DISTINCT_TIMES)
        inverse = np.rint((times - lo) / (hi - lo) * (MAX_DISTINCT_TIMES - 1)).astype(int)
    return axis, inverse.reshape(-1)


# --------------------------------------------------------------------------
# one-dimensional local linear smoothing


def local_linear_operator(
    times, eval_grid, bandwidth: float, kernel: str = "epanechnikov"
) -> np.ndarray:
    """Matrix ``L`` with ``L @ values`` the local linear fit at ``eval_grid``.

    ``times`` may contain repeats; every row of ``L`` sums to one.
    """
    x = np.asarray(times, float).reshape(-1)
    g = np.asarray(eval_grid, float).reshape(-1)
    kfun = KERNELS[kernel]
    d = x[None, :] - g[:, None]
    w = kfun(d / bandwidth)
    s0 = w.sum(axis=1)
    s1 = (w * d).sum(axis=1)
    s2 = (w * d * d).sum(axis=1)
    det = s0 * s2 - s1 * s1
    bad = ~(det > 1e-12 * s0 * s2) | (s0 <= 0)
    if bad.any():
        g0 = float(g[bad][0])
        raise SingularDesignError(
            f"local linear design is singular at t={g0!r} "
            f"(fewer than two distinct times within bandwidth {bandwidth:.4g})",
            location=g0,
        )
    return w * (s2[:, None] - s1[:, None] * d) / det[:, None]


def local_linear_1d(
    times, values, eval_grid, cfg: Optional[SmoothingConfig] = None
) -> np.ndarray:
    """Local linear smooth of pooled ``(time, value)`` pairs evaluated on ``eval_grid``."""
    cfg = cfg or _DEFAULT_CFG
    t = np.asarray(times, float).reshape(-1)
    v = np.asarray(values, float).reshape(-1)
    if t.size != v.size:
        raise ShapeError("times and values differ in length")
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite value passed to local_linear_1d")
    axis, inv = _distinct(t)
    if axis.size < 2:
        raise SingularDesignError("all observations share a single time")
    h = cfg.bandwidth_curve(axis[-1] - axis[0], t.size)
    counts = np.bincount(inv, minlength=axis.size).astype(float)
    sums = np.bincount(inv, weights=v, minlength=axis.size)
    g = np.asarray(eval_grid, float).reshape(-1)
    d = axis[None, :] - g[:, None]
    w = cfg.kernel_fn(d / h) * counts[None, :]
    s0 = w.sum(axis=1)
    s1 = (w * d).sum(axis=1)
    s2 = (w * d * d).sum(axis=1)
    det = s0 * s2 - s1 * s1
    bad = ~(det > 1e-12 * s0 * s2) | (s0 <= 0)
    if bad.any():
        g0 = float(g[bad][0])
        raise SingularDesignError(
            f"local linear design is singular at t={g0!r} (bandwidth {h:.4g})", location=g0
        )
    wz = cfg.kernel_fn(d / h) * sums[None, :]
    t0 = wz.sum(axis=1)
    t1 = (wz * d).sum(axis=1)
    return (s2 * t0 - s1 * t1) / det


def pooled(samples: Sequence[SparseFunctionalSample]):
    """Concatenate times and values across subjects."""
    if not samples:
        return np.empty(0), np.empty(0)
    return (
        np.concatenate([s.times for s in samples]),
        np.concatenate([s.values for s in samples]),
    )


# --------------------------------------------------------------------------
# covariance surfaces


def center_panel(panel: DenseFunctionalPanel):
    """Subtract cross-sectional means; returns ``(centered_panel, mean)``."""
    mean = panel.values.mean(axis=0)
    return DenseFunctionalPanel(panel.grid, panel.values - mean, panel.subject_ids), mean


def dense_covariance(
    panel: DenseFunctionalPanel, cfg: Optional[SmoothingConfig] = None
) -> CovarianceSurface:
    """Bivariate kernel average of the raw covariance of a centered dense panel.

    Uses a product kernel with weights normalized to sum to one at every output
    point; the result is symmetric and positive semidefinite.
    """
    cfg = cfg or _DEFAULT_CFG
    if panel.n < 2:
        raise ValueError("dense_covariance needs at least two subjects")
    g = panel.grid
    n, m = panel.values.shape
    raw = panel.values.T @ panel.values / n
    if not np.all(np.isfinite(raw)):
        raise NumericError("non-finite raw covariance")
    h = cfg.bandwidth_surface(g[-1] - g[0], n * m * m)
    meta = {"bandwidth": (h, h), "n_pairs": n * m * m}
    spacing = (g[-1] - g[0]) / max(m - 1, 1)
    if h < spacing:
        meta["warnings"] = [f"bandwidth {h:.4g} below grid spacing {spacing:.4g}: undersmoothed"]
        log.warning(meta["warnings"][0])
    A = _weights(cfg.kernel_fn, g, g, h)
    A /= A.sum(axis=1, keepdims=True)
    C = A @ raw @ A.T
    C = 0.5 * (C + C.T)
    return CovarianceSurface(g.copy(), g.copy(), C, meta=meta)


def _local_plane(axis_s, axis_u, N, Z, grid_s, grid_u, hs, hu, kernel, label):
    """Intercepts of weighted plane fits to aggregated products at every grid pair."""
    K0s = _weights(kernel, grid_s, axis_s, hs)
    K1s = _weights(kernel, grid_s, axis_s, hs, 1)
    K2s = _weights(kernel, grid_s, axis_s, hs, 2)
    K0u = _weights(kernel, grid_u, axis_u, hu)
    K1u = _weights(kernel, grid_u, axis_u, hu, 1)
    K2u = _weights(kernel, grid_u, axis_u, hu, 2)

    NK0u, NK1u, NK2u = N @ K0u.T, N @ K1u.T, N @ K2u.T
    m00 = K0s @ NK0u
    m10 = K1s @ NK0u
    m01 = K0s @ NK1u
    m20 = K2s @ NK0u
    m11 = K1s @ NK1u
    m02 = K0s @ NK2u
    ZK0u, ZK1u = Z @ K0u.T, Z @ K1u.T
    z0 = K0s @ ZK0u
    z1 = K1s @ ZK0u
    z2 = K0s @ ZK1u

    support = ((K0s > 0).astype(float) @ (N > 0).astype(float)) @ (K0u > 0).astype(float).T
    A = np.stack(
        [
            np.stack([m00, m10, m01], -1),
            np.stack([m10, m20, m11], -1),
            np.stack([m01, m11, m02], -1),
        ],
        -2,
    )
    diag = np.sqrt(np.abs(np.stack([m00, m20, m02], -1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = A / (diag[..., :, None] * diag[..., None, :])
        ok = (support >= 3) & (np.abs(np.linalg.det(scaled)) > 1e-10)
    ok &= np.isfinite(scaled).all(axis=(-1, -2))
    if not ok.all():
        i, j = np.argwhere(~ok)[0]
        raise RankDeficientError(
            f"{label}: local plane fit is rank deficient at (s, u)=({grid_s[i]:.6g}, "
            f"{grid_u[j]:.6g}); only {int(support[i, j])} distinct pair locations "
            f"within bandwidth ({hs:.4g}, {hu:.4g})",
            location=(float(grid_s[i]), float(grid_u[j])),
        )
    rhs = np.stack([z0, z1, z2], -1)[..., None]
    return np.linalg.solve(A, rhs)[..., 0, 0]


def sparse_covariance(
    samples: Sequence[SparseFunctionalSample],
    cfg: Optional[SmoothingConfig] = None,
    out_grid=None,
) -> CovarianceSurface:
    """Local linear surface smooth of within-subject off-diagonal products.

    ``samples`` must be centered. ``raw_diagonal`` is the local linear smooth of
    squared observations, which carries the measurement-noise variance.
    """
    cfg = cfg or _DEFAULT_CFG
    g = np.linspace(0.0, 1.0, 100) if out_grid is None else np.asarray(out_grid, float)
    times, _ = pooled(samples)
    if times.size == 0:
        raise RankDeficientError("sparse_covariance: no observations")
    axis, inv = _distinct(times)
    J = axis.size
    N = np.zeros((J, J))
    Z = np.zeros((J, J))
    offset = 0
    n_pairs = 0
    for smp in samples:
        m = len(smp)
        idx = inv[offset : offset + m]
        offset += m
        if m < 2:
            continue
        off = ~np.eye(m, dtype=bool)
        ii = np.broadcast_to(idx[:, None], (m, m))[off]
        jj = np.broadcast_to(idx[None, :], (m, m))[off]
        np.add.at(N, (ii, jj), 1.0)
        np.add.at(Z, (ii, jj), np.outer(smp.values, smp.values)[off])
        n_pairs += m * (m - 1)
    if n_pairs == 0:
        raise RankDeficientError("sparse_covariance: no subject has two observations")
    span = axis[-1] - axis[0]
    h = cfg.bandwidth_surface(span, n_pairs)
    C = _local_plane(axis, axis, N, Z, g, g, h, h, cfg.kernel_fn, "sparse_covariance")
    C = 0.5 * (C + C.T)

    t_all, v_all = pooled(samples)
    diag_cfg = SmoothingConfig(
        bandwidth_1d=cfg.bandwidth_1d, kernel=cfg.kernel, auto_constant=cfg.auto_constant
    )
    raw_diag = local_linear_1d(t_all, v_all**2, g, diag_cfg)
    sig_diag = rotated_diagonal(
        samples, g, DIAGONAL_ALONG * h, cfg.kernel, bandwidth_across=DIAGONAL_ACROSS * h
    )
    meta = {"bandwidth": (h, h), "n_pairs": n_pairs}
    return CovarianceSurface(
        g.copy(), g.copy(), C, raw_diagonal=raw_diag, signal_diagonal=sig_diag, meta=meta
    )


def rotated_diagonal(
    samples: Sequence[SparseFunctionalSample],
    out_grid,
    bandwidth: float,
    kernel: str = "epanechnikov",
    bandwidth_across: Optional[float] = None,
) -> np.ndarray:
    """Variance function from off-diagonal products in rotated coordinates.

    With ``a = (s + u)/2`` and ``b = (s - u)/2`` the fit at ``(a0, 0)`` is linear
    in ``a`` and quadratic in ``b``. The quadratic term absorbs the curvature
    across the diagonal that biases a plane fit there. Each pair is weighted by
    ``1/(m_i - 1)`` so subjects count as in the smooth of squared observations,
    which makes the subject-level score variation cancel in the difference.
    """
    kfun = KERNELS[kernel]
    a_parts, b_parts, z_parts, w_parts = [], [], [], []
    for smp in samples:
        m = len(smp)
        if m < 2:
            continue
        off = ~np.eye(m, dtype=bool)
        s_, u_ = np.meshgrid(smp.times, smp.times, indexing="ij")
        a_parts.append(0.5 * (s_ + u_)[off])
        b_parts.append(0.5 * (s_ - u_)[off])
        z_parts.append(np.outer(smp.values, smp.values)[off])
        w_parts.append(np.full(m * (m - 1), 1.0 / (m - 1)))
    if not a_parts:
        raise RankDeficientError("rotated_diagonal: no subject has two observations")
    a, b, z, w = (np.concatenate(p) for p in (a_parts, b_parts, z_parts, w_parts))
    hb = bandwidth if bandwidth_across is None else bandwidth_across
    kb = kfun(b / hb) * w
    use = kb > 0
    a, b, z, kb = a[use], b[use], z[use], kb[use]
    axis, inv = _distinct(a)
    b2 = b * b

    def agg(w):
        return np.bincount(inv, weights=w, minlength=axis.size)

    n0, n1, n2 = agg(kb), agg(kb * b2), agg(kb * b2 * b2)
    z0, z1 = agg(kb * z), agg(kb * z * b2)
    g = np.asarray(out_grid, float)
    K0 = _weights(kfun, g, axis, bandwidth)
    K1 = _weights(kfun, g, axis, bandwidth, 1)
    K2 = _weights(kfun, g, axis, bandwidth, 2)
    A = np.stack(
        [
            np.stack([K0 @ n0, K1 @ n0, K0 @ n1], -1),
            np.stack([K1 @ n0, K2 @ n0, K1 @ n1], -1),
            np.stack([K0 @ n1, K1 @ n1, K0 @ n2], -1),
        ],
        -2,
    )
    rhs = np.stack([K0 @ z0, K1 @ z0, K0 @ z1], -1)
    d = np.sqrt(np.abs(np.stack([A[:, 0, 0], A[:, 1, 1], A[:, 2, 2]], -1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = A / (d[:, :, None] * d[:, None, :])
        ok = np.isfinite(scaled).all(axis=(1, 2)) & (np.abs(np.linalg.det(scaled)) > 1e-10)
    if not ok.all():
        g0 = float(g[~ok][0])
        raise RankDeficientError(
            f"rotated_diagonal: rank deficient fit at s={g0!r}", location=g0
        )
    return np.linalg.solve(A, rhs[..., None])[:, 0, 0]


PanelOrSamples = Union[DenseFunctionalPanel, Sequence[SparseFunctionalSample]]


def _as_samples(x: PanelOrSamples) -> List[SparseFunctionalSample]:
    return x.as_samples() if isinstance(x, DenseFunctionalPanel) else list(x)


def cross_covariance(
    a: PanelOrSamples,
    b: PanelOrSamples,
    cfg: Optional[SmoothingConfig] = None,
    out_grid_s=None,
    out_grid_u=None,
) -> CovarianceSurface:
    """Local linear surface smooth of same-subject cross products ``a(s) b(u)``.

    Subjects are paired by identifier; inputs must be centered. All index pairs
    are used since the two variables never share measurement noise.
    """
    cfg = cfg or _DEFAULT_CFG
    sa, sb = _as_samples(a), _as_samples(b)
    by_id = {s.subject_id: s for s in sb}
    pairs = [(s, by_id[s.subject_id]) for s in sa if s.subject_id in by_id]
    if not pairs:
        raise EmptyPairingError("cross_covariance: no subject identifiers in common")
    ta = np.concatenate([p[0].times for p in pairs])
    tb = np.concatenate([p[1].times for p in pairs])
    axis_a, inv_a = _distinct(ta)
    axis_b, inv_b = _distinct(tb)
    N = np.zeros((axis_a.size, axis_b.size))
    Z = np.zeros_like(N)
    oa = ob = 0
    n_pairs = 0
    for pa, pb in pairs:
        ia = inv_a[oa : oa + len(pa)]
        ib = inv_b[ob : ob + len(pb)]
        oa += len(pa)
        ob += len(pb)
        ii = np.broadcast_to(ia[:, None], (ia.size, ib.size))
        jj = np.broadcast_to(ib[None, :], (ia.size, ib.size))
        np.add.at(N, (ii, jj), 1.0)
        np.add.at(Z, (ii, jj), np.outer(pa.values, pb.values))
        n_pairs += ia.size * ib.size
    gs = np.linspace(0.0, 1.0, 100) if out_grid_s is None else np.asarray(out_grid_s, float)
    gu = np.linspace(0.0, 1.0, 100) if out_grid_u is None else np.asarray(out_grid_u, float)
    hs = cfg.bandwidth_surface(axis_a[-1] - axis_a[0], n_pairs)
    hu = cfg.bandwidth_surface(axis_b[-1] - axis_b[0], n_pairs)
    C = _local_plane(axis_a, axis_b, N, Z, gs, gu, hs, hu, cfg.kernel_fn, "cross_covariance")
    meta = {"bandwidth": (hs, hu), "n_pairs": n_pairs, "n_subjects": len(pairs)}
    return CovarianceSurface(gs.copy(), gu.copy(), C, meta=meta)


def estimate_noise_variance(raw_diagonal, smoothed_diagonal, grid) -> float:
    """Mean gap between raw and smoothed diagonals over the central half of the grid."""
    raw = np.asarray(raw_diagonal, float)
    smooth = np.asarray(smoothed_diagonal, float)
    g = np.asarray(grid, float)
    if not (raw.shape == smooth.shape == g.shape):
        raise ShapeError("raw, smoothed and grid must share one length")
    lo, hi = g[0], g[-1]
    quarter = 0.25 * (hi - lo)
    mid = (g >= lo + quarter) & (g <= hi - quarter)
    if not mid.any():
        mid = np.ones_like(g, dtype=bool)
    return max(0.0, float(np.mean(raw[mid] - smooth[mid])))
