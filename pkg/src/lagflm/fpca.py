"""Spectral decomposition of covariance surfaces and conditional FPC scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IllConditionedError, NoSignalError, ShapeError
from .smoothing import CovarianceSurface, SparseFunctionalSample, interp_rows

DEFAULT_FVE = 0.99
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class Eigensystem:
    """Eigenpairs of a covariance operator tabulated on ``grid``.

    ``eigenfunctions`` has one row per component and is orthonormal under the
    trapezoid inner product on ``grid``.
    """

    grid: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    noise_variance: float = 0.0

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size

    def at(self, s, L=None) -> np.ndarray:
        """Eigenfunctions (first ``L``) linearly interpolated at ``s``; shape (L, len(s))."""
        phi = self.eigenfunctions if L is None else self.eigenfunctions[:L]
        return interp_rows(self.grid, phi, np.asarray(s, float))

    def covariance(self, s, u=None) -> np.ndarray:
        """Covariance matrix rebuilt from all retained components at ``s x u``."""
        ps = self.at(s)
        pu = ps if u is None else self.at(u)
        return (ps * self.eigenvalues[:, None]).T @ pu


@dataclass(frozen=True)
class ScoreEstimate:
    scores: np.ndarray

    @property
    def truncation(self) -> int:
        return self.scores.size


def trapezoid_weights(grid) -> np.ndarray:
    g = np.asarray(grid, float)
    w = np.zeros_like(g)
    d = np.diff(g)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def eigendecompose(c: CovarianceSurface, noise_variance: float = 0.0) -> Eigensystem:
    """Solve the discretized integral eigenproblem of a symmetric surface.

    Eigenvalues that are negative or at roundoff level are dropped; each
    eigenfunction is signed so that its largest-magnitude entry is positive.
    """
    C = np.asarray(c.surface, float)
    if not c.is_square or C.shape[0] != C.shape[1]:
        raise ShapeError("eigendecompose needs a square surface")
    scale = max(np.abs(C).max(), np.finfo(float).tiny)
    if np.abs(C - C.T).max() > 1e-8 * scale:
        raise ShapeError("covariance surface is not symmetric")
    w = trapezoid_weights(c.grid)
    rw = np.sqrt(w)
    M = rw[:, None] * (0.5 * (C + C.T)) * rw[None, :]
    lam, vec = np.linalg.eigh(M)
    order = np.argsort(lam)[::-1]
    lam, vec = lam[order], vec[:, order]
    tol = np.finfo(float).eps * C.shape[0] * max(np.abs(lam).max(initial=0.0), 0.0)
    keep = lam > max(tol, 0.0)
    lam, vec = lam[keep], vec[:, keep]
    phi = (vec / rw[:, None]).T
    if phi.size:
        lead = phi[np.arange(phi.shape[0]), np.argmax(np.abs(phi), axis=1)]
        phi = phi * np.where(lead < 0, -1.0, 1.0)[:, None]
    return Eigensystem(np.asarray(c.grid, float).copy(), lam, phi, float(max(noise_variance, 0.0)))


def select_truncation(e: Eigensystem, fve: float = DEFAULT_FVE) -> int:
    """Smallest ``L`` whose leading eigenvalues explain at least ``fve`` of the total."""
    if not 0 < fve <= 1:
        raise ValueError("fve must lie in (0, 1]")
    lam = np.asarray(e.eigenvalues, float)
    total = lam[lam > 0].sum() if lam.size else 0.0
    if total <= 0:
        raise NoSignalError("no positive eigenvalues to explain")
    frac = np.cumsum(lam) / total
    # guard against cumsum roundoff just below 1
    return int(min(np.searchsorted(frac, fve - 1e-12) + 1, lam.size))


def blup_scores(
    e: Eigensystem, obs: SparseFunctionalSample, L: int
) -> ScoreEstimate:
    """Best linear predictor of the first ``L`` scores from noisy sparse observations.

    ``obs`` must already be centered. The observation covariance is the
    eigen-reconstructed surface plus the noise variance on its diagonal.
    """
    if L < 1 or L > e.n_components:
        raise ValueError(f"L={L} not in 1..{e.n_components}")
    t = obs.times
    if t.min() < e.grid[0] - 1e-12 or t.max() > e.grid[-1] + 1e-12:
        raise ValueError("observation times outside the eigenfunction grid")
    phi = e.at(t)
    Sigma = (phi * e.eigenvalues[:, None]).T @ phi
    Sigma = 0.5 * (Sigma + Sigma.T)
    floor = 1e-10 * max(np.diag(Sigma).max(), 0.0)
    Sigma[np.diag_indices_from(Sigma)] += max(e.noise_variance, floor)
    if np.linalg.cond(Sigma) > CONDITION_LIMIT:
        raise IllConditionedError(
            f"subject {obs.subject_id}: observation covariance is ill-conditioned; "
            "a positive noise variance is needed"
        )
    alpha = np.linalg.solve(Sigma, obs.values)
    return ScoreEstimate(e.eigenvalues[:L] * (phi[:L] @ alpha))


def reconstruct_curve(e: Eigensystem, s: ScoreEstimate, eval_grid) -> np.ndarray:
    L = s.truncation
    if L > e.n_components:
        raise ValueError("more scores than eigenfunctions")
    return s.scores @ e.at(eval_grid, L)
