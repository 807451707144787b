"""Prediction-error criteria and the hierarchical lag / penalty search."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import FoldDegeneracyError, LagFLMError, ShapeError, UndefinedNPEError
from .model import (
    FunctionalDataset,
    LagWindow,
    ModelConfig,
    ModelFit,
    RecoveredCurves,
    _InducedSystem,
    _predict_from_design,
    estimate_covariances,
    fit_from_estimates,
    induced_from_curves,
    recover_curves,
    valid_interval,
)

log = logging.getLogger(__name__)

NPE_GUARD = 1e-8

LagPair = Tuple[LagWindow, LagWindow]


class SelectionError(LagFLMError):
    """A fit failed for one candidate of the search; the cause is chained."""


def default_rho_grid(lo: float = 1e-5, hi: float = 1e-2, count: int = 20):
    return [(float(r), float(r)) for r in np.geomspace(lo, hi, count)]


def npe(predicted, observed, return_excluded: bool = False):
    """Mean relative absolute prediction error.

    Pairs whose observed value is below ``1e-8`` in magnitude are dropped.
    """
    p = np.asarray(predicted, float).reshape(-1)
    o = np.asarray(observed, float).reshape(-1)
    if p.shape != o.shape:
        raise ShapeError("predicted and observed differ in length")
    keep = np.abs(o) >= NPE_GUARD
    excluded = int(o.size - keep.sum())
    if not keep.any():
        raise UndefinedNPEError("every observed value is zero; NPE is undefined")
    if excluded:
        log.info("npe: %d near-zero observations excluded", excluded)
    value = float(np.mean(np.abs(p[keep] - o[keep]) / np.abs(o[keep])))
    return (value, excluded) if return_excluded else value


def make_folds(n: int, k: int, seed: int) -> List[np.ndarray]:
    """Seeded split of ``range(n)`` into ``k`` disjoint folds differing in size by at most one."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= folds <= subjects, got folds={k}, subjects={n}")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    perm = rng.permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass(frozen=True)
class SearchSpace:
    """Candidate lag windows and penalties.

    With ``joint=True`` the two window lists are paired elementwise instead of
    crossed, which searches a shared window for both predictors.
    """

    D1: Tuple[LagWindow, ...]
    D2: Tuple[LagWindow, ...]
    D_rho: Tuple[Tuple[float, float], ...] = field(default_factory=lambda: tuple(default_rho_grid()))
    K_folds: int = 10
    joint: bool = False

    def __post_init__(self):
        object.__setattr__(self, "D1", tuple(LagWindow.of(w) for w in self.D1))
        object.__setattr__(self, "D2", tuple(LagWindow.of(w) for w in self.D2))
        object.__setattr__(self, "D_rho", tuple((float(a), float(b)) for a, b in self.D_rho))
        if not (self.D1 and self.D2 and self.D_rho):
            raise ValueError("search lists must be nonempty")
        if self.joint and len(self.D1) != len(self.D2):
            raise ValueError("joint search needs equally long D1 and D2")
        if self.K_folds < 2:
            raise ValueError("K_folds must be >= 2")

    def lag_pairs(self) -> List[LagPair]:
        if self.joint:
            return list(zip(self.D1, self.D2))
        return list(itertools.product(self.D1, self.D2))


@dataclass(frozen=True)
class CandidateScore:
    rho: Tuple[float, float]
    npe: float
    cv: float
    npe_by_rho: Tuple[float, ...] = ()


@dataclass(frozen=True)
class SelectionResult:
    best_lags: LagPair
    best_rho: Tuple[float, float]
    cv_table: Dict[LagPair, CandidateScore]

    @property
    def best(self) -> CandidateScore:
        return self.cv_table[self.best_lags]


@dataclass
class _Design:
    t: np.ndarray
    y: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    subject: np.ndarray


class Evaluator:
    """Estimates from one training set, with caches for repeated lag / penalty queries."""

    def __init__(self, train: FunctionalDataset, cfg: Optional[ModelConfig] = None):
        self.cfg = cfg or ModelConfig()
        self.est = estimate_covariances(train, self.cfg)
        self._systems: Dict[LagPair, _InducedSystem] = {}
        self._curves: Dict[int, Tuple[FunctionalDataset, RecoveredCurves]] = {}

    def system(self, lags1: LagWindow, lags2: LagWindow) -> _InducedSystem:
        key = (lags1, lags2)
        if key not in self._systems:
            lo, hi = valid_interval(self.est, lags1, lags2)
            grid = np.linspace(lo, hi, self.cfg.eval_grid_size)
            self._systems[key] = _InducedSystem(
                self.est.surfaces,
                self.cfg.basis(lags1),
                self.cfg.basis(lags2),
                grid,
                self.cfg.quadrature_nodes,
            )
        return self._systems[key]

    def fit(self, lags1, lags2, rho) -> ModelFit:
        lags1, lags2 = LagWindow.of(lags1), LagWindow.of(lags2)
        return fit_from_estimates(
            self.est, lags1, lags2, rho, self.cfg, _system=self.system(lags1, lags2)
        )

    def curves(self, target: FunctionalDataset) -> RecoveredCurves:
        key = id(target)
        if key not in self._curves:
            self._curves[key] = (target, recover_curves(self.est, target.x1, target.x2))
        return self._curves[key][1]

    def design(self, target: FunctionalDataset, lags1, lags2, min_time: float = 0.0) -> _Design:
        """Induced predictors of every target response inside the valid interval."""
        system = self.system(LagWindow.of(lags1), LagWindow.of(lags2))
        lo, hi = system.eval_grid[0], system.eval_grid[-1]
        lo = max(lo, min_time)
        rc = self.curves(target)
        ts, ys, z1s, z2s, subj = [], [], [], [], []
        for i, s in enumerate(target.y):
            keep = (s.times >= lo - 1e-12) & (s.times <= hi + 1e-12)
            if not keep.any():
                continue
            t = s.times[keep]
            ts.append(t)
            ys.append(s.values[keep])
            subj.append(np.full(t.size, i))
            q = self.cfg.quadrature_nodes
            z1s.append(induced_from_curves(rc.x1[i], rc.x1_grid, system.basis1, t, q)[0])
            z2s.append(induced_from_curves(rc.x2[i], rc.x2_grid, system.basis2, t, q)[0])
        if not ts:
            k1, k2 = system.basis1.size, system.basis2.size
            return _Design(
                np.empty(0), np.empty(0), np.empty((0, k1)), np.empty((0, k2)), np.empty(0, int)
            )
        return _Design(
            np.concatenate(ts),
            np.concatenate(ys),
            np.concatenate(z1s),
            np.concatenate(z2s),
            np.concatenate(subj),
        )

    def predict_design(self, m: ModelFit, d: _Design) -> np.ndarray:
        if d.t.size == 0:
            return np.empty(0)
        return _predict_from_design(m, d.t, d.z1, d.z2)


def in_sample_npe(ev: Evaluator, data: FunctionalDataset, lags1, lags2, rho) -> float:
    m = ev.fit(lags1, lags2, rho)
    d = ev.design(data, lags1, lags2)
    return npe(ev.predict_design(m, d), d.y)


def select_rho(ev: Evaluator, data: FunctionalDataset, lags1, lags2, rho_grid):
    """Penalty pair with the smallest in-sample NPE; returns ``(rho, npe, all_npes)``."""
    d = ev.design(data, lags1, lags2)
    if d.t.size == 0:
        raise FoldDegeneracyError(f"no responses inside the valid interval for lags {lags1}, {lags2}")
    scores = []
    for rho in rho_grid:
        try:
            m = ev.fit(lags1, lags2, rho)
        except LagFLMError as exc:
            raise SelectionError(f"fit failed at lags ({lags1}, {lags2}), rho {rho}: {exc}") from exc
        scores.append(npe(ev.predict_design(m, d), d.y))
    best = int(np.argmin(scores))
    return tuple(rho_grid[best]), scores[best], tuple(scores)


class _FoldCache:
    def __init__(self, data: FunctionalDataset, folds, cfg):
        self.data = data
        self.folds = folds
        self.cfg = cfg
        self._items = {}

    def __getitem__(self, k):
        if k not in self._items:
            held = self.folds[k]
            rest = np.setdiff1d(np.arange(self.data.n), held)
            self._items[k] = (Evaluator(self.data.subset(rest), self.cfg), self.data.subset(held))
        return self._items[k]


def _cv_from_cache(cache: _FoldCache, lags1, lags2, rho, min_time: float) -> float:
    total = 0.0
    for k in range(len(cache.folds)):
        ev, held = cache[k]
        d = ev.design(held, lags1, lags2, min_time)
        if d.t.size == 0:
            raise FoldDegeneracyError(
                f"fold {k}: no held-out responses inside the valid interval"
            )
        m = ev.fit(lags1, lags2, rho)
        r = ev.predict_design(m, d) - d.y
        total += float(r @ r)
    return total / len(cache.folds)


def cv_score(
    data: FunctionalDataset,
    lags1,
    lags2,
    rho,
    K: int = 10,
    seed: int = 0,
    cfg: Optional[ModelConfig] = None,
    min_time: float = 0.0,
) -> float:
    """K-fold cross-validated sum of squared response errors, averaged over folds.

    Folds split subjects. Held-out responses are scored only at times inside
    the fitted model's valid interval and at or after ``min_time``.
    """
    lags1, lags2 = LagWindow.of(lags1), LagWindow.of(lags2)
    cache = _FoldCache(data, make_folds(data.n, K, seed), cfg or ModelConfig())
    return _cv_from_cache(cache, lags1, lags2, tuple(rho), min_time)


def select_hyperparameters(
    data: FunctionalDataset,
    space: SearchSpace,
    seed: int = 0,
    cfg: Optional[ModelConfig] = None,
) -> SelectionResult:
    """Hierarchical search: best penalty per lag pair by NPE, then best lag pair by CV.

    Cross-validation errors of all candidates are scored on the same responses,
    those at or after the largest upper lag in the search space.
    """
    cfg = cfg or ModelConfig()
    if space.K_folds > data.n:
        raise ValueError(f"K_folds={space.K_folds} exceeds the {data.n} subjects")
    pairs = space.lag_pairs()
    common_start = max(max(a.upper, b.upper) for a, b in pairs)
    full = Evaluator(data, cfg)
    cache = _FoldCache(data, make_folds(data.n, space.K_folds, seed), cfg)

    table: Dict[LagPair, CandidateScore] = {}
    for l1, l2 in pairs:
        rho, best_npe, all_npe = select_rho(full, data, l1, l2, space.D_rho)
        try:
            cv = _cv_from_cache(cache, l1, l2, rho, common_start)
        except FoldDegeneracyError:
            raise
        except LagFLMError as exc:
            raise SelectionError(f"cross-validation failed at lags ({l1}, {l2}), rho {rho}: {exc}") from exc
        table[(l1, l2)] = CandidateScore(rho, best_npe, cv, all_npe)
        log.debug("lags %s %s: rho=%s npe=%.5g cv=%.5g", l1, l2, rho, best_npe, cv)

    def rank(pair):
        l1, l2 = pair
        return (table[pair].cv, l1.width + l2.width, l1.as_tuple() + l2.as_tuple())

    best = min(table, key=rank)
    return SelectionResult(best, table[best].rho, table)
