"""Simulation design and Monte Carlo drivers.

Latent curves on the grid ``j/(m-1)``::

    X1_i(t) = xi_i1 sin(2 pi t) + xi_i2 t^2
    X2_i(t) = zeta_i cos(2 pi t)
    Y_i(t)  = beta0(t) + int_D1 beta1(s,t) X1_i(t-s) ds + int_D2 beta2(s,t) X2_i(t-s) ds

with ``beta0(t) = t + t^(1/5)``, ``beta1(s,t) = sin(2 pi s) cos(pi t)`` and
``beta2(s,t) = sin(4 pi s) cos(2 pi t)``.

Random streams are Philox generators keyed by
``(seed, replication, stream, subject, variable)`` with variable codes
0 = scores, 1 = dense predictor, 2 = sparse predictor, 3 = response. A subject's
draws therefore do not depend on how many other subjects are generated or on
the order in which replications run.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from threadpoolctl import threadpool_limits

from .basis import gauss_legendre
from .errors import ConfigError
from .model import FunctionalDataset, LagWindow, ModelConfig, coefficient_surface
from .selection import (
    Evaluator,
    SearchSpace,
    default_rho_grid,
    select_hyperparameters,
    select_rho,
)
from .smoothing import DenseFunctionalPanel, SparseFunctionalSample

log = logging.getLogger(__name__)

SCORES, DENSE, SPARSE, RESPONSE = 0, 1, 2, 3


def beta0(t):
    t = np.asarray(t, float)
    return t + t**0.2


def beta1(s, t):
    return np.sin(2 * np.pi * np.asarray(s, float)) * np.cos(np.pi * np.asarray(t, float))


def beta2(s, t):
    return np.sin(4 * np.pi * np.asarray(s, float)) * np.cos(2 * np.pi * np.asarray(t, float))


@dataclass(frozen=True)
class SimConfig:
    n: int = 100
    grid_size: int = 100
    m_y: Tuple[int, int] = (20, 50)
    m_x2: Tuple[int, int] = (30, 50)
    lags1: Tuple[float, float] = (0.1, 0.4)
    lags2: Tuple[float, float] = (0.1, 0.4)
    snr: float = 20.0
    seed: int = 0
    replication: int = 0
    stream: int = 0

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.grid_size) / (self.grid_size - 1)

    @property
    def response_start(self) -> float:
        return max(self.lags1[1], self.lags2[1])

    def validate(self):
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.grid_size < 2:
            raise ConfigError("grid_size must be at least 2")
        if not self.snr > 0:
            raise ConfigError("snr must be positive")
        LagWindow.of(self.lags1), LagWindow.of(self.lags2)
        n_resp = int(np.sum(self.grid >= self.response_start - 1e-12))
        for name, (lo, hi), avail in (
            ("m_y", self.m_y, n_resp),
            ("m_x2", self.m_x2, self.grid_size),
        ):
            if not 1 <= lo <= hi:
                raise ConfigError(f"{name} range {lo}..{hi} is invalid")
            if hi > avail:
                raise ConfigError(f"{name} upper bound {hi} exceeds the {avail} available grid points")


@dataclass(frozen=True)
class SimulatedDataset:
    data: FunctionalDataset
    grid: np.ndarray
    scores: np.ndarray  # (n, 3): xi1, xi2, zeta
    latent_x1: np.ndarray
    latent_x2: np.ndarray
    latent_y: np.ndarray  # NaN before the response start
    noise_sd: dict
    config: SimConfig

    def true_beta(self, which: int, s, t) -> np.ndarray:
        """True coefficient surface tabulated as (len(s), len(t))."""
        f = beta1 if which == 1 else beta2
        return f(np.asarray(s, float)[:, None], np.asarray(t, float)[None, :])


def _rng(cfg: SimConfig, subject: int, variable: int) -> np.random.Generator:
    ss = np.random.SeedSequence([cfg.seed, cfg.replication, cfg.stream, subject, variable])
    return np.random.Generator(np.random.Philox(ss))


def response_loadings(t, lags1=(0.1, 0.4), lags2=(0.1, 0.4), nodes: int = 40) -> np.ndarray:
    """Integrals A1, A2, A3 such that ``Y - beta0 = xi1 A1 + xi2 A2 + zeta A3``; shape (3, len(t))."""
    t = np.asarray(t, float)
    r1 = gauss_legendre(lags1, nodes)
    r2 = gauss_legendre(lags2, nodes)
    s1, s2 = r1.nodes[None, :], r2.nodes[None, :]
    tt = t[:, None]
    a1 = (beta1(s1, tt) * np.sin(2 * np.pi * (tt - s1))) @ r1.weights
    a2 = (beta1(s1, tt) * (tt - s1) ** 2) @ r1.weights
    a3 = (beta2(s2, tt) * np.cos(2 * np.pi * (tt - s2))) @ r2.weights
    return np.stack([a1, a2, a3])


def generate_dataset(cfg: SimConfig) -> SimulatedDataset:
    cfg.validate()
    g = cfg.grid
    n = cfg.n
    scores = np.array([_rng(cfg, i, SCORES).standard_normal(3) for i in range(n)])
    x1 = scores[:, :1] * np.sin(2 * np.pi * g) + scores[:, 1:2] * g**2
    x2 = scores[:, 2:3] * np.cos(2 * np.pi * g)
    resp = g >= cfg.response_start - 1e-12
    y = np.full((n, g.size), np.nan)
    y[:, resp] = beta0(g[resp]) + scores @ response_loadings(g[resp], cfg.lags1, cfg.lags2)

    def noise_sd(signal_power):
        return 0.0 if np.isinf(cfg.snr) else float(np.sqrt(signal_power / cfg.snr))

    sd = {
        "x1": noise_sd(np.mean(x1**2)),
        "x2": noise_sd(np.mean(x2**2)),
        "y": noise_sd(np.mean((y[:, resp] - beta0(g[resp])) ** 2)),
    }
    resp_idx = np.flatnonzero(resp)
    ids = [f"S{i + 1:04d}" for i in range(n)]
    w1 = np.empty_like(x1)
    ys, x2s = [], []
    for i in range(n):
        w1[i] = x1[i] + sd["x1"] * _rng(cfg, i, DENSE).standard_normal(g.size)

        r = _rng(cfg, i, SPARSE)
        m = int(r.integers(cfg.m_x2[0], cfg.m_x2[1] + 1))
        idx = np.sort(r.choice(g.size, size=m, replace=False))
        x2s.append(SparseFunctionalSample(ids[i], g[idx], x2[i, idx] + sd["x2"] * r.standard_normal(m)))

        r = _rng(cfg, i, RESPONSE)
        m = int(r.integers(cfg.m_y[0], cfg.m_y[1] + 1))
        idx = np.sort(r.choice(resp_idx, size=m, replace=False))
        ys.append(SparseFunctionalSample(ids[i], g[idx], y[i, idx] + sd["y"] * r.standard_normal(m)))

    data = FunctionalDataset(tuple(ys), DenseFunctionalPanel(g, w1, tuple(ids)), tuple(x2s))
    return SimulatedDataset(data, g, scores, x1, x2, y, sd, cfg)


# --------------------------------------------------------------------------
# parallel replication driver


def _init_worker():
    threadpool_limits(1)


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Ordered map; each task runs with single-threaded BLAS so results are bitwise stable."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        with threadpool_limits(1):
            return [fn(x) for x in items]
    workers = min(threads, len(items), os.cpu_count() or 1) or 1
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# Table 1: NPE under the true lags


@dataclass(frozen=True)
class Table1Row:
    n: int
    mean_npe: float
    se_npe: float
    npes: Tuple[float, ...]
    rhos: Tuple[Tuple[float, float], ...]


def _table1_task(args):
    cfg, model_cfg, rho_grid = args
    sim = generate_dataset(cfg)
    ev = Evaluator(sim.data, model_cfg)
    rho, value, _ = select_rho(ev, sim.data, cfg.lags1, cfg.lags2, rho_grid)
    return value, rho


def run_table1(
    template: SimConfig,
    n_list: Sequence[int] = (50, 100, 150, 200),
    reps: int = 20,
    threads: int = 1,
    model_cfg: Optional[ModelConfig] = None,
    rho_grid=None,
) -> List[Table1Row]:
    """In-sample NPE with the true lags and NPE-selected penalties, per sample size."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    model_cfg = model_cfg or ModelConfig()
    rho_grid = list(rho_grid or default_rho_grid())
    tasks = [
        (replace(template, n=int(n), replication=r), model_cfg, rho_grid)
        for n in n_list
        for r in range(reps)
    ]
    out = parallel_map(_table1_task, tasks, threads)
    rows = []
    for k, n in enumerate(n_list):
        chunk = out[k * reps : (k + 1) * reps]
        v = np.array([c[0] for c in chunk])
        se = float(v.std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan")
        rows.append(Table1Row(int(n), float(v.mean()), se, tuple(v), tuple(c[1] for c in chunk)))
    return rows


# --------------------------------------------------------------------------
# lag-window selection experiment


@dataclass(frozen=True)
class LagExperimentResult:
    target: float
    choices: Tuple[float, ...]

    @property
    def hits(self) -> int:
        return sum(abs(c - self.target) < 1e-12 for c in self.choices)


def _lag_task(args):
    cfg, uppers, lower, folds, model_cfg, rho_grid = args
    sim = generate_dataset(cfg)
    windows = [LagWindow(lower, u) for u in uppers]
    space = SearchSpace(tuple(windows), tuple(windows), tuple(rho_grid), folds, joint=True)
    fold_seed = int(np.random.SeedSequence([cfg.seed, cfg.replication, 7]).generate_state(1)[0])
    res = select_hyperparameters(sim.data, space, fold_seed, model_cfg)
    return res.best_lags[0].upper


def run_lag_experiment(
    template: SimConfig,
    uppers: Sequence[float] = (0.3, 0.4, 0.5),
    reps: int = 100,
    lower: float = 0.1,
    folds: int = 10,
    threads: int = 1,
    model_cfg: Optional[ModelConfig] = None,
    rho_grid=None,
) -> LagExperimentResult:
    """Count replications whose cross-validated shared upper lag equals the true one."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    model_cfg = model_cfg or ModelConfig()
    rho_grid = list(rho_grid or default_rho_grid())
    tasks = [
        (replace(template, replication=r), tuple(uppers), lower, folds, model_cfg, rho_grid)
        for r in range(reps)
    ]
    choices = parallel_map(_lag_task, tasks, threads)
    return LagExperimentResult(float(template.lags1[1]), tuple(choices))


# --------------------------------------------------------------------------
# consistency of coefficient and prediction estimates


@dataclass(frozen=True)
class ConsistencyRow:
    n: int
    beta1_error: float
    beta2_error: float
    prediction_error: float


def _consistency_task(args):
    cfg, model_cfg, rho_grid, n_test = args
    sim = generate_dataset(cfg)
    ev = Evaluator(sim.data, model_cfg)
    rho, _, _ = select_rho(ev, sim.data, cfg.lags1, cfg.lags2, rho_grid)
    m = ev.fit(cfg.lags1, cfg.lags2, rho)
    t = m.eval_grid
    errs = []
    for which, lags in ((1, cfg.lags1), (2, cfg.lags2)):
        s = np.linspace(lags[0], lags[1], 31)
        est = coefficient_surface(m, which, s, t)
        errs.append(float(np.max(np.abs(est - sim.true_beta(which, s, t)))))

    test = generate_dataset(replace(cfg, n=n_test, stream=1))
    d = ev.design(test.data, cfg.lags1, cfg.lags2)
    pred = ev.predict_design(m, d) - m.estimates.intercept_at(d.t)
    # noiseless history-driven part of the response at the same times
    cols = np.rint(d.t * (test.grid.size - 1)).astype(int)
    truth = test.latent_y[d.subject, cols] - beta0(d.t)
    return errs[0], errs[1], float(np.mean(np.abs(pred - truth)))


def run_consistency(
    template: SimConfig,
    n_list: Sequence[int] = (50, 200),
    reps: int = 10,
    n_test: int = 20,
    threads: int = 1,
    model_cfg: Optional[ModelConfig] = None,
    rho_grid=None,
) -> List[ConsistencyRow]:
    """Mean sup-norm coefficient errors and mean held-out prediction error per sample size."""
    model_cfg = model_cfg or ModelConfig()
    rho_grid = list(rho_grid or default_rho_grid())
    tasks = [
        (replace(template, n=int(n), replication=r), model_cfg, rho_grid, n_test)
        for n in n_list
        for r in range(reps)
    ]
    out = np.array(parallel_map(_consistency_task, tasks, threads)).reshape(len(n_list), reps, 3)
    means = out.mean(axis=1)
    return [ConsistencyRow(int(n), *map(float, row)) for n, row in zip(n_list, means)]
