"""Plain-text serialization: long-format datasets, surfaces, fit artifacts, run configs.

Every numeric field is written with 17 significant digits, which round-trips
IEEE doubles exactly.

Fit artifact layout::

    # lagflm fit artifact
    ## scalars
    key,value
    ...
    ## vector <name> <length>
    v0
    v1
    ...
    ## matrix <name> <rows> <cols>
    a00,a01,...
    ...

Sections may appear in any order; the file ends with ``## end``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .basis import make_bspline_basis
from .errors import ConfigError, DenseGridError, ParseError, ShapeError
from .fpca import Eigensystem
from .model import (
    CovarianceEstimates,
    FunctionalDataset,
    LagWindow,
    ModelFit,
    SurfaceSet,
)
from .smoothing import (
    CovarianceSurface,
    DenseFunctionalPanel,
    SmoothingConfig,
    SparseFunctionalSample,
)

DATASET_HEADER = ["subject_id", "variable", "time", "value"]
SURFACE_HEADER = ["s", "t", "value"]
VARIABLES = ("y", "x1", "x2")
ARTIFACT_MAGIC = "# lagflm fit artifact"


def fmt(x: float) -> str:
    return "%.17g" % x


# --------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class DataBundle:
    """Subjects in file order with their per-variable observations.

    ``y`` entries are ``None`` for subjects without responses, which is the
    normal case for new subjects passed to prediction.
    """

    subject_ids: Tuple[str, ...]
    y: Tuple[Optional[SparseFunctionalSample], ...]
    x1: DenseFunctionalPanel
    x2: Tuple[SparseFunctionalSample, ...]

    @property
    def n(self) -> int:
        return len(self.subject_ids)

    def to_dataset(self) -> FunctionalDataset:
        missing = [sid for sid, s in zip(self.subject_ids, self.y) if s is None]
        if missing:
            raise ShapeError(f"subjects without y observations: {', '.join(missing[:5])}")
        return FunctionalDataset(self.y, self.x1, self.x2)


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{what} {text!r} is not a number", line) from None
    if not math.isfinite(v):
        raise ParseError(f"{what} {text!r} is not finite", line)
    return v


def load_dataset_csv(path, require_y: bool = True) -> DataBundle:
    """Read a ``subject_id,variable,time,value`` table.

    Subjects keep the order of their first row. Every subject needs ``x1`` and
    ``x2`` rows, and ``y`` rows unless ``require_y`` is false. All ``x1`` rows
    must share one regular grid.
    """
    path = Path(path)
    rows: Dict[str, Dict[str, List[Tuple[float, float, int]]]] = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != DATASET_HEADER:
            raise ParseError(f"{path}: header must be {','.join(DATASET_HEADER)}", 1)
        for rec in reader:
            line = reader.line_num
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) != 4:
                raise ParseError(f"{path}: expected 4 fields, got {len(rec)}", line)
            sid, var = rec[0].strip(), rec[1].strip()
            if not sid:
                raise ParseError(f"{path}: empty subject_id", line)
            if var not in VARIABLES:
                raise ParseError(f"{path}: variable must be one of y, x1, x2; got {var!r}", line)
            t = _parse_float(rec[2], "time", line)
            if not 0.0 <= t <= 1.0:
                raise ParseError(f"{path}: time {t!r} outside [0, 1]", line)
            v = _parse_float(rec[3], "value", line)
            rows.setdefault(sid, {k: [] for k in VARIABLES})[var].append((t, v, line))
    if not rows:
        raise ParseError(f"{path}: no data rows", 1)

    def sample(sid, var):
        obs = sorted(rows[sid][var])
        for a, b in zip(obs, obs[1:]):
            if a[0] == b[0]:
                raise ParseError(
                    f"{path}: repeated time {b[0]!r} for subject {sid}, {var}",
                    max(a[2], b[2]),
                )
        t = np.array([o[0] for o in obs])
        v = np.array([o[1] for o in obs])
        return t, v

    ids = tuple(rows)
    ys, x2s, x1_vals = [], [], []
    grid = None
    for sid in ids:
        for var in ("x1", "x2") + (("y",) if require_y else ()):
            if not rows[sid][var]:
                raise ParseError(f"{path}: subject {sid} has no {var} rows", rows_line(rows[sid]))
        t1, v1 = sample(sid, "x1")
        if grid is None:
            grid = t1
        elif t1.shape != grid.shape or np.any(t1 != grid):
            line = rows[sid]["x1"][0][2]
            raise DenseGridError(
                f"{path}: x1 times of subject {sid} differ from the common grid", line
            )
        x1_vals.append(v1)
        x2s.append(SparseFunctionalSample(sid, *sample(sid, "x2")))
        ys.append(SparseFunctionalSample(sid, *sample(sid, "y")) if rows[sid]["y"] else None)
    try:
        panel = DenseFunctionalPanel(grid, np.array(x1_vals), ids)
    except ValueError as exc:
        raise DenseGridError(f"{path}: x1 grid: {exc}", rows[ids[0]]["x1"][0][2]) from None
    return DataBundle(ids, tuple(ys), panel, tuple(x2s))


def rows_line(var_rows) -> int:
    lines = [r[2] for rs in var_rows.values() for r in rs]
    return min(lines) if lines else 0


def save_dataset_csv(data, path) -> None:
    """Write a :class:`FunctionalDataset` or :class:`DataBundle` in long format."""
    y = data.y
    ids = data.subject_ids
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_HEADER)
        for i, sid in enumerate(ids):
            if y[i] is not None:
                for t, v in zip(y[i].times, y[i].values):
                    w.writerow([sid, "y", fmt(t), fmt(v)])
            for t, v in zip(data.x1.grid, data.x1.values[i]):
                w.writerow([sid, "x1", fmt(t), fmt(v)])
            for t, v in zip(data.x2[i].times, data.x2[i].values):
                w.writerow([sid, "x2", fmt(t), fmt(v)])


# --------------------------------------------------------------------------
# surfaces


def write_surface_csv(surface, s_grid, t_grid, path) -> None:
    """One ``s,t,value`` row per grid pair; ``t`` varies slowest.

    ``surface`` is indexed ``[s, t]``.
    """
    S = np.asarray(surface, float)
    s_grid = np.asarray(s_grid, float)
    t_grid = np.asarray(t_grid, float)
    if S.shape != (s_grid.size, t_grid.size):
        raise ShapeError(f"surface shape {S.shape} does not match grids ({s_grid.size}, {t_grid.size})")
    try:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(SURFACE_HEADER) + "\n")
            for j, t in enumerate(t_grid):
                for i, s in enumerate(s_grid):
                    fh.write(f"{fmt(s)},{fmt(t)},{fmt(S[i, j])}\n")
    except OSError as exc:
        raise OSError(f"cannot write surface to {path}: {exc}") from exc


def read_surface_csv(path) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_surface_csv`; returns ``(surface, s_grid, t_grid)``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    s_grid = np.unique(data[:, 0])
    t_grid = np.unique(data[:, 1])
    if data.shape[0] != s_grid.size * t_grid.size:
        raise ParseError(f"{path}: rows do not form a full grid")
    return data[:, 2].reshape(t_grid.size, s_grid.size).T.copy(), s_grid, t_grid


# --------------------------------------------------------------------------
# fit artifact


def _surface_sections(name: str, c: CovarianceSurface, vectors, matrices):
    vectors[f"{name}.s"] = c.grid_s
    vectors[f"{name}.u"] = c.grid_u
    matrices[name] = c.surface
    if c.raw_diagonal is not None:
        vectors[f"{name}.raw_diagonal"] = c.raw_diagonal
    if c.signal_diagonal is not None:
        vectors[f"{name}.signal_diagonal"] = c.signal_diagonal


def save_fit(m: ModelFit, path) -> None:
    est = m.estimates
    sm = est.smoothing
    scalars = {
        "n": est.n,
        "degree": m.basis1.degree,
        "interior_knots": m.basis1.interior_knot_count,
        "quadrature_nodes": m.quadrature_nodes,
        "lags1_lower": m.lags1.lower,
        "lags1_upper": m.lags1.upper,
        "lags2_lower": m.lags2.lower,
        "lags2_upper": m.lags2.upper,
        "rho1": m.rho[0],
        "rho2": m.rho[1],
        "truncation": est.truncation,
        "noise_variance": est.eigensystem2.noise_variance,
        "recovery_bandwidth": est.recovery_bandwidth,
        "kernel": sm.kernel,
        "bandwidth_1d": "auto" if sm.bandwidth_1d is None else sm.bandwidth_1d,
        "bandwidth_2d": "auto" if sm.bandwidth_2d is None else sm.bandwidth_2d,
        "auto_constant": sm.auto_constant,
    }
    vectors = {
        "y_grid": est.y_grid,
        "intercept": est.intercept,
        "x1_grid": est.x1_grid,
        "x1_mean": est.x1_mean,
        "x2_grid": est.x2_grid,
        "x2_mean": est.x2_mean,
        "eigen.grid": est.eigensystem2.grid,
        "eigen.values": est.eigensystem2.eigenvalues,
        "eval_grid": m.eval_grid,
    }
    matrices = {
        "eigen.functions": est.eigensystem2.eigenfunctions,
        "b1": m.b1,
        "b2": m.b2,
    }
    for name in ("c1", "c2", "c12", "c1y", "c2y"):
        _surface_sections(name, getattr(est.surfaces, name), vectors, matrices)

    def num(v):
        return fmt(v) if isinstance(v, float) else str(v)

    lines = [ARTIFACT_MAGIC, "## scalars", "key,value"]
    lines += [f"{k},{num(v)}" for k, v in scalars.items()]
    for k, v in vectors.items():
        v = np.asarray(v, float).reshape(-1)
        lines.append(f"## vector {k} {v.size}")
        lines += [fmt(x) for x in v]
    for k, M in matrices.items():
        M = np.atleast_2d(np.asarray(M, float))
        lines.append(f"## matrix {k} {M.shape[0]} {M.shape[1]}")
        lines += [",".join(fmt(x) for x in row) for row in M]
    lines.append("## end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_sections(path):
    text = Path(path).read_text(encoding="utf-8").split("\n")
    if not text or text[0].strip() != ARTIFACT_MAGIC:
        raise ParseError(f"{path}: not a fit artifact", 1)
    scalars: Dict[str, str] = {}
    vectors: Dict[str, np.ndarray] = {}
    matrices: Dict[str, np.ndarray] = {}
    i = 1
    ended = False
    while i < len(text):
        head = text[i].strip()
        line_no = i + 1
        i += 1
        if not head:
            continue
        parts = head.split()
        if parts[:2] == ["##", "end"]:
            ended = True
            break
        try:
            if parts[:2] == ["##", "scalars"]:
                if text[i].strip() != "key,value":
                    raise ParseError(f"{path}: expected key,value", i + 1)
                i += 1
                while i < len(text) and not text[i].startswith("##"):
                    if text[i].strip():
                        k, v = text[i].split(",", 1)
                        scalars[k.strip()] = v.strip()
                    i += 1
            elif parts[:2] == ["##", "vector"]:
                name, size = parts[2], int(parts[3])
                vectors[name] = np.array([float(x) for x in text[i : i + size]])
                i += size
            elif parts[:2] == ["##", "matrix"]:
                name, r, c = parts[2], int(parts[3]), int(parts[4])
                M = np.array([[float(x) for x in row.split(",")] for row in text[i : i + r]])
                if M.shape != (r, c):
                    raise ValueError(f"matrix {name} has shape {M.shape}, header says ({r}, {c})")
                matrices[name] = M.reshape(r, c)
                i += r
            else:
                raise ParseError(f"{path}: unknown section {head!r}", line_no)
        except ParseError:
            raise
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}: malformed section: {exc}", line_no) from None
    if not ended:
        raise ParseError(f"{path}: truncated artifact (no '## end')", len(text))
    return scalars, vectors, matrices


def load_fit(path) -> ModelFit:
    sc, vec, mat = _read_sections(path)
    try:

        def bw(key):
            return None if sc[key] == "auto" else float(sc[key])

        sm = SmoothingConfig(
            bandwidth_1d=bw("bandwidth_1d"),
            bandwidth_2d=bw("bandwidth_2d"),
            kernel=sc["kernel"],
            auto_constant=float(sc["auto_constant"]),
        )

        def surface(name):
            return CovarianceSurface(
                vec[f"{name}.s"],
                vec[f"{name}.u"],
                mat[name],
                raw_diagonal=vec.get(f"{name}.raw_diagonal"),
                signal_diagonal=vec.get(f"{name}.signal_diagonal"),
            )

        eig = Eigensystem(
            vec["eigen.grid"],
            vec["eigen.values"],
            mat["eigen.functions"].reshape(vec["eigen.values"].size, -1),
            float(sc["noise_variance"]),
        )
        est = CovarianceEstimates(
            n=int(sc["n"]),
            surfaces=SurfaceSet(*(surface(k) for k in ("c1", "c2", "c12", "c1y", "c2y"))),
            y_grid=vec["y_grid"],
            intercept=vec["intercept"],
            x1_grid=vec["x1_grid"],
            x1_mean=vec["x1_mean"],
            x2_grid=vec["x2_grid"],
            x2_mean=vec["x2_mean"],
            eigensystem2=eig,
            truncation=int(sc["truncation"]),
            recovery_bandwidth=float(sc["recovery_bandwidth"]),
            smoothing=sm,
        )
        lags1 = LagWindow(float(sc["lags1_lower"]), float(sc["lags1_upper"]))
        lags2 = LagWindow(float(sc["lags2_lower"]), float(sc["lags2_upper"]))
        degree, knots = int(sc["degree"]), int(sc["interior_knots"])
        return ModelFit(
            estimates=est,
            basis1=make_bspline_basis(degree, knots, lags1.as_tuple()),
            basis2=make_bspline_basis(degree, knots, lags2.as_tuple()),
            lags1=lags1,
            lags2=lags2,
            rho=(float(sc["rho1"]), float(sc["rho2"])),
            eval_grid=vec["eval_grid"],
            b1=mat["b1"],
            b2=mat["b2"],
            quadrature_nodes=int(sc["quadrature_nodes"]),
        )
    except KeyError as exc:
        raise ParseError(f"{path}: missing artifact entry {exc.args[0]!r}") from None


# --------------------------------------------------------------------------
# run configuration


def _pair(text: str) -> Tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'a,b', got {text!r}")
    return float(parts[0]), float(parts[1])


def _pair_list(text: str) -> Tuple[Tuple[float, float], ...]:
    return tuple(_pair(p) for p in text.split(";") if p.strip())


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _rho_grid(text: str) -> Tuple[float, float, int]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected 'lo,hi,count', got {text!r}")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if not (0 < lo <= hi and count >= 1):
        raise ValueError("rho grid needs 0 < lo <= hi and count >= 1")
    return lo, hi, count


def _bandwidth(text: str) -> Optional[float]:
    return None if text.strip().lower() == "auto" else float(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class RunConfig:
    """Every setting a subcommand can read, with its default."""

    seed: int = 0
    threads: int = 1
    # basis, quadrature, grids
    degree: int = 4
    interior_knots: int = 10
    quadrature_nodes: int = 30
    eval_grid_size: int = 100
    surface_grid_size: int = 100
    # smoothing and FPCA
    bandwidth_1d: Optional[float] = None
    bandwidth_2d: Optional[float] = None
    kernel: str = "epanechnikov"
    auto_constant: float = 1.0
    fve: float = 0.99
    # model
    lags1: Tuple[float, float] = (0.1, 0.4)
    lags2: Tuple[float, float] = (0.1, 0.4)
    rho: Optional[Tuple[float, float]] = None
    # selection
    d1_grid: Tuple[Tuple[float, float], ...] = ((0.1, 0.3), (0.1, 0.4), (0.1, 0.5))
    d2_grid: Tuple[Tuple[float, float], ...] = ((0.1, 0.3), (0.1, 0.4), (0.1, 0.5))
    rho_grid: Tuple[float, float, int] = (1e-5, 1e-2, 20)
    folds: int = 10
    joint: bool = False
    # simulation
    n: int = 100
    snr: float = 20.0
    reps: int = 20
    n_list: Tuple[int, ...] = (50, 100, 150, 200)
    uppers: Tuple[float, ...] = (0.3, 0.4, 0.5)
    lower: float = 0.1

    def model_config(self):
        from .model import ModelConfig

        return ModelConfig(
            degree=self.degree,
            interior_knots=self.interior_knots,
            quadrature_nodes=self.quadrature_nodes,
            eval_grid_size=self.eval_grid_size,
            surface_grid_size=self.surface_grid_size,
            fve=self.fve,
            smoothing=SmoothingConfig(
                bandwidth_1d=self.bandwidth_1d,
                bandwidth_2d=self.bandwidth_2d,
                kernel=self.kernel,
                auto_constant=self.auto_constant,
            ),
        )

    def rho_pairs(self) -> List[Tuple[float, float]]:
        lo, hi, count = self.rho_grid
        return [(float(r), float(r)) for r in np.geomspace(lo, hi, count)]

    def snapshot(self) -> Dict[str, object]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = _jsonable(v)
        return out


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


CONFIG_PARSERS = {
    "seed": int,
    "threads": int,
    "degree": int,
    "interior_knots": int,
    "quadrature_nodes": int,
    "eval_grid_size": int,
    "surface_grid_size": int,
    "bandwidth_1d": _bandwidth,
    "bandwidth_2d": _bandwidth,
    "kernel": str.strip,
    "auto_constant": float,
    "fve": float,
    "lags1": _pair,
    "lags2": _pair,
    "rho": _pair,
    "d1_grid": _pair_list,
    "d2_grid": _pair_list,
    "rho_grid": _rho_grid,
    "folds": int,
    "joint": _bool,
    "n": int,
    "snr": float,
    "reps": int,
    "n_list": _int_list,
    "uppers": _float_list,
    "lower": float,
}
assert set(CONFIG_PARSERS) == {f.name for f in fields(RunConfig)}


def parse_config_value(key: str, text: str):
    if key not in CONFIG_PARSERS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return CONFIG_PARSERS[key](text)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from None


def read_config_file(path) -> Dict[str, object]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: Dict[str, object] = {}
    for no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: expected 'key = value'")
        key, text = (p.strip() for p in line.split("=", 1))
        try:
            values[key] = parse_config_value(key, text)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return values


def build_config(file_values: Dict[str, object], overrides: Dict[str, object]) -> RunConfig:
    """Defaults, then file values, then command-line overrides."""
    merged = {**file_values, **{k: v for k, v in overrides.items() if v is not None}}
    cfg = replace(RunConfig(), **merged)
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.folds < 2:
        raise ConfigError("folds must be >= 2")
    if cfg.reps < 1:
        raise ConfigError("reps must be >= 1")
    if not 0 < cfg.fve <= 1:
        raise ConfigError("fve must lie in (0, 1]")
    try:
        cfg.model_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg
