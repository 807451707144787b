"""Command-line entry point.

Every subcommand writes its results into ``--out`` together with
``manifest.json`` (command, resolved configuration, seed, package version and
checksums of inputs and outputs). Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import LagFLMError
from .io import (
    RunConfig,
    build_config,
    fmt,
    load_dataset_csv,
    load_fit,
    parse_config_value,
    read_config_file,
    save_dataset_csv,
    save_fit,
    write_surface_csv,
)
from .model import LagWindow, coefficient_surface, predict
from .selection import Evaluator, SearchSpace, in_sample_npe, select_hyperparameters, select_rho
from .sim import SimConfig, generate_dataset, run_lag_experiment, run_table1
from .smoothing import SparseFunctionalSample

log = logging.getLogger("lagflm")

SURFACE_POINTS = 50


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Output directory bookkeeping for one command invocation."""

    def __init__(self, command: str, cfg: RunConfig, out: Path, argv: Sequence[str]):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.argv = list(argv)
        self.inputs: Dict[str, str] = {}
        self.outputs: List[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def add_input(self, path) -> Path:
        p = Path(path)
        self.inputs[str(p)] = _sha256(p)
        return p

    def write_csv(self, name: str, header: Sequence[str], rows) -> Path:
        p = self.path(name)
        with p.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(v) if isinstance(v, float) else v for v in r])
        return p

    def finish(self) -> None:
        manifest = {
            "package": "lagflm",
            "version": __version__,
            "command": self.command,
            "argv": self.argv,
            "seed": self.cfg.seed,
            "config": self.cfg.snapshot(),
            "inputs": self.inputs,
            "outputs": {p.name: _sha256(p) for p in self.outputs},
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(run: Run, args) -> None:
    cfg = run.cfg
    sim = generate_dataset(
        SimConfig(n=cfg.n, snr=cfg.snr, seed=cfg.seed, lags1=cfg.lags1, lags2=cfg.lags2)
    )
    save_dataset_csv(sim.data, run.path("dataset.csv"))
    log.info("simulated %d subjects", cfg.n)


def _load_training(run: Run, path):
    return load_dataset_csv(run.add_input(path)).to_dataset()


def cmd_fit(run: Run, args) -> None:
    cfg = run.cfg
    data = _load_training(run, args.data)
    ev = Evaluator(data, cfg.model_config())
    l1, l2 = LagWindow.of(cfg.lags1), LagWindow.of(cfg.lags2)
    if cfg.rho is None:
        rho, value, _ = select_rho(ev, data, l1, l2, cfg.rho_pairs())
        log.info("rho selected by in-sample NPE: %s", rho)
    else:
        rho = cfg.rho
        value = in_sample_npe(ev, data, l1, l2, rho)
    m = ev.fit(l1, l2, rho)
    save_fit(m, run.path("fit.lagflm"))
    for which, lags in ((1, l1), (2, l2)):
        s = np.linspace(lags.lower, lags.upper, SURFACE_POINTS)
        write_surface_csv(
            coefficient_surface(m, which, s, m.eval_grid), s, m.eval_grid, run.path(f"beta{which}.csv")
        )
    run.write_csv(
        "intercept.csv", ["t", "value"], zip(map(float, m.eval_grid), map(float, m.intercept))
    )
    lo, hi = m.valid_interval
    summary = [
        ("npe", float(value)),
        ("rho1", float(rho[0])),
        ("rho2", float(rho[1])),
        ("valid_lower", lo),
        ("valid_upper", hi),
        ("truncation", m.estimates.truncation),
        ("noise_variance", float(m.eigensystem2.noise_variance)),
    ]
    run.write_csv("fit_summary.csv", ["key", "value"], summary)
    print(f"npe,{fmt(float(value))}")


def cmd_predict(run: Run, args) -> None:
    m = load_fit(run.add_input(args.model))
    bundle = load_dataset_csv(run.add_input(args.data), require_y=False)
    lo, hi = m.valid_interval
    rows = []
    for i, sid in enumerate(bundle.subject_ids):
        x2 = bundle.x2[i]
        y = bundle.y[i]
        if y is not None:
            keep = (y.times >= lo - 1e-12) & (y.times <= hi + 1e-12)
            times, observed = y.times[keep], y.values[keep]
            if not keep.all():
                log.warning("subject %s: %d response times outside [%g, %g] skipped", sid, int((~keep).sum()), lo, hi)
        else:
            times, observed = m.eval_grid, None
        if times.size == 0:
            continue
        x1 = SparseFunctionalSample(sid, bundle.x1.grid, bundle.x1.values[i])
        pred = predict(m, x1, x2, times)
        for k, (t, p) in enumerate(zip(times, pred)):
            rows.append((sid, float(t), float(p), "" if observed is None else float(observed[k])))
    run.write_csv("predictions.csv", ["subject_id", "time", "predicted", "observed"], rows)


def cmd_select(run: Run, args) -> None:
    cfg = run.cfg
    data = _load_training(run, args.data)
    space = SearchSpace(cfg.d1_grid, cfg.d2_grid, tuple(cfg.rho_pairs()), cfg.folds, cfg.joint)
    res = select_hyperparameters(data, space, cfg.seed, cfg.model_config())
    rows = []
    for (l1, l2), sc in res.cv_table.items():
        best = (l1, l2) == res.best_lags
        rows.append(
            (l1.lower, l1.upper, l2.lower, l2.upper, sc.rho[0], sc.rho[1], sc.npe, sc.cv, int(best))
        )
    header = [
        "lags1_lower", "lags1_upper", "lags2_lower", "lags2_upper",
        "rho1", "rho2", "npe", "cv", "best",
    ]
    run.write_csv("selection.csv", header, rows)
    l1, l2 = res.best_lags
    report = (
        f"best lags1 {l1}\nbest lags2 {l2}\nbest rho {fmt(res.best_rho[0])},{fmt(res.best_rho[1])}\n"
        f"npe {fmt(res.best.npe)}\ncv {fmt(res.best.cv)}\n"
    )
    run.path("selection.txt").write_text(report, encoding="utf-8")
    sys.stdout.write(report)


def cmd_bench_table1(run: Run, args) -> None:
    cfg = run.cfg
    template = SimConfig(n=cfg.n, snr=cfg.snr, seed=cfg.seed, lags1=cfg.lags1, lags2=cfg.lags2)
    rows = run_table1(
        template, cfg.n_list, cfg.reps, cfg.threads, cfg.model_config(), cfg.rho_pairs()
    )
    run.write_csv(
        "table1.csv",
        ["n", "reps", "mean_npe_x100", "se_npe_x100"],
        [(r.n, cfg.reps, 100 * r.mean_npe, 100 * r.se_npe) for r in rows],
    )
    run.write_csv(
        "table1_replications.csv",
        ["n", "replication", "npe", "rho1", "rho2"],
        [
            (r.n, k, float(v), float(rho[0]), float(rho[1]))
            for r in rows
            for k, (v, rho) in enumerate(zip(r.npes, r.rhos))
        ],
    )
    for r in rows:
        print(f"{r.n},{fmt(100 * r.mean_npe)}")


def cmd_bench_lags(run: Run, args) -> None:
    cfg = run.cfg
    template = SimConfig(n=cfg.n, snr=cfg.snr, seed=cfg.seed, lags1=cfg.lags1, lags2=cfg.lags2)
    res = run_lag_experiment(
        template, cfg.uppers, cfg.reps, cfg.lower, cfg.folds, cfg.threads,
        cfg.model_config(), cfg.rho_pairs(),
    )
    run.write_csv(
        "lag_choices.csv", ["replication", "chosen_upper"], list(enumerate(map(float, res.choices)))
    )
    counts = [(float(u), sum(abs(c - u) < 1e-12 for c in res.choices)) for u in cfg.uppers]
    run.write_csv("lag_summary.csv", ["upper", "count"], counts)
    print(f"hits,{res.hits},{len(res.choices)}")


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "select": cmd_select,
    "bench-table1": cmd_bench_table1,
    "bench-lags": cmd_bench_lags,
}


# --------------------------------------------------------------------------
# argument parsing


def _config_type(key: str):
    def parse(text):
        try:
            return parse_config_value(key, text)
        except LagFLMError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    parse.__name__ = key
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lagflm", description="Lag historical functional linear model")
    p.add_argument("--version", action="version", version=f"lagflm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat 'key = value' settings file")
    common.add_argument("--seed", type=_config_type("seed"))
    common.add_argument("--threads", type=_config_type("threads"))
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("-v", "--verbose", action="count", default=0)

    s = sub.add_parser("simulate", parents=[common], help="generate a simulated dataset")
    s.add_argument("--n", type=_config_type("n"))

    f = sub.add_parser("fit", parents=[common], help="fit the model for given lags")
    f.add_argument("data", type=Path)
    f.add_argument("--lags1", type=_config_type("lags1"), metavar="A,B")
    f.add_argument("--lags2", type=_config_type("lags2"), metavar="A,B")
    f.add_argument("--rho", type=_config_type("rho"), metavar="R1,R2",
                   help="ridge penalties; omitted = choose by in-sample NPE over --rho-grid")
    f.add_argument("--rho-grid", type=_config_type("rho_grid"), metavar="LO,HI,COUNT")

    pr = sub.add_parser("predict", parents=[common], help="predict responses of new subjects")
    pr.add_argument("model", type=Path, help="fit artifact written by 'fit'")
    pr.add_argument("data", type=Path, help="new-subject CSV; y rows optional")

    se = sub.add_parser("select", parents=[common], help="choose lags and penalties")
    se.add_argument("data", type=Path)
    se.add_argument("--d1-grid", type=_config_type("d1_grid"), metavar="A,B;C,D")
    se.add_argument("--d2-grid", type=_config_type("d2_grid"), metavar="A,B;C,D")
    se.add_argument("--rho-grid", type=_config_type("rho_grid"), metavar="LO,HI,COUNT")
    se.add_argument("--folds", type=_config_type("folds"))
    se.add_argument("--joint", action="store_const", const=True, default=None,
                    help="pair the two window lists instead of crossing them")

    t = sub.add_parser("bench-table1", parents=[common], help="NPE under true lags by sample size")
    t.add_argument("--reps", type=_config_type("reps"))
    t.add_argument("--n-list", type=_config_type("n_list"), metavar="N1,N2,...")

    lg = sub.add_parser("bench-lags", parents=[common], help="shared upper-lag selection rate")
    lg.add_argument("--reps", type=_config_type("reps"))
    lg.add_argument("--uppers", type=_config_type("uppers"), metavar="U1,U2,...")
    lg.add_argument("--n", type=_config_type("n"))
    return p


OVERRIDE_KEYS = (
    "seed", "threads", "n", "lags1", "lags2", "rho", "rho_grid",
    "d1_grid", "d2_grid", "folds", "joint", "reps", "n_list", "uppers",
)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = read_config_file(args.config) if args.config else {}
        overrides = {k: getattr(args, k, None) for k in OVERRIDE_KEYS}
        cfg = build_config(file_values, overrides)
        run = Run(args.command, cfg, args.out, argv)
        if args.config:
            run.add_input(args.config)
        # single-threaded BLAS keeps results bitwise independent of the thread budget
        with threadpool_limits(1):
            COMMANDS[args.command](run, args)
        run.finish()
    except (LagFLMError, OSError, ValueError) as exc:
        print(f"lagflm {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
