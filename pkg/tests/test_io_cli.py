import csv
import json

import numpy as np
import pytest

from lagflm.cli import main
from lagflm.errors import ConfigError, DenseGridError, ParseError
from lagflm.io import (
    build_config,
    load_dataset_csv,
    load_fit,
    read_config_file,
    read_surface_csv,
    save_dataset_csv,
    save_fit,
    write_surface_csv,
)
from lagflm.model import estimate_covariances, fit_from_estimates, predict
from lagflm.sim import SimConfig, generate_dataset
from lagflm.smoothing import SparseFunctionalSample

HEADER = "subject_id,variable,time,value\n"


def write(path, body):
    path.write_text(HEADER + body, encoding="utf-8")
    return path


# dataset files


def test_three_row_file(tmp_path):
    p = write(tmp_path / "d.csv", "a,y,0.5,1.0\na,x1,0.2,2.0\na,x2,0.3,3.0\n")
    b = load_dataset_csv(p)
    assert b.n == 1 and b.subject_ids == ("a",)
    assert b.x1.values.shape == (1, 1)
    assert b.y[0].values[0] == 1.0 and b.x2[0].times[0] == 0.3


def test_round_trip_is_bitwise(tmp_path):
    sim = generate_dataset(SimConfig(n=12, seed=2))
    p = tmp_path / "d.csv"
    save_dataset_csv(sim.data, p)
    back = load_dataset_csv(p).to_dataset()
    assert np.array_equal(back.x1.values, sim.data.x1.values)
    assert np.array_equal(back.x1.grid, sim.data.x1.grid)
    for u, v in zip(back.y + back.x2, sim.data.y + sim.data.x2):
        assert u.subject_id == v.subject_id
        assert np.array_equal(u.times, v.times) and np.array_equal(u.values, v.values)


@pytest.mark.parametrize(
    "body,line",
    [
        ("a,y,1.5,1.0\n", 2),
        ("a,y,0.5,1.0\na,x1,0.2,oops\n", 3),
        ("a,y,0.5,1.0\na,z,0.2,1.0\n", 3),
        ("a,y,0.5\n", 2),
        ("a,y,0.5,nan\n", 2),
        (",y,0.5,1.0\n", 2),
        ("a,x1,0.2,1.0\na,x2,0.3,1.0\na,y,0.5,1.0\na,y,0.5,2.0\n", 5),
    ],
)
def test_malformed_rows_name_their_line(tmp_path, body, line):
    with pytest.raises(ParseError) as info:
        load_dataset_csv(write(tmp_path / "d.csv", body))
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_bad_header(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("id,var,t,v\n", encoding="utf-8")
    with pytest.raises(ParseError):
        load_dataset_csv(p)


def test_differing_dense_grids(tmp_path):
    body = (
        "a,y,0.5,1\na,x2,0.3,1\na,x1,0.0,1\na,x1,0.5,1\na,x1,1.0,1\n"
        "b,y,0.5,1\nb,x2,0.3,1\nb,x1,0.0,1\nb,x1,0.4,1\nb,x1,1.0,1\n"
    )
    with pytest.raises(DenseGridError):
        load_dataset_csv(write(tmp_path / "d.csv", body))


def test_missing_response_allowed_for_prediction(tmp_path):
    p = write(tmp_path / "d.csv", "a,x1,0.2,2.0\na,x2,0.3,3.0\n")
    with pytest.raises(ParseError):
        load_dataset_csv(p)
    assert load_dataset_csv(p, require_y=False).y[0] is None


# surfaces


def test_surface_two_by_two(tmp_path):
    p = tmp_path / "s.csv"
    S = np.array([[1.0, 2.0], [3.0, 4.0]]) / 3
    write_surface_csv(S, [0.1, 0.2], [0.5, 0.6], p)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["s", "t", "value"] and len(rows) == 5
    # t varies slowest
    assert [r[:2] for r in rows[1:3]] == [["0.10000000000000001", "0.5"], ["0.20000000000000001", "0.5"]]
    back, s, t = read_surface_csv(p)
    assert np.array_equal(back, S)
    assert np.array_equal(s, [0.1, 0.2]) and np.array_equal(t, [0.5, 0.6])


def test_zero_surface(tmp_path):
    p = tmp_path / "s.csv"
    write_surface_csv(np.zeros((3, 4)), np.linspace(0, 1, 3), np.linspace(0, 1, 4), p)
    assert all(float(r[2]) == 0.0 for r in list(csv.reader(p.open()))[1:])


# fit artifact


def test_fit_artifact_round_trip(tmp_path, sim100):
    m = fit_from_estimates(estimate_covariances(sim100.data), (0.1, 0.4), (0.1, 0.4), (1e-3, 2e-3))
    p = tmp_path / "fit.lagflm"
    save_fit(m, p)
    back = load_fit(p)
    assert back.rho == m.rho and back.lags1 == m.lags1
    assert np.array_equal(back.b1, m.b1) and np.array_equal(back.b2, m.b2)
    assert np.array_equal(back.eigensystem2.eigenfunctions, m.eigensystem2.eigenfunctions)
    t = np.linspace(*m.valid_interval, 9)
    for i in range(3):
        x1 = SparseFunctionalSample("n", sim100.grid, sim100.data.x1.values[i])
        assert np.array_equal(predict(back, x1, sim100.data.x2[i], t), predict(m, x1, sim100.data.x2[i], t))


def test_artifact_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.lagflm"
    p.write_text("hello\n")
    with pytest.raises(ParseError):
        load_fit(p)


# configuration


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nseed = 7\nlags1 = 0.1, 0.3\nrho_grid = 1e-4,1e-2,5\n")
    cfg = build_config(read_config_file(p), {"seed": 9, "folds": None})
    assert cfg.seed == 9 and cfg.lags1 == (0.1, 0.3) and cfg.rho_grid == (1e-4, 1e-2, 5)
    assert len(cfg.rho_pairs()) == 5


def test_config_unknown_key(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("sed = 7\n")
    with pytest.raises(ConfigError):
        read_config_file(p)


def test_config_validation():
    with pytest.raises(ConfigError):
        build_config({}, {"folds": 1})


# command line


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run_cli("simulate", "--n", 30, "--seed", 4, "--out", out) == 0
    return out / "dataset.csv"


def test_cli_simulate_and_manifest(simulated):
    man = json.loads((simulated.parent / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 4
    assert man["config"]["n"] == 30 and "version" in man
    assert "dataset.csv" in man["outputs"]
    assert load_dataset_csv(simulated).n == 30


def test_cli_fit_and_predict(simulated, tmp_path, capsys):
    fit_dir = tmp_path / "fit"
    assert run_cli("fit", simulated, "--rho", "1e-3,1e-3", "--out", fit_dir) == 0
    assert capsys.readouterr().out.startswith("npe,")
    for name in ("fit.lagflm", "beta1.csv", "beta2.csv", "intercept.csv", "fit_summary.csv", "manifest.json"):
        assert (fit_dir / name).exists()
    B, s, t = read_surface_csv(fit_dir / "beta1.csv")
    assert B.shape == (50, 100) and s[0] == 0.1 and s[-1] == 0.4
    pred_dir = tmp_path / "pred"
    assert run_cli("predict", fit_dir / "fit.lagflm", simulated, "--out", pred_dir) == 0
    rows = list(csv.DictReader((pred_dir / "predictions.csv").open()))
    assert rows and all(np.isfinite(float(r["predicted"])) for r in rows)


def test_cli_select(simulated, tmp_path, capsys):
    out = tmp_path / "sel"
    code = run_cli(
        "select", simulated, "--d1-grid", "0.1,0.3;0.1,0.4", "--d2-grid", "0.1,0.4",
        "--rho-grid", "1e-4,1e-2,3", "--folds", 3, "--out", out,
    )
    assert code == 0
    assert "best lags1" in capsys.readouterr().out
    rows = list(csv.DictReader((out / "selection.csv").open()))
    assert len(rows) == 2 and sum(int(r["best"]) for r in rows) == 1


def test_cli_errors_go_to_stderr(tmp_path, capsys):
    bad = write(tmp_path / "d.csv", "a,y,1.5,1.0\n")
    assert run_cli("fit", bad, "--out", tmp_path / "o") == 1
    err = capsys.readouterr()
    assert "line 2" in err.err and err.out == ""
    assert run_cli("fit", tmp_path / "missing.csv", "--out", tmp_path / "o") == 1
    cfg = tmp_path / "c.cfg"
    cfg.write_text("bogus = 1\n")
    assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "o") == 1
    with pytest.raises(SystemExit):
        run_cli("fit", bad, "--rho", "abc")
