import csv
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import kalman_rts, tme2_linear_transition
from tmesmooth import bench
from tmesmooth.cli import main
from tmesmooth.config import ExperimentConfig, load_config, parse_config_text
from tmesmooth.simulate import Record, Trajectory


def read_csv(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def test_rmse_examples():
    x = np.random.default_rng(0).normal(size=(10, 3))
    assert bench.rmse(x, x) == 0.0
    assert bench.rmse([[0.0], [0.0]], [[3.0], [4.0]]) == pytest.approx(np.sqrt(12.5))
    assert bench.rmse(x, x + 2.5) == pytest.approx(2.5)
    assert bench.rmse(x, x - 0.7) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        bench.rmse(x, x[:-1])


def test_table1_stub_estimate_equals_truth(monkeypatch):
    cfg = ExperimentConfig(seed=0, T=4, runs=1, filters=("ghf-em", "ekf-rk4"), smoothers=("ghs-em",))
    truth = np.arange(15.0).reshape(5, 3)
    rec = Record(0, Trajectory(np.arange(5.0), truth), truth[1:, :1])

    class Stub:
        def filter(self, name, data):
            return SimpleNamespace(method=name)

        def smoother(self, name):
            return lambda fr: SimpleNamespace(means=truth)

    monkeypatch.setattr(bench, "build_pipeline", lambda config: Stub())
    monkeypatch.setattr(bench, "simulate_records", lambda config, indices: [rec for _ in indices])
    summary = bench.run_table1(cfg)
    np.testing.assert_array_equal(summary.mean, np.zeros((2, 1)))
    np.testing.assert_array_equal(summary.std, np.zeros((2, 1)))
    assert summary.count == 1 and summary.failures == ()


def test_table1_common_records_and_layout(tmp_path):
    cfg = ExperimentConfig(seed=5, T=10, n_sub=10, runs=3)
    summary = bench.run_table1(cfg)
    assert summary.mean.shape == (4, 4) and summary.count == 3
    assert np.all(summary.mean > 0)
    # every cell uses the same three runs
    assert summary.per_run.shape == (3, 4, 4)
    np.testing.assert_allclose(summary.per_run.std(axis=0, ddof=1), summary.std)
    # partner smoothers reuse filter predictions; recomputing gives the same numbers
    assert summary.best_smoother("ghf-em") in cfg.smoothers
    paths = bench.write_table1(summary, cfg, tmp_path)
    header, rows = read_csv(paths[0])
    assert header[0] == "filter" and header[1] == "eks-rk4:mean" and header[-2:] == ["n", "failures"]
    assert [r[0] for r in rows] == list(cfg.filters)
    assert float(rows[2][5]) == summary.cell("ghf-tme-2", "ghs-tme-2")[0]
    text = paths[0].read_text()
    assert "# seed = 5" in text and "workers" not in text
    _, run_rows = read_csv(paths[1])
    assert len(run_rows) == 3 * 16


def test_table1_failed_runs_are_reported(tmp_path):
    cfg = ExperimentConfig(seed=8, T=10, n_sub=2, dt=1.0, runs=2, filters=("ghf-em",), smoothers=("ghs-em",))
    with np.errstate(all="ignore"):
        summary = bench.run_table1(cfg)
    assert summary.count + len(summary.failures) == 2
    assert len(summary.failures) >= 1
    path = bench.write_table1(summary, cfg, tmp_path)[0]
    assert "failed run 0 (seed 8)" in path.read_text()


def test_single_on_linear_fixture_matches_rts_oracle(tmp_path, linear_config, linear_F):
    cfg = linear_config.with_overrides(filter="ghf-tme-2", smoother="ghs-tme-2")
    rec, fr, sr = bench.run_single(cfg)
    path = bench.write_single((rec, fr, sr), cfg, tmp_path)
    header, rows = read_csv(path)
    assert len(rows) == cfg.T
    data = np.array([[float(v) for v in r] for r in rows])
    A, Q = tme2_linear_transition(linear_F, cfg.sigma * np.eye(2), cfg.dt)
    init = cfg.build_init()
    mf, Pf, ms, Ps = kalman_rts(A, Q, np.array([[1.0, 0.0]]), np.array([[cfg.meas_noise]]),
                                init.mean, init.cov, rec.data)
    col = {name: i for i, name in enumerate(header)}
    np.testing.assert_allclose(data[:, [col["ms0"], col["ms1"]]], ms[1:], atol=1e-8)
    np.testing.assert_allclose(data[:, [col["Ps00"], col["Ps11"]]], Ps[1:, [0, 1], [0, 1]], atol=1e-8)
    np.testing.assert_allclose(data[:, [col["mf0"], col["mf1"]]], mf[1:], atol=1e-8)
    np.testing.assert_array_equal(data[:, col["y0"]], rec.data[:, 0])


def test_single_without_measurements_emits_prior(tmp_path):
    cfg = ExperimentConfig(seed=1, T=0, n_sub=10)
    path = bench.write_single(bench.run_single(cfg), cfg, tmp_path)
    header, rows = read_csv(path)
    assert len(rows) == 1
    row = dict(zip(header, rows[0]))
    assert row["k"] == "0" and row["y0"] == ""
    assert float(row["mf0"]) == 0.0 and float(row["Pf00"]) == 1.0 and float(row["Ps22"]) == 1.0


def test_cli_single_lorenz_default(tmp_path, capsys):
    assert main(["single", "--seed", "2", "--nsub", "20", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.strip()
    header, rows = read_csv(tmp_path / "single-lorenz63.csv")
    assert out.endswith("single-lorenz63.csv")
    assert len(rows) == 100
    assert header[:5] == ["k", "t", "x0", "x1", "x2"]
    assert "resolved filter = ghf-tme-2" in (tmp_path / "single-lorenz63.csv").read_text()


def test_cli_constants(tmp_path):
    code = main(["constants", "--seed", "1", "--order", "1", "--set", "box_samples=50", "--out", str(tmp_path)])
    assert code == 0
    header, rows = read_csv(tmp_path / "constants-lorenz63.csv")
    values = {r[0]: (r[1], r[2]) for r in rows}
    assert header == ["name", "value", "kind"]
    assert float(values["c_Q"][0]) == pytest.approx(0.5)
    assert values["c_Q"][1] == "estimate" and values["c_P"][1] == "supplied"
    assert values["c_G"][1] == "derived"


def test_cli_fig1_and_config_file(tmp_path):
    cfg_file = tmp_path / "exp.cfg"
    cfg_file.write_text("# small run\nseed = 4\nT = 6\nn_sub = 10\nruns = 3\nsigmas = 0.5, 2\n")
    assert main(["fig1", "--config", str(cfg_file), "--out", str(tmp_path)]) == 0
    for tag in ("sigma0.5", "sigma2"):
        header, rows = read_csv(tmp_path / f"fig1-{tag}.csv")
        assert header == ["k", "mean", "ci_low", "ci_high"]
        assert len(rows) == 6
        for r in rows:
            lo, mid, hi = float(r[2]), float(r[1]), float(r[3])
            assert lo <= mid <= hi
    assert main(["fig1", "--config", str(cfg_file), "--sigma", "1", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "fig1-sigma1.csv").exists()


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert main(["single", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("tmesmooth single: error:") and "seed" in err
    assert main(["table1", "--seed", "1", "--filters", "ghs-em", "--out", str(tmp_path)]) == 1
    assert main(["single", "--seed", "1", "--set", "nope=3", "--out", str(tmp_path)]) == 1
    assert main(["single", "--seed", "1", "--sigma", "1,2", "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit):
        main(["bogus"])


def test_table1_and_fig1_bytes_do_not_depend_on_workers(tmp_path):
    args = ["--seed", "6", "--runs", "4", "--nsub", "10", "--set", "T=8"]
    for w in ("1", "2"):
        assert main(["table1", *args, "--workers", w, "--out", str(tmp_path / w)]) == 0
        assert main(["fig1", *args, "--workers", w, "--out", str(tmp_path / w)]) == 0
    names = sorted(p.name for p in (tmp_path / "1").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "2").iterdir())
    for name in names:
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()


def test_config_parsing(tmp_path):
    items = parse_config_text("seed = 3\nfilters = ghf-em, ekf-rk4\ninit_mean = 1, 2, 3\n\n# c\n")
    assert items["seed"] == 3 and items["filters"] == ("ghf-em", "ekf-rk4")
    path = tmp_path / "c.cfg"
    path.write_text("seed = 3\nmodel = ou\nsigma = 0.5\n")
    cfg = load_config(path, runs=7)
    assert (cfg.seed, cfg.model, cfg.sigma, cfg.runs) == (3, "ou", 0.5, 7)
    with pytest.raises(ValueError):
        parse_config_text("unknown_key = 1\n")
