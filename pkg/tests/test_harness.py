import json

import numpy as np
import pytest

from proxasym.cli import main as cli_main
from proxasym.errors import ConfigError, EmptySelection
from proxasym.harness import (
    Cell,
    ExperimentConfig,
    config_hash,
    emit_plots,
    paper_replication_config,
    parse_config,
    run,
    serialize_config,
    validate_config,
)


def small_config(tmp_path, **overrides):
    base = dict(
        loss={"name": "quadratic"},
        noise={"name": "gaussian", "sd": 1.0},
        entry_law="gaussian",
        grid=[Cell(n=80, kappa=0.5, tau=1.0)],
        seeds=[1],
        checks=["fit_bounds"],
        out_dir=str(tmp_path / "out"),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_config_round_trip(tmp_path):
    config = small_config(
        tmp_path,
        grid=[Cell(n=80, kappa=0.5, tau=1.0), Cell(n=120, kappa=0.25, tau=0.3)],
        seeds=[3, 8, 13],
        checks=["fit_bounds", "system"],
        loss={"name": "smoothed_huber", "k": 1.345},
    )
    config.tolerances["ctau"] = 0.11
    text = serialize_config(config)
    assert parse_config(text) == config
    assert config_hash(parse_config(text)) == config_hash(config)


def test_minimal_config_one_record(tmp_path):
    config = small_config(tmp_path)
    records = run(config)
    assert len(records) == 1
    assert records[0].passed
    assert "fit_bounds" in records[0].metrics
    out = tmp_path / "out"
    assert (out / "records.csv").exists()
    assert (out / "records.json").exists()
    assert (out / "summary.json").exists()


def test_batch_yields_cells_times_seeds(tmp_path):
    config = small_config(
        tmp_path,
        grid=[Cell(n=80, kappa=0.5, tau=1.0), Cell(n=60, kappa=0.25, tau=0.5)],
        seeds=[1, 2, 3],
        checks=["fit_bounds", "variance"],
    )
    records = run(config, write=False)
    assert len(records) == 6


def test_invalid_configs_raise(tmp_path):
    with pytest.raises(ConfigError):
        validate_config(small_config(tmp_path, grid=[Cell(n=10, kappa=0.01, tau=1.0)]))
    with pytest.raises(ConfigError):
        validate_config(small_config(tmp_path, seeds=[1, 1]))
    with pytest.raises(ConfigError):
        validate_config(small_config(tmp_path, checks=["nope"]))
    with pytest.raises(ConfigError):
        validate_config(small_config(tmp_path, loss={"name": "nope"}))
    with pytest.raises(ConfigError):
        validate_config(small_config(tmp_path, grid=[]))


def test_rerun_reproduces_metrics_bitwise(tmp_path):
    config = small_config(
        tmp_path, checks=["fit_bounds", "variance", "lop"], seeds=[4, 5]
    )
    first = run(config, write=False)
    second = run(config, write=False)
    a = json.dumps([r.metrics for r in first], sort_keys=True)
    b = json.dumps([r.metrics for r in second], sort_keys=True)
    assert a == b


def test_jobs_parallel_matches_serial(tmp_path):
    config = small_config(
        tmp_path, seeds=[1, 2, 3, 4], checks=["fit_bounds", "variance"]
    )
    serial = run(config, write=False)
    parallel = run(config, jobs=4, write=False)
    assert json.dumps([r.metrics for r in serial], sort_keys=True) == json.dumps(
        [r.metrics for r in parallel], sort_keys=True
    )


def test_emit_plots_variance_and_tau_limit(tmp_path):
    config = small_config(
        tmp_path,
        grid=[Cell(n=60, kappa=0.5, tau=1.0), Cell(n=120, kappa=0.5, tau=1.0)],
        seeds=list(range(1, 13)),
        checks=["variance", "tau_limit"],
        loss={"name": "smoothed_huber_ridge", "k": 1.345, "omega": 0.05},
        tau_grid=[0.5, 0.1],
    )
    records = run(config, write=False)
    files = emit_plots(records, tmp_path / "plots")
    names = {f.name for f in files}
    assert {"variance.csv", "tau_limit.csv", "metrics.csv"} <= names
    header = (tmp_path / "plots" / "variance.csv").read_text().splitlines()[0]
    assert header == "n,var_mean,var_se"
    header = (tmp_path / "plots" / "tau_limit.csv").read_text().splitlines()[0]
    assert header == "tau,r,c"
    with pytest.raises(EmptySelection):
        emit_plots([], tmp_path / "plots2")


def test_run_attaches_downstream_error_without_killing_batch(tmp_path, monkeypatch):
    import proxasym.harness as hz

    def boom(*args, **kwargs):
        raise hz.ProxasymError("synthetic failure")

    monkeypatch.setattr(hz, "lop_report", boom)
    config = small_config(tmp_path, seeds=[1, 2], checks=["fit_bounds", "lop"])
    records = run(config, write=False)
    assert len(records) == 2
    assert all(not r.passed for r in records)
    assert all("synthetic failure" in r.error for r in records)


def test_paper_replication_preset_valid():
    config = paper_replication_config()
    validate_config(config)
    assert [c.n for c in config.grid] == [1000]
    assert len(config.seeds) == 20


def test_paper_replication_scaled_clone_runs_green(tmp_path):
    from proxasym.fixed_point import solve_system
    from proxasym.losses import smoothed_huber
    from proxasym.noise import gaussian_noise

    config = paper_replication_config(out_dir=str(tmp_path / "rep"), n=500, n_seeds=4)
    records = run(config)
    assert len(records) == 4
    assert all(r.passed for r in records)
    prediction = solve_system(0.5, 1.0, smoothed_huber(1.345), gaussian_noise(1.0))
    for r in records:
        assert r.metrics["system"]["r"] == pytest.approx(prediction.r, abs=1e-12)
        assert r.metrics["ctau"]["rel_error"] <= 0.05


def test_harness_fit_metrics_match_direct_call(tmp_path, quad_loss, std_normal):
    from proxasym.estimator import fit, gen_design
    from proxasym.streams import derive_seed

    config = small_config(tmp_path, checks=["variance"], seeds=[9])
    records = run(config, write=False)
    cell = config.grid[0]
    design = gen_design(
        cell.n, int(round(cell.kappa * cell.n)), "gaussian",
        derive_seed(9, "cell", 0), noise=std_normal,
    )
    direct = fit(design, quad_loss, cell.tau)
    expected = float(np.linalg.norm(direct.beta_hat) ** 2)
    assert records[0].metrics["variance"]["beta_norm_sq"] == pytest.approx(
        expected, abs=1e-12
    )


def test_cli_solve_fit_and_run(tmp_path, capsys):
    assert cli_main([
        "solve", "--kappa", "0.5", "--tau", "0.1",
        "--loss", "quadratic", "--noise", "gaussian",
        "--out", str(tmp_path / "sol.json"),
    ]) == 0
    sol = json.loads((tmp_path / "sol.json").read_text())
    assert sol["c"] == pytest.approx(0.7416573867739414, abs=1e-9)

    assert cli_main([
        "fit", "--n", "60", "--p", "30", "--tau", "1.0",
        "--loss", "smoothed_huber,k=1.345", "--seed", "3",
        "--out", str(tmp_path / "fit.json"),
    ]) == 0
    payload = json.loads((tmp_path / "fit.json").read_text())
    assert payload["grad_norm"] <= 1e-8

    config = small_config(tmp_path, checks=["fit_bounds"])
    config_path = tmp_path / "config.toml"
    config_path.write_text(serialize_config(config))
    assert cli_main(["run", "--config", str(config_path)]) == 0
    capsys.readouterr()


def test_cli_verify(tmp_path):
    code = cli_main([
        "verify", "--n", "300", "--kappa", "0.5", "--tau", "1.0",
        "--loss", "quadratic", "--seed", "1", "--seeds", "4",
        "--ks-tol", "0.2", "--out", str(tmp_path / "verify.json"),
    ])
    assert code == 0
    payload = json.loads((tmp_path / "verify.json").read_text())
    assert payload["rel_error_r"] <= 0.05
    assert payload["rel_error_c"] <= 0.05


def test_cli_loo_lop(tmp_path):
    assert cli_main([
        "loo", "--n", "40", "--p", "16", "--tau", "1.0",
        "--loss", "quadratic", "--seed", "2", "--indices", "4",
        "--out", str(tmp_path / "loo.json"), "--csv", str(tmp_path / "loo.csv"),
    ]) == 0
    loo = json.loads((tmp_path / "loo.json").read_text())
    assert loo["n_indices"] == 4 and loo["max_err_beta"] <= 1e-8
    csv_lines = (tmp_path / "loo.csv").read_text().splitlines()
    assert csv_lines[0] == "seed,index,c_i,r_tilde,err_beta,err_resid"
    assert len(csv_lines) == 5

    assert cli_main([
        "loo", "--n", "30", "--p", "10", "--tau", "1.0",
        "--loss", "quadratic", "--seed", "2", "--all",
        "--out", str(tmp_path / "loo_all.json"),
    ]) == 0
    assert json.loads((tmp_path / "loo_all.json").read_text())["n_indices"] == 30

    assert cli_main([
        "lop", "--n", "40", "--p", "16", "--tau", "1.0",
        "--loss", "quadratic", "--seed", "2",
        "--out", str(tmp_path / "lop.json"),
    ]) == 0
    lop = json.loads((tmp_path / "lop.json").read_text())
    assert lop["err_vector"] <= 1e-8
