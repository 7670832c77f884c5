"""Experiment orchestration: config files, seeded replication grids, records.

A config names a loss, a noise law, an entry law, a grid of (n, kappa, tau)
cells, a seed list, and the checks to run. Each (cell, seed) pair produces
exactly one RunRecord holding per-check metrics and a pass/fail verdict
against the declared tolerances. All randomness flows through named
counter-based streams keyed by (seed, cell index, purpose), so adding checks
never perturbs existing ones.
"""

import concurrent.futures
import hashlib
import json
import time

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .diagnostics import loo_report, lop_report, residual_law_check
from .errors import ConfigError, EmptySelection, ProxasymError
from .estimator import fit, fit_bound_report, gen_design
from .fixed_point import solve_system, solve_tau_limit
from .losses import loss_from_config
from .noise import noise_from_config
from .streams import derive_seed

KNOWN_CHECKS = (
    "system",
    "fit_bounds",
    "loo",
    "lop",
    "residual_law",
    "variance",
    "ctau",
    "tau_limit",
)

DEFAULT_TOLERANCES = {
    "system": 1e-9,          # max equation residual, relative to 1 + r^2
    "fit_bounds": 1e-10,     # allowed bound slack violation
    "loo": 1e-10,            # allowed c_i bound violation
    "lop": 1e-10,            # trace identity residual / xi_n floor
    "residual_law": 0.08,    # single-fit KS distance
    "variance": float("inf"),  # informational per seed; aggregated in summary
    "ctau": 0.05,            # relative error of c_tau vs prediction
    "tau_limit": 0.0,        # requires a monotone increasing r path
}

DEFAULT_TAU_GRID = [1.0, 0.5, 0.1, 0.05, 0.01]


@dataclass
class Cell:
    n: int
    kappa: float
    tau: float


@dataclass
class ExperimentConfig:
    loss: dict
    noise: dict
    entry_law: str
    grid: List[Cell]
    seeds: List[int]
    checks: List[str]
    out_dir: str = "runs"
    loo_indices: int = 25
    tau_grid: List[float] = field(default_factory=lambda: list(DEFAULT_TAU_GRID))
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))


@dataclass
class RunRecord:
    config_hash: str
    cell_index: int
    n: int
    kappa: float
    tau: float
    seed: int
    metrics: dict
    passed: bool
    wall_clock: float
    library_version: str
    error: Optional[str] = None


def validate_config(config):
    if not config.grid:
        raise ConfigError("grid", "at least one cell is required")
    for i, cell in enumerate(config.grid):
        p = int(round(cell.kappa * cell.n))
        if p < 1:
            raise ConfigError(f"grid[{i}]", f"p = round(kappa*n) = {p} must be >= 1")
        if cell.tau <= 0:
            raise ConfigError(f"grid[{i}].tau", "tau must be positive")
    if len(set(config.seeds)) != len(config.seeds):
        raise ConfigError("seeds", "seeds must be distinct")
    if not config.seeds:
        raise ConfigError("seeds", "at least one seed is required")
    for check in config.checks:
        if check not in KNOWN_CHECKS:
            raise ConfigError("checks", f"unknown check '{check}'")
    try:
        loss_from_config(config.loss)
    except Exception as exc:
        raise ConfigError("loss", str(exc)) from exc
    try:
        noise_from_config(config.noise)
    except Exception as exc:
        raise ConfigError("noise", str(exc)) from exc
    return config


def config_hash(config):
    payload = json.dumps(asdict(config), sort_keys=True, default=float)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# --- TOML round trip -------------------------------------------------------

def _toml_scalar(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"cannot serialize {value!r}")


def serialize_config(config):
    """Emit the config as TOML text; parse_config inverts it exactly."""
    lines = [f"entry_law = {_toml_scalar(config.entry_law)}"]
    lines.append(f"out_dir = {_toml_scalar(config.out_dir)}")
    lines.append(f"loo_indices = {config.loo_indices}")
    lines.append("seeds = [" + ", ".join(str(int(s)) for s in config.seeds) + "]")
    lines.append("checks = [" + ", ".join(json.dumps(c) for c in config.checks) + "]")
    lines.append(
        "tau_grid = [" + ", ".join(repr(float(t)) for t in config.tau_grid) + "]"
    )
    for section in ("loss", "noise"):
        lines.append(f"\n[{section}]")
        for key, value in getattr(config, section).items():
            lines.append(f"{key} = {_toml_scalar(value)}")
    lines.append("\n[tolerances]")
    for key, value in config.tolerances.items():
        lines.append(f"{key} = {_toml_scalar(float(value))}")
    for cell in config.grid:
        lines.append("\n[[grid]]")
        lines.append(f"n = {cell.n}")
        lines.append(f"kappa = {repr(float(cell.kappa))}")
        lines.append(f"tau = {repr(float(cell.tau))}")
    return "\n".join(lines) + "\n"


def parse_config(text):
    data = tomllib.loads(text)
    try:
        grid = [Cell(n=int(g["n"]), kappa=float(g["kappa"]), tau=float(g["tau"]))
                for g in data["grid"]]
        tolerances = dict(DEFAULT_TOLERANCES)
        tolerances.update({k: float(v) for k, v in data.get("tolerances", {}).items()})
        config = ExperimentConfig(
            loss=dict(data["loss"]),
            noise=dict(data["noise"]),
            entry_law=data["entry_law"],
            grid=grid,
            seeds=[int(s) for s in data["seeds"]],
            checks=list(data["checks"]),
            out_dir=data.get("out_dir", "runs"),
            loo_indices=int(data.get("loo_indices", 25)),
            tau_grid=[float(t) for t in data.get("tau_grid", DEFAULT_TAU_GRID)],
            tolerances=tolerances,
        )
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), "missing required field") from exc
    return validate_config(config)


def load_config(path):
    return parse_config(Path(path).read_text())


def paper_replication_config(out_dir="runs", n=1000, n_seeds=20):
    """The default verification preset: one kappa=0.5, tau=1 cell, 20 seeds.

    n and n_seeds are overridable so tests can run a scaled clone.
    """
    return ExperimentConfig(
        loss={"name": "smoothed_huber", "k": 1.345},
        noise={"name": "gaussian", "sd": 1.0},
        entry_law="gaussian",
        grid=[Cell(n=n, kappa=0.5, tau=1.0)],
        seeds=list(range(1, n_seeds + 1)),
        checks=["system", "fit_bounds", "residual_law", "ctau", "lop"],
        out_dir=out_dir,
    )


# --- check execution -------------------------------------------------------

def _run_cell_seed(config, chash, cell_index, cell, seed, loss, noise, prediction, tau_limit_result):
    start = time.perf_counter()
    p = int(round(cell.kappa * cell.n))
    metrics = {}
    passed = True
    error = None
    tol = config.tolerances
    try:
        design = None
        result = None
        needs_fit = set(config.checks) & {
            "fit_bounds", "loo", "lop", "residual_law", "variance", "ctau"
        }
        if needs_fit:
            design_seed = derive_seed(seed, "cell", cell_index)
            design = gen_design(cell.n, p, config.entry_law, design_seed, noise=noise)
            result = fit(design, loss, cell.tau)
        for check in config.checks:
            if check == "system":
                metrics[check] = {
                    "r": prediction.r,
                    "c": prediction.c,
                    "eq1_residual": prediction.eq1_residual,
                    "eq2_residual": prediction.eq2_residual,
                    "iterations": prediction.iterations,
                }
                ok = max(
                    abs(prediction.eq1_residual), abs(prediction.eq2_residual)
                ) <= tol["system"] * (1.0 + prediction.r**2)
            elif check == "fit_bounds":
                report = fit_bound_report(design, loss, cell.tau, result)
                metrics[check] = {
                    k: report[k]
                    for k in ("beta_norm", "grad_norm", "wn_slack", "rho_slack", "objective_slack")
                }
                ok = (
                    report["wn_slack"] >= -tol["fit_bounds"]
                    and report["rho_slack"] >= -tol["fit_bounds"]
                    and report["objective_slack"] >= -tol["fit_bounds"]
                    and report["grad_norm"] <= 1e-8 * (1.0 + report["beta_norm"])
                )
            elif check == "loo":
                reports = loo_report(
                    design, loss, cell.tau, result, n_indices=config.loo_indices
                )
                err_beta = np.array([r.err_beta for r in reports])
                err_resid = np.array([r.err_resid for r in reports])
                c_bound = p / (cell.n * cell.tau) + np.array(
                    [np.dot(design.X[r.index], design.X[r.index]) for r in reports]
                ) / (cell.n * cell.tau)
                c_values = np.array([r.c_i for r in reports])
                metrics[check] = {
                    "median_err_beta": float(np.median(err_beta)),
                    "max_err_beta": float(err_beta.max()),
                    "median_err_resid": float(np.median(err_resid)),
                    "max_err_resid": float(err_resid.max()),
                }
                ok = bool(np.all(c_values > 0) and np.all(c_values <= c_bound + tol["loo"]))
            elif check == "lop":
                report = lop_report(design, loss, cell.tau, result)
                metrics[check] = {
                    "xi_n": report.xi_n,
                    "b_frak": report.b_frak,
                    "err_last_coord": report.err_last_coord,
                    "err_vector": report.err_vector,
                    "err_resid_sup": report.err_resid_sup,
                    "trace_identity_residual": report.trace_identity_residual,
                    "c_tau_p": report.c_tau_p,
                }
                ok = (
                    report.xi_n >= -tol["lop"]
                    and report.trace_identity_residual <= tol["lop"]
                    and report.cross_curvature_slack >= -tol["lop"]
                )
            elif check == "residual_law":
                law_report = residual_law_check([result], prediction, loss, noise)
                metrics[check] = {"ks": law_report.ks, "n_pooled": law_report.n_pooled}
                ok = law_report.ks <= tol["residual_law"]
            elif check == "variance":
                metrics[check] = {
                    "beta_norm_sq": float(np.linalg.norm(result.beta_hat) ** 2)
                }
                ok = True
            elif check == "ctau":
                rel = abs(result.c_tau - prediction.c) / prediction.c
                metrics[check] = {
                    "c_tau": result.c_tau,
                    "predicted": prediction.c,
                    "rel_error": rel,
                }
                ok = rel <= tol["ctau"]
            elif check == "tau_limit":
                metrics[check] = {
                    "r0": tau_limit_result.r0,
                    "c0": tau_limit_result.c0,
                    "monotone": tau_limit_result.r_monotone_increasing,
                    "taus": [s.tau for s in tau_limit_result.table],
                    "rs": [s.r for s in tau_limit_result.table],
                    "cs": [s.c for s in tau_limit_result.table],
                }
                ok = tau_limit_result.r_monotone_increasing
            else:  # pragma: no cover - guarded by validate_config
                raise ConfigError("checks", f"unknown check '{check}'")
            passed = passed and ok
    except ProxasymError as exc:
        error = f"{type(exc).__name__}: {exc}"
        passed = False
    return RunRecord(
        config_hash=chash,
        cell_index=cell_index,
        n=cell.n,
        kappa=cell.kappa,
        tau=cell.tau,
        seed=seed,
        metrics=metrics,
        passed=passed,
        wall_clock=time.perf_counter() - start,
        library_version=__version__,
        error=error,
    )


def run(config, jobs=1, write=True):
    """Execute every requested check on every (cell, seed); never skips one.

    Writes records.json, records.csv and summary.json under config.out_dir
    when write=True. Returns the list of RunRecords (k cells x s seeds).
    """
    validate_config(config)
    chash = config_hash(config)
    loss = loss_from_config(config.loss)
    noise = noise_from_config(config.noise)

    needs_prediction = set(config.checks) & {"system", "residual_law", "ctau"}
    predictions = {}
    tau_limits = {}
    for ci, cell in enumerate(config.grid):
        if needs_prediction:
            predictions[ci] = solve_system(cell.kappa, cell.tau, loss, noise)
        if "tau_limit" in config.checks:
            tau_limits[ci] = solve_tau_limit(
                cell.kappa, loss, noise, config.tau_grid
            )

    jobs_list = [
        (ci, cell, seed)
        for ci, cell in enumerate(config.grid)
        for seed in config.seeds
    ]

    def _one(args):
        ci, cell, seed = args
        return _run_cell_seed(
            config, chash, ci, cell, seed, loss, noise,
            predictions.get(ci), tau_limits.get(ci),
        )

    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_one, jobs_list))
    else:
        records = [_one(args) for args in jobs_list]
    records.sort(key=lambda r: (r.cell_index, config.seeds.index(r.seed)))
    if write:
        write_outputs(config, records)
    return records


def summarize(config, records):
    """Cross-seed aggregates per cell (the per-record metrics stay per seed)."""
    summary = {"config_hash": records[0].config_hash if records else "", "cells": []}
    for ci, cell in enumerate(config.grid):
        cell_records = [r for r in records if r.cell_index == ci]
        entry = {
            "cell_index": ci,
            "n": cell.n,
            "kappa": cell.kappa,
            "tau": cell.tau,
            "n_records": len(cell_records),
            "all_passed": all(r.passed for r in cell_records),
        }
        ctaus = [r.metrics["ctau"]["c_tau"] for r in cell_records if "ctau" in r.metrics]
        if ctaus:
            entry["ctau_mean"] = float(np.mean(ctaus))
            entry["ctau_std"] = float(np.std(ctaus, ddof=1)) if len(ctaus) > 1 else 0.0
        norms = [
            r.metrics["variance"]["beta_norm_sq"]
            for r in cell_records
            if "variance" in r.metrics
        ]
        if norms:
            entry["beta_norm_sq_mean"] = float(np.mean(norms))
            entry["beta_norm_sq_var"] = (
                float(np.var(norms, ddof=1)) if len(norms) > 1 else 0.0
            )
        ks = [
            r.metrics["residual_law"]["ks"]
            for r in cell_records
            if "residual_law" in r.metrics
        ]
        if ks:
            entry["ks_median"] = float(np.median(ks))
        summary["cells"].append(entry)
    return summary


def _flatten(metrics):
    flat = {}
    for check, values in metrics.items():
        for key, value in values.items():
            if isinstance(value, (list, tuple)):
                continue
            flat[f"{check}.{key}"] = value
    return flat


def write_outputs(config, records):
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "records.json").write_text(
        json.dumps([asdict(r) for r in records], indent=1, default=float)
    )
    (out / "summary.json").write_text(
        json.dumps(summarize(config, records), indent=1, default=float)
    )
    columns = ["config_hash", "cell_index", "n", "kappa", "tau", "seed", "passed"]
    metric_keys = sorted({k for r in records for k in _flatten(r.metrics)})
    with open(out / "records.csv", "w") as handle:
        handle.write(",".join(columns + metric_keys) + "\n")
        for r in records:
            flat = _flatten(r.metrics)
            row = [str(getattr(r, c)) for c in columns]
            row += [repr(flat[k]) if k in flat else "" for k in metric_keys]
            handle.write(",".join(row) + "\n")
    return out


def emit_plots(records, path):
    """Write plot-ready CSVs (x, y, error bars); no rendering happens here."""
    if not records:
        raise EmptySelection("no records to emit")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    by_cell = {}
    for r in records:
        by_cell.setdefault((r.cell_index, r.n, r.kappa, r.tau), []).append(r)

    variance_rows = []
    for (ci, n, kappa, tau), cell_records in sorted(by_cell.items()):
        norms = [
            r.metrics["variance"]["beta_norm_sq"]
            for r in cell_records
            if "variance" in r.metrics
        ]
        if len(norms) > 1:
            var = float(np.var(norms, ddof=1))
            variance_rows.append(
                (n, var, var * np.sqrt(2.0 / (len(norms) - 1)))
            )
    if variance_rows:
        target = out / "variance.csv"
        with open(target, "w") as handle:
            handle.write("n,var_mean,var_se\n")
            for n, v, se in variance_rows:
                handle.write(f"{n},{v!r},{se!r}\n")
        written.append(target)

    tau_rows = []
    seen_cells = set()
    for r in records:
        if "tau_limit" in r.metrics and r.cell_index not in seen_cells:
            seen_cells.add(r.cell_index)
            m = r.metrics["tau_limit"]
            tau_rows += list(zip(m["taus"], m["rs"], m["cs"]))
    if tau_rows:
        target = out / "tau_limit.csv"
        with open(target, "w") as handle:
            handle.write("tau,r,c\n")
            for t, rr, cc in tau_rows:
                handle.write(f"{t!r},{rr!r},{cc!r}\n")
        written.append(target)

    target = out / "metrics.csv"
    metric_keys = sorted({k for r in records for k in _flatten(r.metrics)})
    with open(target, "w") as handle:
        handle.write("cell_index,n,kappa,tau,seed," + ",".join(metric_keys) + "\n")
        for r in records:
            flat = _flatten(r.metrics)
            row = [str(r.cell_index), str(r.n), repr(r.kappa), repr(r.tau), str(r.seed)]
            row += [repr(flat[k]) if k in flat else "" for k in metric_keys]
            handle.write(",".join(row) + "\n")
    written.append(target)
    return written
