"""Command-line front end: solve | fit | loo | lop | verify | sweep | run."""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .diagnostics import (
    c_tau_concentration,
    loo_report,
    lop_report,
    residual_law_check,
    variance_sweep,
)
from .errors import ProxasymError
from .estimator import fit, fit_bound_report, gen_design
from .fixed_point import solve_system
from .harness import emit_plots, load_config, run as run_batch
from .losses import loss_from_config
from .noise import noise_from_config


def _parse_spec(text):
    """'name' or 'name,k=1.345,omega=0.05' -> config mapping."""
    parts = text.split(",")
    spec = {"name": parts[0]}
    for item in parts[1:]:
        key, _, value = item.partition("=")
        spec[key.strip()] = float(value)
    return spec


def _write_json(payload, path):
    text = json.dumps(payload, indent=1, default=float)
    if path:
        Path(path).write_text(text)
    else:
        print(text)


def _add_model_args(parser):
    parser.add_argument("--loss", default="smoothed_huber")
    parser.add_argument("--noise", default="gaussian")


def cmd_solve(args):
    loss = loss_from_config(_parse_spec(args.loss))
    noise = noise_from_config(_parse_spec(args.noise))
    sol = solve_system(args.kappa, args.tau, loss, noise)
    _write_json(
        {
            "kappa": sol.kappa,
            "tau": sol.tau,
            "r": sol.r,
            "c": sol.c,
            "eq1_residual": sol.eq1_residual,
            "eq2_residual": sol.eq2_residual,
            "iterations": sol.iterations,
        },
        args.out,
    )
    return 0


def _make_fit(args):
    loss = loss_from_config(_parse_spec(args.loss))
    noise = noise_from_config(_parse_spec(args.noise))
    design = gen_design(args.n, args.p, args.entry_law, args.seed, noise=noise)
    return loss, noise, design, fit(design, loss, args.tau)


def cmd_fit(args):
    loss, _, design, result = _make_fit(args)
    payload = {
        "beta_norm": float(np.linalg.norm(result.beta_hat)),
        "c_tau": result.c_tau,
        "grad_norm": result.grad_norm,
        "objective": result.objective,
        "residual_mean": float(result.residuals.mean()),
        "residual_sd": float(result.residuals.std()),
        "bounds": fit_bound_report(design, loss, args.tau, result),
    }
    if args.dump:
        payload["beta_hat"] = result.beta_hat.tolist()
        payload["residuals"] = result.residuals.tolist()
    _write_json(payload, args.out)
    return 0


def cmd_loo(args):
    loss, _, design, result = _make_fit(args)
    indices = range(args.n) if args.all else None
    reports = loo_report(
        design, loss, args.tau, result, indices=indices, n_indices=args.indices
    )
    if args.csv:
        with open(args.csv, "w") as handle:
            handle.write("seed,index,c_i,r_tilde,err_beta,err_resid\n")
            for r in reports:
                handle.write(
                    f"{args.seed},{r.index},{r.c_i!r},{r.r_tilde!r},"
                    f"{r.err_beta!r},{r.err_resid!r}\n"
                )
    err_beta = np.array([r.err_beta for r in reports])
    err_resid = np.array([r.err_resid for r in reports])
    _write_json(
        {
            "n_indices": len(reports),
            "median_err_beta": float(np.median(err_beta)),
            "max_err_beta": float(err_beta.max()),
            "median_err_resid": float(np.median(err_resid)),
            "max_err_resid": float(err_resid.max()),
        },
        args.out,
    )
    return 0


def cmd_lop(args):
    loss, _, design, result = _make_fit(args)
    report = lop_report(design, loss, args.tau, result)
    _write_json(
        {
            "xi_n": report.xi_n,
            "N_p": report.N_p,
            "b_frak": report.b_frak,
            "c_tau_p": report.c_tau_p,
            "err_last_coord": report.err_last_coord,
            "err_vector": report.err_vector,
            "err_resid_sup": report.err_resid_sup,
            "trace_identity_residual": report.trace_identity_residual,
        },
        args.out,
    )
    return 0


def cmd_verify(args):
    """Theory vs simulation for one cell: norm, curvature trace, residual law."""
    loss = loss_from_config(_parse_spec(args.loss))
    noise = noise_from_config(_parse_spec(args.noise))
    p = int(round(args.kappa * args.n))
    prediction = solve_system(args.kappa, args.tau, loss, noise)
    fits = []
    for seed in range(args.seed, args.seed + args.seeds):
        design = gen_design(args.n, p, args.entry_law, seed, noise=noise)
        fits.append(fit(design, loss, args.tau))
    norms = np.array([np.linalg.norm(f.beta_hat) for f in fits])
    law = residual_law_check(fits, prediction, loss, noise)
    conc = c_tau_concentration(fits, prediction)
    payload = {
        "predicted_r": prediction.r,
        "mean_beta_norm": float(norms.mean()),
        "rel_error_r": float(abs(norms.mean() - prediction.r) / prediction.r),
        "predicted_c": prediction.c,
        "mean_c_tau": conc["mean"],
        "rel_error_c": conc["rel_error"],
        "ks": law.ks,
        "seeds": args.seeds,
    }
    _write_json(payload, args.out)
    ok = (
        payload["rel_error_r"] <= args.tol
        and payload["rel_error_c"] <= args.tol
        and law.ks <= args.ks_tol
    )
    return 0 if ok else 1


def cmd_sweep(args):
    loss = loss_from_config(_parse_spec(args.loss))
    noise = noise_from_config(_parse_spec(args.noise))
    cells = [(n, args.kappa) for n in args.ns]
    table = variance_sweep(
        loss, noise, cells, args.tau, list(range(args.seed, args.seed + args.seeds)),
        entry_law=args.entry_law,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "variance_sweep.csv", "w") as handle:
        handle.write("n,kappa,mean,var,n_seeds\n")
        for row in table.rows:
            handle.write(
                f"{row['n']},{row['kappa']!r},{row['mean']!r},{row['var']!r},{row['n_seeds']}\n"
            )
    _write_json({"rows": table.rows, "ratios": table.ratios}, args.out)
    return 0


def cmd_run(args):
    config = load_config(args.config)
    if args.out_dir:
        config.out_dir = args.out_dir
    records = run_batch(config, jobs=args.jobs)
    emit_plots(records, Path(config.out_dir) / "plots")
    failed = [r for r in records if not r.passed]
    print(f"{len(records)} records, {len(failed)} failed")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="proxasym")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve the asymptotic (r, c) system")
    s.add_argument("--kappa", type=float, required=True)
    s.add_argument("--tau", type=float, required=True)
    _add_model_args(s)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_solve)

    for name, func in (("fit", cmd_fit), ("loo", cmd_loo), ("lop", cmd_lop)):
        f = sub.add_parser(name)
        f.add_argument("--n", type=int, required=True)
        f.add_argument("--p", type=int, required=True)
        f.add_argument("--tau", type=float, required=True)
        _add_model_args(f)
        f.add_argument("--entry-law", dest="entry_law", default="gaussian")
        f.add_argument("--seed", type=int, default=0)
        f.add_argument("--out", default=None)
        if name == "fit":
            f.add_argument("--dump", action="store_true")
        if name == "loo":
            f.add_argument("--indices", type=int, default=25)
            f.add_argument("--all", action="store_true", help="sweep every row")
            f.add_argument("--csv", default=None)
        f.set_defaults(func=func)

    v = sub.add_parser("verify", help="theory vs simulation for one cell")
    v.add_argument("--n", type=int, required=True)
    v.add_argument("--kappa", type=float, required=True)
    v.add_argument("--tau", type=float, required=True)
    _add_model_args(v)
    v.add_argument("--entry-law", dest="entry_law", default="gaussian")
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--seeds", type=int, default=5)
    v.add_argument("--tol", type=float, default=0.05)
    v.add_argument("--ks-tol", dest="ks_tol", type=float, default=0.08)
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="variance decay sweep over n")
    w.add_argument("--ns", type=int, nargs="+", required=True)
    w.add_argument("--kappa", type=float, required=True)
    w.add_argument("--tau", type=float, required=True)
    _add_model_args(w)
    w.add_argument("--entry-law", dest="entry_law", default="gaussian")
    w.add_argument("--seed", type=int, default=1)
    w.add_argument("--seeds", type=int, default=10)
    w.add_argument("--out", default=None)
    w.add_argument("--out-dir", dest="out_dir", default="runs")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("run", help="execute a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out-dir", dest="out_dir", default=None)
    r.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ProxasymError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
