"""Leave-one-out / leave-one-predictor-out objects and distributional checks.

Everything here measures how well low-rank surrogates reproduce the full fit:

  * leave one observation out: refit without row i, then correct the reduced
    estimate along (S_i + tau*I)^{-1} X_i using the prox of the out-of-sample
    residual. For the quadratic loss this correction is the exact rank-one
    update, so the reported errors collapse to numerical noise.
  * leave one predictor out: refit without the last column, then reconstruct
    the last coordinate from the normalized score sum N_p and the regularized
    Schur complement xi_n.
  * residual law / variance decay / curvature-trace concentration: empirical
    convergence checks against the solved asymptotic system.

Refits are exact Newton solves to the same gradient tolerance as the full
fit; warm starts only change iteration counts, never the reported errors.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy import linalg

from .estimator import curvature_matrix, newton_solve, trace_inverse_regularized, fit as fit_op, gen_design
from .losses import prox_point
from .noise import ConvolvedLaw, cdf as law_cdf
from .streams import stream_rng


@dataclass
class LooReport:
    """Per-index leave-one-observation-out quantities and discrepancies."""

    index: int
    beta_loo: np.ndarray
    r_tilde: float
    c_i: float
    beta_tilde: np.ndarray
    err_beta: float
    err_resid: float


@dataclass
class LopReport:
    """Leave-one-predictor-out quantities for the last column."""

    gamma_hat: np.ndarray
    u_p: np.ndarray
    xi_n: float
    N_p: float
    b_frak: float
    b_tilde: np.ndarray
    c_tau_p: float
    err_last_coord: float
    err_vector: float
    err_resid_sup: float
    trace_identity_residual: float
    cross_curvature_slack: float
    eta_trace_sup: float


@dataclass
class ResidualLawReport:
    ks: float
    per_fit_ks: List[float]
    n_pooled: int


@dataclass
class VarianceTable:
    rows: List[dict]
    ratios: List[dict] = field(default_factory=list)


@dataclass
class TracePerturbationReport:
    max_violation: float
    max_identity_residual: float
    draws: int


def loo_report(design, loss, tau, full_fit, indices=None, n_indices=25):
    """Leave-one-observation-out analysis on a subset of rows.

    The refit keeps the full-sample 1/n normalization while dropping row i.
    indices=None selects a seed-determined random subset (all rows if
    n <= n_indices).
    """
    X, eps, n = design.X, design.eps, design.n
    if indices is None:
        if n <= n_indices:
            indices = np.arange(n)
        else:
            rng = stream_rng(design.seed, "loo-subset", n)
            indices = np.sort(rng.choice(n, size=n_indices, replace=False))
    reports = []
    for i in indices:
        i = int(i)
        X_wo = np.delete(X, i, axis=0)
        eps_wo = np.delete(eps, i)
        beta_loo, _, _, _ = newton_solve(
            X_wo, eps_wo, loss, tau, n_norm=n, beta0=full_fit.beta_hat
        )
        x_i = X[i]
        r_tilde = float(eps[i] - x_i @ beta_loo)
        resid_wo = eps_wo - X_wo @ beta_loo
        S_i = curvature_matrix(X_wo, resid_wo, loss, n_norm=n)
        S_i[np.diag_indices_from(S_i)] += tau
        v = linalg.cho_solve(linalg.cho_factor(S_i, lower=True), x_i)
        c_i = float(x_i @ v) / n
        y = float(prox_point(loss, c_i, r_tilde))
        beta_tilde = beta_loo + v * float(loss.psi(y)) / n
        reports.append(
            LooReport(
                index=i,
                beta_loo=beta_loo,
                r_tilde=r_tilde,
                c_i=c_i,
                beta_tilde=beta_tilde,
                err_beta=float(np.linalg.norm(full_fit.beta_hat - beta_tilde)),
                err_resid=float(abs(full_fit.residuals[i] - y)),
            )
        )
    return reports


def lop_report(design, loss, tau, full_fit):
    """Leave the last predictor out and reconstruct its coordinate."""
    if design.p < 2:
        raise ValueError("leave-one-predictor-out needs p >= 2")
    X, eps, n = design.X, design.eps, design.n
    V, xp = X[:, :-1], X[:, -1]
    gamma_hat, _, _, _ = newton_solve(
        V, eps, loss, tau, beta0=full_fit.beta_hat[:-1]
    )
    r_p = eps - V @ gamma_hat
    w = loss.psi_prime(r_p)
    u_p = V.T @ (w * xp) / n
    S_p = curvature_matrix(V, r_p, loss)
    A = S_p + tau * np.eye(design.p - 1)
    factor = linalg.cho_factor(A, lower=True)
    sol_u = linalg.cho_solve(factor, u_p)
    quad_w = float(np.mean(xp * xp * w))
    xi_n = quad_w - float(u_p @ sol_u)
    N_p = float(np.sum(xp * loss.psi(r_p)) / np.sqrt(n))
    b_frak = N_p / (np.sqrt(n) * (tau + xi_n))
    b_tilde = np.concatenate([gamma_hat - b_frak * sol_u, [b_frak]])

    c_tau_p = trace_inverse_regularized(S_p, tau, n)
    # two independent numerical routes for (1/n) trace(I - M):
    # Cholesky-solve trace of A^{-1} S_p vs the eigenvalue identity
    # (q/n - tau*c_tau_p) with q the retained predictor count.
    lhs = float(np.trace(linalg.cho_solve(factor, S_p))) / n
    rhs = (design.p - 1) / n - tau * c_tau_p
    trace_identity_residual = abs(lhs - rhs)
    cross_curvature_slack = quad_w - float(sol_u @ sol_u)

    # deviation of the per-row reduced quadratic forms from c_tau_p,
    # via rank-one downdates of A
    t_i = np.einsum("ij,ij->i", V, linalg.cho_solve(factor, V.T).T)
    d_i = w / n
    q_i = t_i / (1.0 - d_i * t_i) / n
    eta_trace_sup = float(np.max(np.abs(q_i - c_tau_p)))

    return LopReport(
        gamma_hat=gamma_hat,
        u_p=u_p,
        xi_n=float(xi_n),
        N_p=N_p,
        b_frak=float(b_frak),
        b_tilde=b_tilde,
        c_tau_p=c_tau_p,
        err_last_coord=float(np.sqrt(n) * abs(full_fit.beta_hat[-1] - b_frak)),
        err_vector=float(np.linalg.norm(full_fit.beta_hat - b_tilde)),
        err_resid_sup=float(np.max(np.abs(full_fit.residuals - r_p))),
        trace_identity_residual=trace_identity_residual,
        cross_curvature_slack=float(cross_curvature_slack),
        eta_trace_sup=eta_trace_sup,
    )


def predicted_residual_cdf(prediction, loss, noise, grid):
    """CDF of prox_c(rho)(eps + r*Z) on a grid of residual values.

    Uses the monotone change of variables P(prox(zhat) <= w)
    = P(zhat <= w + c*psi(w)).
    """
    law = ConvolvedLaw(noise, prediction.r)
    transformed = grid + prediction.c * loss.psi(grid)
    return law_cdf(law, transformed)


def _ks_statistic(samples, cdf_grid, cdf_values):
    s = np.sort(np.asarray(samples, dtype=float))
    F = np.interp(s, cdf_grid, cdf_values)
    n = len(s)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def residual_law_check(fits, prediction, loss, noise, grid_points=4001):
    """KS distance between pooled fit residuals and the predicted prox law.

    Uses the analytic CDF on a dense grid; when the noise law has no density
    (no quadrature route), falls back to a seeded two-sample KS against draws
    of prox_c(eps + r*Z).
    """
    from scipy import stats

    from .errors import QuadratureUnavailable
    from .streams import stream_rng

    pooled = np.concatenate([f.residuals for f in fits])
    lo, hi = pooled.min(), pooled.max()
    span = hi - lo
    grid = np.linspace(lo - 0.1 * span - 1e-9, hi + 0.1 * span + 1e-9, grid_points)
    try:
        values = predicted_residual_cdf(prediction, loss, noise, grid)
        return ResidualLawReport(
            ks=_ks_statistic(pooled, grid, values),
            per_fit_ks=[_ks_statistic(f.residuals, grid, values) for f in fits],
            n_pooled=len(pooled),
        )
    except QuadratureUnavailable:
        rng = stream_rng(0, "residual-law-fallback", noise.name)
        z = noise.sample(rng, 200_000) + prediction.r * rng.standard_normal(200_000)
        draws = prox_point(loss, prediction.c, z)
        return ResidualLawReport(
            ks=float(stats.ks_2samp(pooled, draws).statistic),
            per_fit_ks=[
                float(stats.ks_2samp(f.residuals, draws).statistic) for f in fits
            ],
            n_pooled=len(pooled),
        )


def variance_sweep(loss, noise, cells, tau, seeds, entry_law="gaussian"):
    """Empirical variance of ||beta||^2 across seeds for each (n, kappa) cell.

    Emits var(n)/var(2n) ratios for same-kappa cells whose sizes double.
    """
    if len(seeds) < 10:
        raise ValueError("need at least 10 seeds per configuration")
    rows = []
    for n, kappa in cells:
        p = int(round(kappa * n))
        norms_sq = []
        for seed in seeds:
            design = gen_design(n, p, entry_law, seed, noise=noise)
            result = fit_op(design, loss, tau, compute_curvature=False)
            norms_sq.append(float(np.linalg.norm(result.beta_hat) ** 2))
        norms_sq = np.array(norms_sq)
        rows.append(
            {
                "n": n,
                "kappa": kappa,
                "mean": float(norms_sq.mean()),
                "var": float(norms_sq.var(ddof=1)),
                "n_seeds": len(seeds),
            }
        )
    ratios = []
    for row in rows:
        for other in rows:
            if other["kappa"] == row["kappa"] and other["n"] == 2 * row["n"]:
                ratios.append(
                    {
                        "kappa": row["kappa"],
                        "n_small": row["n"],
                        "n_large": other["n"],
                        "ratio": row["var"] / other["var"] if other["var"] > 0 else np.inf,
                    }
                )
    return VarianceTable(rows=rows, ratios=ratios)


def c_tau_concentration(fits, prediction):
    """Mean/spread of the empirical curvature trace against the solved c."""
    values = np.array([f.c_tau for f in fits])
    mean = float(values.mean())
    return {
        "mean": mean,
        "std": float(values.std(ddof=1)) if len(values) > 1 else 0.0,
        "predicted": prediction.c,
        "abs_error": abs(mean - prediction.c),
        "rel_error": abs(mean - prediction.c) / prediction.c,
    }


def trace_perturbation_check(dim, seeds, tau=0.1):
    """Trace stability under adding one row/column to a PSD matrix.

    For each random Wishart draw A with leading block Gamma and corner a,
    checks |tr((A+tau I)^{-1}) - tr((Gamma+tau I)^{-1})| <= (1 + a/tau)/tau
    and the exact block-inverse identity behind it. Returns the maximum
    bound violation (<= 0 means the bound held on every draw).
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    max_violation = -np.inf
    max_identity = 0.0
    count = 0
    for seed in seeds:
        rng = stream_rng(seed, "trace-perturbation", dim)
        G = rng.standard_normal((dim + 2, dim))
        A = G.T @ G / dim
        gamma_tau = A[:-1, :-1] + tau * np.eye(dim - 1)
        v = A[:-1, -1]
        a = float(A[-1, -1])
        inv_full = np.linalg.inv(A + tau * np.eye(dim))
        inv_gamma = np.linalg.inv(gamma_tau)
        lhs = abs(np.trace(inv_full) - np.trace(inv_gamma))
        bound = (1.0 + a / tau) / tau
        max_violation = max(max_violation, lhs - bound)
        gv = inv_gamma @ v
        identity = np.trace(inv_gamma) + (1.0 + gv @ gv) / (a + tau - v @ gv)
        max_identity = max(max_identity, abs(np.trace(inv_full) - identity))
        count += 1
    return TracePerturbationReport(
        max_violation=float(max_violation),
        max_identity_residual=float(max_identity),
        draws=count,
    )
