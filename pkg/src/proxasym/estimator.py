"""Exact finite-sample solve of the ridge-regularized M-estimation problem.

For a design X (n x p, i.i.d. standardized entries) and errors eps, the fit
minimizes

    F(beta) = (1/n) sum_i rho(eps_i - X_i' beta) + (tau/2) ||beta||^2

by damped Newton with the exact Hessian (1/n) sum_i psi'(r_i) X_i X_i' + tau*I
and Armijo backtracking. Convergence is declared on the gradient norm because
all downstream approximation bounds are phrased through ||f(beta)||.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import LineSearchFailure, SingularHessian, UnknownEntryLaw
from .streams import stream_rng

ENTRY_LAWS = ("gaussian", "rademacher", "uniform_scaled")
GRAD_RTOL = 1e-11
MAX_NEWTON = 100
MAX_BACKTRACK = 60


@dataclass
class Design:
    """Design matrix with its error vector and generation metadata."""

    X: np.ndarray
    eps: np.ndarray
    seed: int
    entry_law: str

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


@dataclass
class FitResult:
    """Converged fit: estimate, residuals, curvature summary, exit diagnostics."""

    beta_hat: np.ndarray
    residuals: np.ndarray
    c_tau: float
    grad_norm: float
    objective: float
    tau: float
    iterations: int


def gen_design(n, p, entry_law, seed, noise=None):
    """i.i.d. standardized design, deterministic per seed.

    The X entries and the errors come from separate named streams of the same
    seed, so they are independent. With noise=None the errors are zero.
    """
    if n < 1 or p < 1:
        raise ValueError("n and p must be >= 1")
    rng = stream_rng(seed, "design", entry_law, n, p)
    if entry_law == "gaussian":
        X = rng.standard_normal((n, p))
    elif entry_law == "rademacher":
        X = rng.integers(0, 2, size=(n, p)).astype(float) * 2.0 - 1.0
    elif entry_law == "uniform_scaled":
        X = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(n, p))
    else:
        raise UnknownEntryLaw(f"'{entry_law}' not in {ENTRY_LAWS}")
    rng_eps = stream_rng(seed, "errors", n)
    eps = noise.sample(rng_eps, n) if noise is not None else np.zeros(n)
    return Design(X=X, eps=np.asarray(eps, dtype=float), seed=seed, entry_law=entry_law)


def objective(X, eps, loss, tau, beta, n_norm=None):
    n_norm = n_norm or X.shape[0]
    r = eps - X @ beta
    return float(np.sum(loss.rho(r)) / n_norm + 0.5 * tau * np.dot(beta, beta))


def gradient(X, eps, loss, tau, beta, n_norm=None):
    """f(beta) = -(1/n) sum_i X_i psi(eps_i - X_i' beta) + tau*beta."""
    n_norm = n_norm or X.shape[0]
    r = eps - X @ beta
    return -(X.T @ loss.psi(r)) / n_norm + tau * beta


def newton_solve(X, eps, loss, tau, n_norm=None, beta0=None,
                 grad_rtol=GRAD_RTOL, max_iter=MAX_NEWTON):
    """Damped Newton on F; returns (beta, grad_norm, objective, iterations).

    n_norm overrides the 1/n normalization (used by leave-one-out refits,
    which keep the full-sample n in the objective while dropping rows).
    """
    n, p = X.shape
    n_norm = n_norm or n
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    obj = objective(X, eps, loss, tau, beta, n_norm)
    it = 0
    for it in range(1, max_iter + 1):
        r = eps - X @ beta
        grad = -(X.T @ loss.psi(r)) / n_norm + tau * beta
        gn = float(np.linalg.norm(grad))
        if gn <= grad_rtol * (1.0 + np.linalg.norm(beta)):
            return beta, gn, obj, it - 1
        w = loss.psi_prime(r)
        H = (X.T * w) @ X / n_norm
        H[np.diag_indices_from(H)] += tau
        try:
            factor = linalg.cho_factor(H, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise SingularHessian(str(exc)) from exc
        step = -linalg.cho_solve(factor, grad, check_finite=False)
        slope = float(np.dot(grad, step))
        # allowance for objective rounding noise once decreases reach eps-level
        noise_floor = 1e-14 * (1.0 + abs(obj))
        t = 1.0
        for _ in range(MAX_BACKTRACK):
            cand = beta + t * step
            cand_obj = objective(X, eps, loss, tau, cand, n_norm)
            if cand_obj <= obj + 1e-4 * t * slope + noise_floor:
                break
            t *= 0.5
        else:
            raise LineSearchFailure(f"no decrease along Newton direction at sweep {it}")
        beta, obj = cand, cand_obj
    r = eps - X @ beta
    grad = -(X.T @ loss.psi(r)) / n_norm + tau * beta
    gn = float(np.linalg.norm(grad))
    if gn <= grad_rtol * (1.0 + np.linalg.norm(beta)):
        return beta, gn, obj, it
    raise LineSearchFailure(
        f"Newton did not reach gradient tolerance in {max_iter} sweeps (|f| = {gn:.3e})"
    )


def curvature_matrix(X, residuals, loss, n_norm=None):
    """S = (1/n) sum_i psi'(R_i) X_i X_i'."""
    n_norm = n_norm or X.shape[0]
    w = loss.psi_prime(residuals)
    return (X.T * w) @ X / n_norm


def trace_inverse_regularized(S, tau, n):
    """(1/n) trace (S + tau*I)^{-1} via symmetric eigendecomposition."""
    evals = np.linalg.eigvalsh(S)
    return float(np.sum(1.0 / (evals + tau)) / n)


def curvature_trace(design, loss, fit):
    """c_tau of a converged fit; value lies in (0, p/(n*tau)]."""
    S = curvature_matrix(design.X, fit.residuals, loss)
    return trace_inverse_regularized(S, fit.tau, design.n)


def fit(design, loss, tau, beta0=None, grad_rtol=GRAD_RTOL, compute_curvature=True):
    """Solve the penalized problem on a design; tau = 0 needs strong convexity and p < n."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0.0 and (loss.strong_convexity <= 0.0 or design.p >= design.n):
        raise ValueError(
            "tau = 0 requires a strongly convex loss and p < n"
        )
    beta, gn, obj, iters = newton_solve(
        design.X, design.eps, loss, tau, beta0=beta0, grad_rtol=grad_rtol
    )
    residuals = design.eps - design.X @ beta
    if compute_curvature:
        S = curvature_matrix(design.X, residuals, loss)
        c_tau = trace_inverse_regularized(S, tau, design.n)
    else:
        c_tau = float("nan")
    return FitResult(
        beta_hat=beta, residuals=residuals, c_tau=c_tau, grad_norm=gn,
        objective=obj, tau=tau, iterations=iters,
    )


def fit_bound_report(design, loss, tau, result):
    """Deterministic optimality bounds evaluated on one draw.

    Returns the slack of each bound (nonnegative slack = bound holds):
      * ||beta|| <= ||W_n|| / tau with W_n = (1/n) sum_i X_i psi(eps_i)
      * ||beta|| <= sqrt(2/tau) * sqrt(mean rho(eps))
      * F(beta)  <= F(0) = mean rho(eps)
    """
    n = design.n
    beta_norm = float(np.linalg.norm(result.beta_hat))
    w_n = (design.X.T @ loss.psi(design.eps)) / n
    mean_rho = float(np.mean(loss.rho(design.eps)))
    report = {
        "beta_norm": beta_norm,
        "grad_norm": result.grad_norm,
        "objective": result.objective,
        "objective_at_zero": mean_rho,
    }
    if tau > 0:
        report["wn_bound"] = float(np.linalg.norm(w_n)) / tau
        report["rho_bound"] = float(np.sqrt(2.0 / tau) * np.sqrt(mean_rho))
        report["wn_slack"] = report["wn_bound"] - beta_norm
        report["rho_slack"] = report["rho_bound"] - beta_norm
    report["objective_slack"] = mean_rho - result.objective
    report["all_hold"] = (
        report.get("wn_slack", 0.0) >= -1e-10
        and report.get("rho_slack", 0.0) >= -1e-10
        and report["objective_slack"] >= -1e-12 * (1.0 + abs(mean_rho))
    )
    return report
