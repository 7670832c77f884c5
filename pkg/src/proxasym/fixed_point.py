"""Asymptotic two-equation system for the ridge-regularized M-estimator.

In the proportional regime p/n -> kappa, the estimator norm converges to r
and the normalized inverse-curvature trace converges to c, where (r, c)
solve, with zhat = eps + r*Z:

    E[ prox_c(rho)'(zhat) ]            = 1 - kappa + tau*c
    kappa * r^2                        = E[ (zhat - prox_c(rho)(zhat))^2 ]

The first equation is the root of the scalar map

    delta(x) = kappa - tau*x - 1 + E[ prox_x(rho)'(zhat) ],

which is strictly decreasing for unimodal zhat densities, so c is found by
bracketed bisection+secant. The outer loop is a damped iteration on r^2.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import BracketFailure, NoConvergence, NonFiniteIterate
from .losses import prox_point
from .noise import ConvolvedLaw, GH_NODES, SIMPSON_POINTS, expect

EQ_TOL = 1e-11  # stricter than the 1e-9 contract, so downstream oracles see 1e-8 accuracy
DELTA_TOL = 1e-12
MAX_OUTER = 500
DAMPING = 0.5


@dataclass
class SystemSolution:
    """Solved (r, c) pair with the residuals of both equations."""

    kappa: float
    tau: float
    r: float
    c: float
    eq1_residual: float
    eq2_residual: float
    iterations: int


@dataclass
class TauLimitResult:
    """Per-tau solutions plus the polynomial extrapolation to tau = 0."""

    r0: float
    c0: float
    table: List[SystemSolution]
    r_monotone_increasing: bool = field(default=True)


def delta(kappa, tau, loss, law, x, n_hermite=GH_NODES, n_grid=SIMPSON_POINTS):
    """kappa - tau*x - 1 + E[prox_x(rho)'(zhat)]; decreasing in x, delta(0) = kappa."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return float(kappa)

    def integrand(z):
        y = prox_point(loss, x, z)
        return 1.0 / (1.0 + x * loss.psi_prime(y))

    g = expect(law, integrand, n_hermite=n_hermite, n_grid=n_grid)
    return float(kappa - tau * x - 1.0 + g)


def _refine_root(f, lo, flo, hi, fhi, ftol, max_iter=200):
    """Root of a decreasing f on [lo, hi] with flo > 0 > fhi, to |f| <= ftol.

    Secant proposals accelerate convergence; midpoint fallbacks keep the
    bracket shrinking.
    """
    for _ in range(max_iter):
        mid = lo + (hi - lo) * flo / (flo - fhi)  # secant through the endpoints
        if not (lo < mid < hi):
            mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if abs(fmid) <= ftol:
            return mid
        if fmid > 0:
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
        # force an occasional bisection step when the secant stalls
        if (hi - lo) > 0 and min(flo, -fhi) > 10 * ftol and abs(fmid) > 0.4 * min(flo, -fhi):
            mid = 0.5 * (lo + hi)
            fmid = f(mid)
            if abs(fmid) <= ftol:
                return mid
            if fmid > 0:
                lo, flo = mid, fmid
            else:
                hi, fhi = mid, fmid
    raise NoConvergence(f"root refinement stalled on [{lo}, {hi}]")


def solve_c_given_r(
    kappa, tau, loss, law, hint=None, ftol=DELTA_TOL,
    n_hermite=GH_NODES, n_grid=SIMPSON_POINTS,
):
    """Unique root of delta on [0, kappa/tau + 1].

    A hint from a previous solve shrinks the initial bracket. Raises
    BracketFailure when delta does not change sign on the full interval,
    which signals a loss/law pair without the monotone structure.
    """
    if tau <= 0 or kappa <= 0:
        raise ValueError("tau and kappa must be positive")

    def f(x):
        return delta(kappa, tau, loss, law, x, n_hermite=n_hermite, n_grid=n_grid)

    hi_max = kappa / tau + 1.0
    lo, flo = 0.0, float(kappa)
    hi = hi_max
    fhi = f(hi)
    if fhi > 0:
        raise BracketFailure(
            f"delta({hi}) = {fhi} > 0: no sign change on [0, {hi_max}]"
        )
    if hint is not None and 0.0 < hint < hi_max:
        w = max(0.05 * hint, 1e-4)
        a, b = max(hint - w, 0.0), min(hint + w, hi_max)
        fa, fb = f(a), f(b)
        while fa < 0 and a > 0.0:  # root is left of the window
            b, fb = a, fa
            w *= 2.0
            a = max(a - w, 0.0)
            fa = f(a) if a > 0.0 else float(kappa)
        while fb > 0 and b < hi_max:  # root is right of the window
            a, fa = b, fb
            w *= 2.0
            b = min(b + w, hi_max)
            fb = f(b)
        if fa >= 0 >= fb:
            if abs(fa) <= ftol:
                return a
            if abs(fb) <= ftol:
                return b
            lo, flo, hi, fhi = a, fa, b, fb
    if abs(fhi) <= ftol:
        return hi
    return _refine_root(f, lo, flo, hi, fhi, ftol)


def _second_moment(loss, law, c, n_hermite, n_grid):
    def integrand(z):
        return np.square(z - prox_point(loss, c, z))

    return expect(law, integrand, n_hermite=n_hermite, n_grid=n_grid)


def _initial_r(kappa, noise):
    r2 = kappa * noise.variance / (1.0 - kappa) if kappa < 1.0 else np.inf
    return float(np.clip(np.sqrt(max(r2, 0.0)), 1e-3, 10.0))


def solve_system(
    kappa, tau, loss, noise, max_outer=MAX_OUTER, damping=DAMPING,
    n_hermite=GH_NODES, n_grid=SIMPSON_POINTS, r_init=None, eq_tol=EQ_TOL,
):
    """Solve the coupled (r, c) system by damped alternation.

    Given r, c is the exact delta-root under the law eps + r*Z; given c, the
    norm equation proposes r^2 = E[(zhat - prox_c(zhat))^2] / kappa. r^2 is
    relaxed halfway toward the proposal each sweep. If the update residual
    alternates sign repeatedly, the loop switches to bisection on r^2.
    """
    if tau <= 0:
        raise ValueError("tau must be positive; reach tau = 0 via solve_tau_limit")
    if kappa <= 0:
        raise ValueError("kappa must be positive")

    y = (r_init if r_init is not None else _initial_r(kappa, noise)) ** 2
    trace = []
    c = None
    flips = 0
    last_sign = 0
    bracket = None
    for it in range(1, max_outer + 1):
        law = ConvolvedLaw(noise, float(np.sqrt(y)))
        c = solve_c_given_r(
            kappa, tau, loss, law, hint=c, n_hermite=n_hermite, n_grid=n_grid
        )
        m2 = _second_moment(loss, law, c, n_hermite, n_grid)
        eq1 = delta(kappa, tau, loss, law, c, n_hermite=n_hermite, n_grid=n_grid)
        eq2 = kappa * y - m2
        trace.append((float(np.sqrt(y)), c))
        if not np.isfinite(y) or not np.isfinite(m2):
            raise NonFiniteIterate(f"iterate became non-finite at sweep {it}")
        if abs(eq2) <= eq_tol * (1.0 + y) and abs(eq1) <= eq_tol:
            return SystemSolution(
                kappa=float(kappa), tau=float(tau), r=float(np.sqrt(y)), c=float(c),
                eq1_residual=float(eq1), eq2_residual=float(eq2), iterations=it,
            )
        proposal = m2 / kappa
        s = np.sign(proposal - y)
        if last_sign != 0 and s != last_sign:
            flips += 1
        last_sign = s
        if bracket is not None or flips >= 3:
            # oscillation: bisect on the residual of y -> proposal(y)
            if bracket is None:
                lo = min(t[0] ** 2 for t in trace[-4:])
                hi = max(t[0] ** 2 for t in trace[-4:])
                bracket = [lo, hi]
            if proposal > y:
                bracket[0] = y
            else:
                bracket[1] = y
            y = 0.5 * (bracket[0] + bracket[1])
        else:
            y = (1.0 - damping) * y + damping * proposal
    raise NoConvergence(
        f"system did not converge in {max_outer} sweeps "
        f"(last residuals eq1={eq1:.2e}, eq2={eq2:.2e})",
        trace=trace,
    )


def solve_tau_limit(kappa, loss, noise, tau_grid, **solve_kwargs):
    """Ridge path tau -> 0 for a strongly convex loss with kappa < 1.

    Solves the system on a decreasing tau grid (warm-starting r) and
    extrapolates r and c to tau = 0 through the polynomial interpolant of the
    three smallest tau values. A single-point grid returns that solution.
    """
    if kappa >= 1.0:
        raise ValueError("tau -> 0 limit requires kappa < 1")
    if loss.strong_convexity <= 0.0:
        raise ValueError("tau -> 0 limit requires a strongly convex loss")
    taus = sorted(set(float(t) for t in tau_grid), reverse=True)
    if not taus or taus[-1] <= 0.0:
        raise ValueError("tau grid must be positive")
    table = []
    r_prev = None
    for t in taus:
        sol = solve_system(kappa, t, loss, noise, r_init=r_prev, **solve_kwargs)
        table.append(sol)
        r_prev = sol.r
    rs = np.array([s.r for s in table])
    cs = np.array([s.c for s in table])
    if len(taus) == 1:
        return TauLimitResult(r0=float(rs[0]), c0=float(cs[0]), table=table)
    m = min(3, len(taus))
    tt = np.array(taus[-m:])
    r0 = float(np.polynomial.polynomial.polyfit(tt, rs[-m:], m - 1)[0])
    c0 = float(np.polynomial.polynomial.polyfit(tt, cs[-m:], m - 1)[0])
    monotone = bool(np.all(np.diff(rs) >= -1e-10))
    return TauLimitResult(r0=r0, c0=c0, table=table, r_monotone_increasing=monotone)
