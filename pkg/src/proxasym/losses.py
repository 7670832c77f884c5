"""Convex loss family and its proximal-mapping calculus.

A loss rho is represented together with its derivatives psi = rho' and
psi' = rho''. The proximal mapping

    prox_c(rho)(x) = argmin_y { c*rho(y) + (x - y)^2 / 2 } = (id + c*psi)^{-1}(x)

is evaluated by a safeguarded Newton iteration on g(y) = y + c*psi(y) - x,
which is strictly increasing, with the bracket [min(0, x), max(0, x)]
(valid because the prox preserves sign and is a contraction). The derivatives

    d/dx prox_c(rho)(x) = 1 / (1 + c*psi'(y))
    d/dc prox_c(rho)(x) = -psi(y) / (1 + c*psi'(y))        with y = prox_c(rho)(x)

come from differentiating the stationarity identity y + c*psi(y) = x.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConvergenceFailure, NonFiniteInput

PROX_RTOL = 1e-12
PROX_MAX_ITER = 200


@dataclass(frozen=True)
class LossModel:
    """A twice-differentiable convex loss with rho(0) = 0 and rho >= 0.

    All three callables are vectorized over numpy arrays.
    strong_convexity is a global lower bound on psi' (0 if merely convex);
    growth_exponent m bounds |psi(x)| = O(|x|^m) at infinity.
    """

    name: str
    rho: Callable
    psi: Callable
    psi_prime: Callable
    strong_convexity: float
    growth_exponent: int


@dataclass(frozen=True)
class ProxValue:
    """Proximal point y with its two partial derivatives and psi(y)."""

    y: float
    dpdx: float
    dpdc: float
    psi_at_y: float


def _check_finite(c, x):
    if not np.isfinite(c):
        raise NonFiniteInput(f"c = {c}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("x contains nan or inf")


def prox_point(loss, c, x):
    """Proximal point prox_c(rho)(x); accepts scalar or array x.

    Converges to |y + c*psi(y) - x| <= 1e-12 * (1 + |x|) elementwise.
    """
    _check_finite(c, x)
    if c < 0:
        raise ValueError("c must be nonnegative")
    x = np.asarray(x, dtype=float)
    if c == 0.0:
        return x.copy()
    lo = np.minimum(0.0, x)
    hi = np.maximum(0.0, x)
    # start inside the bracket; exact for quadratic psi
    y = x / (1.0 + c * loss.psi_prime(x))
    y = np.clip(y, lo, hi)
    tol = PROX_RTOL * (1.0 + np.abs(x))
    for _ in range(PROX_MAX_ITER):
        g = y + c * loss.psi(y) - x
        if np.all(np.abs(g) <= tol):
            return y
        lo = np.where(g < 0.0, y, lo)
        hi = np.where(g > 0.0, y, hi)
        candidate = y - g / (1.0 + c * loss.psi_prime(y))
        outside = (candidate < lo) | (candidate > hi)
        y = np.where(outside, 0.5 * (lo + hi), candidate)
    raise ConvergenceFailure(
        f"prox solve for loss '{loss.name}' did not reach tolerance "
        f"in {PROX_MAX_ITER} iterations (max residual {np.max(np.abs(g)):.3e})"
    )


def prox(loss, c, x):
    """Full proximal evaluation: point, d/dx, d/dc, and psi at the point."""
    y = prox_point(loss, c, x)
    denom = 1.0 + c * loss.psi_prime(y)
    psi_y = loss.psi(y)
    return ProxValue(y=y, dpdx=1.0 / denom, dpdc=-psi_y / denom, psi_at_y=psi_y)


def prox_dx(loss, c, x):
    """Derivative of the prox in x: 1/(1 + c*psi'(y)); always in (0, 1]."""
    y = prox_point(loss, c, x)
    return 1.0 / (1.0 + c * loss.psi_prime(y))


def prox_dc(loss, c, x):
    """Derivative of the prox in c: -psi(y)/(1 + c*psi'(y)); sign is -sgn(x)."""
    y = prox_point(loss, c, x)
    return -loss.psi(y) / (1.0 + c * loss.psi_prime(y))


# --- built-in losses -------------------------------------------------------

def quadratic():
    """rho(x) = x^2/2; psi is the identity."""
    return LossModel(
        name="quadratic",
        rho=lambda x: 0.5 * np.square(x),
        psi=lambda x: np.asarray(x, dtype=float) + 0.0,
        psi_prime=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        strong_convexity=1.0,
        growth_exponent=1,
    )


def _logcosh(u):
    # log(cosh(u)) without overflow: |u| + log1p(exp(-2|u|)) - log 2
    a = np.abs(u)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def smoothed_huber(k=1.345):
    """Smooth bounded-score loss: psi(x) = k*tanh(x/k), rho(x) = k^2*log cosh(x/k).

    Behaves like x^2/2 near 0 and grows linearly with slope k at infinity;
    psi' = 1 - tanh^2(x/k) is Lipschitz, so all prox derivative formulas apply.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    k = float(k)

    def rho(x):
        return k * k * _logcosh(np.asarray(x, dtype=float) / k)

    def psi(x):
        return k * np.tanh(np.asarray(x, dtype=float) / k)

    def psi_prime(x):
        t = np.tanh(np.asarray(x, dtype=float) / k)
        return 1.0 - t * t

    return LossModel(
        name=f"smoothed_huber(k={k:g})",
        rho=rho,
        psi=psi,
        psi_prime=psi_prime,
        strong_convexity=0.0,
        growth_exponent=1,
    )


def smoothed_huber_ridge(k=1.345, omega=0.05):
    """Smoothed Huber plus omega*x^2/2; strongly convex with modulus omega."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    base = smoothed_huber(k)
    omega = float(omega)
    return LossModel(
        name=f"smoothed_huber_ridge(k={float(k):g},omega={omega:g})",
        rho=lambda x: base.rho(x) + 0.5 * omega * np.square(x),
        psi=lambda x: base.psi(x) + omega * np.asarray(x, dtype=float),
        psi_prime=lambda x: base.psi_prime(x) + omega,
        strong_convexity=omega,
        growth_exponent=1,
    )


def validate_loss(loss, lo=-50.0, hi=50.0, num=10_001):
    """Check the LossModel contract on a dense grid; raises ValueError on failure.

    Verifies rho(0) = 0, rho >= 0, sgn(psi) = sgn(x), psi' >= strong_convexity,
    and that psi is nondecreasing (finite differences).
    """
    x = np.linspace(lo, hi, num)
    r, s, sp = loss.rho(x), loss.psi(x), loss.psi_prime(x)
    if abs(float(loss.rho(0.0))) > 1e-14:
        raise ValueError(f"{loss.name}: rho(0) != 0")
    if np.any(r < -1e-14):
        raise ValueError(f"{loss.name}: rho takes negative values")
    nz = x != 0.0
    if np.any(np.sign(s[nz]) != np.sign(x[nz])):
        raise ValueError(f"{loss.name}: sgn(psi) != sgn(x)")
    if np.any(sp < loss.strong_convexity - 1e-12):
        raise ValueError(f"{loss.name}: psi' below strong convexity modulus")
    if np.any(np.diff(s) < -1e-12):
        raise ValueError(f"{loss.name}: psi not nondecreasing")
    return True


def loss_catalog():
    """All built-in losses with default parameters, contract-checked."""
    losses = [quadratic(), smoothed_huber(), smoothed_huber_ridge()]
    for loss in losses:
        validate_loss(loss)
    return losses


_BUILDERS = {
    "quadratic": quadratic,
    "smoothed_huber": smoothed_huber,
    "smoothed_huber_ridge": smoothed_huber_ridge,
}


def loss_from_config(spec):
    """Build a loss from a {'name': ..., **params} mapping."""
    spec = dict(spec)
    name = spec.pop("name")
    if name not in _BUILDERS:
        raise ValueError(f"unknown loss '{name}'; choose from {sorted(_BUILDERS)}")
    return _BUILDERS[name](**spec)
