"""Noise laws and the deterministic expectation engine.

A NoiseModel describes the error distribution eps; a ConvolvedLaw is the
Gaussian widening eps + r*Z with Z ~ N(0,1) independent of eps. Expectations
E[g(eps + r*Z)] are evaluated by tensorized quadrature: Gauss-Hermite in the
Z dimension crossed with either Gauss-Hermite (Gaussian eps) or a composite
Simpson rule over the density of eps on +/- 12 standard deviations. The
result is deterministic for fixed node counts.
"""

import functools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special

from .errors import QuadratureUnavailable

GH_NODES = 61
SIMPSON_POINTS = 4001
GRID_HALF_WIDTH_SDS = 12.0


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Error law: sampler, density (None if unavailable), variance, even moments.

    gaussian_sd is set when the law is exactly N(0, sd^2), which lets the
    expectation engine use Gauss-Hermite nodes instead of a density grid.
    """

    name: str
    sample: Callable
    density: Optional[Callable]
    variance: float
    moment: Callable
    gaussian_sd: Optional[float] = None


@dataclass(frozen=True, eq=False)
class ConvolvedLaw:
    """Law of eps + r*Z; degenerates to the base law at r = 0."""

    base: NoiseModel
    r: float

    @property
    def variance(self):
        return self.base.variance + self.r**2


def _hermite_rule(n):
    t, w = np.polynomial.hermite.hermgauss(n)
    return t * np.sqrt(2.0), w / np.sqrt(np.pi)


def _simpson_weights(num, h):
    w = np.ones(num)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def _base_rule(base, n_hermite, n_grid):
    """Nodes/weights integrating against the distribution of eps."""
    if base.gaussian_sd is not None:
        t, w = _hermite_rule(n_hermite)
        return base.gaussian_sd * t, w
    if base.density is None:
        raise QuadratureUnavailable(
            f"noise '{base.name}' has no density; use expect_mc instead"
        )
    half = GRID_HALF_WIDTH_SDS * np.sqrt(base.variance)
    x = np.linspace(-half, half, n_grid)
    w = _simpson_weights(n_grid, x[1] - x[0]) * base.density(x)
    return x, w


@functools.lru_cache(maxsize=8)
def _law_nodes(law, n_hermite, n_grid):
    """Flattened quadrature rule for eps + r*Z (cached per law instance)."""
    e_nodes, e_weights = _base_rule(law.base, n_hermite, n_grid)
    if law.r == 0.0:
        return e_nodes, e_weights
    t, w = _hermite_rule(n_hermite)
    z = (e_nodes[:, None] + law.r * t[None, :]).ravel()
    wt = (e_weights[:, None] * w[None, :]).ravel()
    return z, wt


def expect(law, g, n_hermite=GH_NODES, n_grid=SIMPSON_POINTS):
    """Deterministic E[g(eps + r*Z)] for piecewise-smooth g of polynomial growth."""
    z, w = _law_nodes(law, n_hermite, n_grid)
    return float(np.dot(w, g(z)))


def expect_mc(law, g, n_samples, seed):
    """Seeded Monte Carlo estimate of E[g(eps + r*Z)]; returns (mean, std_error)."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    from .streams import stream_rng

    rng = stream_rng(seed, "expect_mc", law.base.name, law.r)
    z = law.base.sample(rng, n_samples)
    if law.r > 0.0:
        z = z + law.r * rng.standard_normal(n_samples)
    vals = np.asarray(g(z), dtype=float)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_samples))


def density(law, z, n_hermite=GH_NODES, n_grid=SIMPSON_POINTS):
    """Density of eps + r*Z by convolution quadrature over the eps dimension."""
    z = np.asarray(z, dtype=float)
    if law.r == 0.0:
        if law.base.density is None:
            raise QuadratureUnavailable(f"noise '{law.base.name}' has no density")
        return law.base.density(z)
    e, w = _base_rule(law.base, n_hermite, n_grid)
    r = law.r
    kern = np.exp(-0.5 * ((z[:, None] - e[None, :]) / r) ** 2) / (r * np.sqrt(2 * np.pi))
    return kern @ w


def cdf(law, z, n_hermite=GH_NODES, n_grid=SIMPSON_POINTS):
    """CDF of eps + r*Z: E_eps[Phi((z - eps)/r)], by the same quadrature."""
    z = np.asarray(z, dtype=float)
    e, w = _base_rule(law.base, n_hermite, n_grid)
    if law.r == 0.0:
        # empirical-style CDF of the quadrature measure itself
        ind = (e[None, :] <= z[:, None]).astype(float)
        return ind @ w
    phi = 0.5 * special.erfc(-(z[:, None] - e[None, :]) / (law.r * np.sqrt(2.0)))
    return phi @ w


# --- built-in laws ---------------------------------------------------------

def _gauss_even_moment(sd, k):
    # E|eps|^k for even k: sd^k * (k-1)!!
    return sd**k * float(np.prod(np.arange(k - 1, 0, -2))) if k > 0 else 1.0


def gaussian_noise(sd=1.0):
    sd = float(sd)
    if sd <= 0:
        raise ValueError("sd must be positive")
    return NoiseModel(
        name=f"gaussian(sd={sd:g})",
        sample=lambda rng, n: sd * rng.standard_normal(n),
        density=lambda x: np.exp(-0.5 * (np.asarray(x) / sd) ** 2)
        / (sd * np.sqrt(2 * np.pi)),
        variance=sd * sd,
        moment=lambda k: _gauss_even_moment(sd, k),
        gaussian_sd=sd,
    )


def smoothed_laplace_noise(b=0.6, s=0.5):
    """Laplace(scale b) convolved with N(0, s^2): symmetric, log-concave-smooth.

    Closed-form density via the scaled complementary error function:
        f(x) = exp(-x^2/(2 s^2)) / (4 b) * [erfcx(z-) + erfcx(z+)],
        z+- = (s/b +- x/s) / sqrt(2).
    """
    b, s = float(b), float(s)
    if b <= 0 or s <= 0:
        raise ValueError("b and s must be positive")

    def _half_term(x, sign):
        # exp(s^2/(2b^2) - sign*x/b) * erfc((s/b - sign*x/s)/sqrt(2)), stably:
        # for nonnegative erfc arguments switch to erfcx, whose prefactor
        # collapses to exp(-x^2/(2 s^2)); otherwise the plain product decays.
        z = (s / b - sign * x / s) / np.sqrt(2.0)
        out = np.empty_like(x)
        pos = z >= 0.0
        out[pos] = special.erfcx(z[pos]) * np.exp(-0.5 * (x[pos] / s) ** 2)
        out[~pos] = special.erfc(z[~pos]) * np.exp(
            0.5 * (s / b) ** 2 - sign * x[~pos] / b
        )
        return out

    def pdf(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        val = (_half_term(x, 1.0) + _half_term(x, -1.0)) / (4.0 * b)
        return val if val.size > 1 else float(val[0])

    def moment(k):
        if k % 2 == 1:
            return 0.0
        # E[(L + sZ)^k] via the binomial expansion; odd cross terms vanish
        total = 0.0
        for j in range(0, k + 1, 2):
            e_l = float(special.factorial(j)) * b**j
            e_z = _gauss_even_moment(s, k - j)
            total += float(special.comb(k, j)) * e_l * e_z
        return total

    return NoiseModel(
        name=f"smoothed_laplace(b={b:g},s={s:g})",
        sample=lambda rng, n: rng.laplace(0.0, b, size=n) + s * rng.standard_normal(n),
        density=pdf,
        variance=2.0 * b * b + s * s,
        moment=moment,
        gaussian_sd=None,
    )


def noise_catalog():
    return [gaussian_noise(), smoothed_laplace_noise()]


_BUILDERS = {
    "gaussian": gaussian_noise,
    "smoothed_laplace": smoothed_laplace_noise,
}


def noise_from_config(spec):
    """Build a noise law from a {'name': ..., **params} mapping."""
    spec = dict(spec)
    name = spec.pop("name")
    if name not in _BUILDERS:
        raise ValueError(f"unknown noise '{name}'; choose from {sorted(_BUILDERS)}")
    return _BUILDERS[name](**spec)
