import numpy as np
import pytest
from scipy import integrate, stats

from proxasym.errors import QuadratureUnavailable
from proxasym.losses import prox_dx, prox_point, quadratic, smoothed_huber
from proxasym.noise import (
    ConvolvedLaw,
    NoiseModel,
    cdf,
    density,
    expect,
    expect_mc,
    gaussian_noise,
    noise_catalog,
    noise_from_config,
    smoothed_laplace_noise,
)


def test_variance_additivity():
    law = ConvolvedLaw(gaussian_noise(1.0), 1.0)
    assert expect(law, np.square) == pytest.approx(2.0, abs=1e-12)
    assert law.variance == pytest.approx(2.0)


def test_normalization():
    for base in noise_catalog():
        for r in (0.0, 0.4, 1.3):
            law = ConvolvedLaw(base, r)
            assert expect(law, lambda z: np.ones_like(z)) == pytest.approx(1.0, abs=1e-6)


def test_constant_integrand_prox_dx():
    q = quadratic()
    law = ConvolvedLaw(gaussian_noise(1.0), 0.5)
    val = expect(law, lambda z: prox_dx(q, 1.0, z))
    assert val == pytest.approx(0.5, abs=1e-12)


def test_density_integrates_to_one_trapezoid():
    for base in noise_catalog():
        half = 12.0 * np.sqrt(base.variance)
        x = np.linspace(-half, half, 20_001)
        assert np.trapezoid(base.density(x), x) == pytest.approx(1.0, abs=1e-6)


def test_convolved_density_unimodal_at_zero():
    for base in noise_catalog():
        for r in (0.2, 0.9):
            law = ConvolvedLaw(base, r)
            x = np.linspace(-8.0, 8.0, 801)
            f = density(law, x)
            left = f[x <= 0]
            right = f[x >= 0]
            assert np.all(np.diff(left) >= -1e-12)
            assert np.all(np.diff(right) <= 1e-12)


def test_smoothed_laplace_density_matches_brute_convolution():
    base = smoothed_laplace_noise(0.6, 0.5)
    b, s = 0.6, 0.5

    def brute(x):
        f = lambda t: (0.5 / b) * np.exp(-abs(t) / b) * stats.norm.pdf(x - t, scale=s)
        return integrate.quad(f, -50, 50, limit=300)[0]

    for x in (0.0, 0.3, 1.0, 3.0):
        assert float(base.density(x)) == pytest.approx(brute(x), rel=1e-8)


def test_moments():
    g = gaussian_noise(1.5)
    assert g.moment(2) == pytest.approx(2.25)
    assert g.moment(4) == pytest.approx(3 * 1.5**4)
    sl = smoothed_laplace_noise(0.6, 0.5)
    assert sl.moment(2) == pytest.approx(sl.variance)
    half = 40.0
    x = np.linspace(-half, half, 400_001)
    fourth = np.trapezoid(x**4 * sl.density(x), x)
    assert sl.moment(4) == pytest.approx(fourth, rel=1e-8)
    assert sl.moment(3) == 0.0


def test_expect_mc_examples():
    g1 = ConvolvedLaw(gaussian_noise(1.0), 0.0)
    mean, se = expect_mc(g1, lambda z: z, 200_000, seed=1)
    assert abs(mean) <= 4 * se
    g2 = ConvolvedLaw(gaussian_noise(1.0), 1.0)
    mean, se = expect_mc(g2, np.square, 1_000_000, seed=2)
    assert mean == pytest.approx(2.0, abs=4 * se)
    sl = ConvolvedLaw(smoothed_laplace_noise(), 0.3)
    mean, se = expect_mc(sl, np.abs, 400_000, seed=3)
    assert mean == pytest.approx(expect(sl, np.abs), abs=4 * se)


def test_expect_vs_mc_twenty_random_pairs():
    rng = np.random.default_rng(99)
    bases = noise_catalog()
    huber = smoothed_huber(1.345)
    integrands = [
        np.square,
        np.abs,
        lambda z: np.cos(z),
        lambda z: prox_point(huber, 0.7, z),
        lambda z: z**4,
    ]
    for i in range(20):
        base = bases[i % 2]
        g = integrands[i % len(integrands)]
        law = ConvolvedLaw(base, float(rng.uniform(0.0, 1.5)))
        mean, se = expect_mc(law, g, 120_000, seed=1000 + i)
        assert abs(mean - expect(law, g)) <= 4 * se + 1e-12


def test_quadrature_node_doubling_stability():
    huber = smoothed_huber(1.345)
    q = quadratic()
    for base in noise_catalog():
        law = ConvolvedLaw(base, 0.8)
        for loss, c in ((huber, 0.4), (q, 1.3)):
            dx = lambda z: 1.0 / (1.0 + c * loss.psi_prime(prox_point(loss, c, z)))
            sq = lambda z: np.square(z - prox_point(loss, c, z))
            for g in (dx, sq):
                v1 = expect(law, g)
                v2 = expect(law, g, n_hermite=122, n_grid=8001)
                assert abs(v1 - v2) < 1e-8


def test_degenerates_to_base_at_r_zero():
    base = gaussian_noise(0.7)
    law = ConvolvedLaw(base, 0.0)
    assert expect(law, np.square) == pytest.approx(0.49, abs=1e-12)


def test_gaussian_cdf_matches_closed_form():
    law = ConvolvedLaw(gaussian_noise(1.0), 0.8)
    sd = np.sqrt(law.variance)
    z = np.linspace(-5, 5, 101)
    np.testing.assert_allclose(cdf(law, z), stats.norm.cdf(z / sd), atol=1e-9)


def test_quadrature_unavailable_without_density():
    opaque = NoiseModel(
        name="opaque",
        sample=lambda rng, n: rng.standard_normal(n),
        density=None,
        variance=1.0,
        moment=lambda k: 0.0,
    )
    law = ConvolvedLaw(opaque, 0.5)
    with pytest.raises(QuadratureUnavailable):
        expect(law, np.square)
    mean, se = expect_mc(law, np.square, 50_000, seed=5)
    assert mean == pytest.approx(1.25, abs=4 * se)


def test_sampling_matches_declared_variance():
    from proxasym.streams import stream_rng

    for base in noise_catalog():
        rng = stream_rng(7, "noise-var", base.name)
        draws = base.sample(rng, 400_000)
        assert np.var(draws) == pytest.approx(base.variance, rel=0.02)


def test_noise_from_config():
    noise = noise_from_config({"name": "gaussian", "sd": 2.0})
    assert noise.variance == pytest.approx(4.0)
    with pytest.raises(ValueError):
        noise_from_config({"name": "student_t"})
