import numpy as np
import pytest

from proxasym.estimator import fit, fit_bound_report, gen_design
from proxasym.fixed_point import solve_system
from proxasym.losses import quadratic, smoothed_huber, smoothed_huber_ridge
from proxasym.noise import gaussian_noise

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def quad_loss():
    return quadratic()


@pytest.fixture(scope="session")
def huber_loss():
    return smoothed_huber(1.345)


@pytest.fixture(scope="session")
def huber_ridge_loss():
    return smoothed_huber_ridge(1.345, 0.05)


@pytest.fixture(scope="session")
def std_normal():
    return gaussian_noise(1.0)


@pytest.fixture(scope="session")
def bound_log():
    """Accumulates the deterministic-bound reports of every checked fit."""
    return []


@pytest.fixture(scope="session")
def checked_fit(bound_log):
    """fit() wrapper that asserts the optimality bounds on every draw."""

    def _checked(design, loss, tau, **kwargs):
        result = fit(design, loss, tau, **kwargs)
        report = fit_bound_report(design, loss, tau, result)
        assert report["grad_norm"] <= 1e-8 * (1.0 + report["beta_norm"])
        if tau > 0:
            assert report["wn_slack"] >= -1e-10
            assert report["rho_slack"] >= -1e-10
        assert report["objective_slack"] >= -1e-12 * (
            1.0 + abs(report["objective_at_zero"])
        )
        bound_log.append(report)
        return result

    return _checked


@pytest.fixture(scope="session")
def huber_prediction(huber_loss, std_normal):
    """Solved (r, c) system for the main verification cell (kappa=0.5, tau=1)."""
    return solve_system(0.5, 1.0, huber_loss, std_normal)


@pytest.fixture(scope="session")
def huber_fits_n1000(huber_loss, std_normal, checked_fit):
    """20 seeded fits at n=1000, p=500 for the finite-sample checks."""
    fits = []
    for seed in range(1, 21):
        design = gen_design(1000, 500, "gaussian", seed, noise=std_normal)
        fits.append((design, checked_fit(design, huber_loss, 1.0)))
    return fits


def median_err_beta(reports):
    return float(np.median([r.err_beta for r in reports]))
