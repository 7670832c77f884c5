"""Asymptotics of ridge-regularized robust regression in the proportional
regime, with a Monte Carlo harness that verifies the predictions at finite n.
"""

__version__ = "0.1.0"

from .losses import (  # noqa: F401
    LossModel,
    ProxValue,
    loss_catalog,
    loss_from_config,
    prox,
    prox_dc,
    prox_dx,
    prox_point,
    quadratic,
    smoothed_huber,
    smoothed_huber_ridge,
    validate_loss,
)
from .noise import (  # noqa: F401
    ConvolvedLaw,
    NoiseModel,
    expect,
    expect_mc,
    gaussian_noise,
    noise_catalog,
    noise_from_config,
    smoothed_laplace_noise,
)
from .fixed_point import (  # noqa: F401
    SystemSolution,
    TauLimitResult,
    delta,
    solve_c_given_r,
    solve_system,
    solve_tau_limit,
)
from .estimator import (  # noqa: F401
    Design,
    FitResult,
    curvature_trace,
    fit,
    fit_bound_report,
    gen_design,
)
from .diagnostics import (  # noqa: F401
    LooReport,
    LopReport,
    c_tau_concentration,
    loo_report,
    lop_report,
    residual_law_check,
    trace_perturbation_check,
    variance_sweep,
)
from .harness import (  # noqa: F401
    Cell,
    ExperimentConfig,
    RunRecord,
    emit_plots,
    load_config,
    paper_replication_config,
    parse_config,
    run,
    serialize_config,
)
