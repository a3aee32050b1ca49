"""Simulation and verification toolkit for Muller's ratchet with compensatory mutations."""

__version__ = "0.1.0"

from .core import (
    DEFAULT_K_MAX,
    ModelParams,
    SummaryStats,
    TypeDistribution,
    distribution_metric,
    exp_moment,
    kappa1,
    kappa2,
    log_exp_moment,
    poisson_profile,
    summarize,
    total_variation,
)
from .deterministic import (
    DualityReport,
    OdeSolverConfig,
    cgf_derivative_residual,
    closed_form,
    duality_residual,
    integrate,
    ode_rhs,
    zeta_flow,
)
from .errors import (
    AllPathsKilled,
    DegenerateWeights,
    DimensionMismatch,
    EmptyPopulation,
    NormalizationDrift,
    NumericalError,
    OverflowRisk,
    ParameterError,
    ParseError,
    RatchetError,
    SamplingError,
    UnsupportedDirection,
    ValidationError,
)
from .girsanov import check_exp_moment_bound, girsanov_log_weight, reweighted_expectation
from .particles import conditioned_distribution, mutation_counting_path, simulate_path
from .rng import make_rng
from .sde import SdeConfig, em_step, run_sde, run_sde_ensemble
from .trajectory import ClickEvent, TrajectoryRecord, load_archive, save_archive
from .wright_fisher import PopulationState, RunConfig, ensemble_run, run, step

__all__ = [name for name in dir() if not name.startswith("_")]
