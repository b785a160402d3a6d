"""Stochastic trust-region optimization with adaptive sampling and common random numbers."""

from .engine import EngineConfig, IterationRecord, RunTrace, iterate, run, success_ratio, tr_update
from .errors import (
    AstroError,
    BudgetExhausted,
    ConfigError,
    EstimationError,
    InputError,
    ModelError,
    PoisednessError,
    UsageError,
)
from .harness import (
    ExperimentTable,
    HittingTimes,
    VarianceReport,
    emit_report,
    fit_slope,
    hitting_times,
    validate_variance,
    work_complexity,
)
from .kernels import BACKEND
from .model import (
    DesignSet,
    LocalModel,
    PoisednessReport,
    bfgs_update,
    coordinate_design,
    interpolate,
    model_gradient_error,
    poisedness,
    quadratic_design,
)
from .oracle import (
    Observation,
    ProblemSpec,
    RandomStream,
    Regularity,
    StochasticOracle,
    StreamMode,
    StreamPolicy,
    derive_stream,
    evaluate,
    make_problem,
)
from .sampling import (
    InflationSchedule,
    Rule,
    SampleStats,
    SamplingRule,
    inflation,
    sample_adaptively,
    stop_condition,
    update,
)
from .subproblem import StepResult, cauchy_step, solve

__version__ = "0.1.0"
