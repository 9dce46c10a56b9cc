"""Scheduling for mixed human-robot teams under learning-curve uncertainty.

Durations are Gaussian projections from per-agent exponential learning
curves tracked by adaptive Kalman filters. Finish-time distributions are
propagated through an analytic upper bound on the max of Gaussians, checked
against probabilistic deadlines with uniformly allocated risk, and improved
by an elitist mutation search. Quadrature and Monte Carlo oracles exist for
validation and benchmarks, not for the scheduling path.
"""

from .kernels import BACKEND
from .model import (
    AgentSpec,
    CurveParams,
    CycleError,
    DurationObservation,
    GaussianDist,
    HUMAN,
    KalmanState,
    Precondition,
    ProblemInstance,
    ROBOT,
    Schedule,
    TaskSpec,
    ValidationResult,
    Violation,
    validate_instance,
    schedule_violations,
)
from .curves import (
    DegenerateData,
    curve_mean,
    fit_population_prior,
    kalman_update,
    project_duration,
)
from .evaluate import (
    DeadlineCheck,
    PropagationResult,
    RiskAllocation,
    RobustnessReport,
    allocate_risk,
    check_robustness,
    max_gaussian_ub,
    propagate,
)
from .oracles import (
    GridOverflow,
    MonteCarloResult,
    QuadratureResult,
    make_grid,
    monte_carlo_oracle,
    quadrature_oracle,
)
from .search import (
    ANNEALED,
    EXPLOIT,
    EXPLORE_EXPLOIT,
    EvaluatedSchedule,
    EvolveResult,
    ExhaustedRetries,
    ObjectiveValue,
    SearchConfig,
    StrategyConfig,
    edf_seed,
    entropy_term,
    evaluate_schedule,
    evolve,
    mutate,
    objective,
    prior_states,
    project_schedule_durations,
    strategy_lambda,
)
from .generator import ConfigError, GenConfig, GroundTruth, generate, sample_execution

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "__version__",
    "AgentSpec",
    "CurveParams",
    "CycleError",
    "DurationObservation",
    "GaussianDist",
    "HUMAN",
    "KalmanState",
    "Precondition",
    "ProblemInstance",
    "ROBOT",
    "Schedule",
    "TaskSpec",
    "ValidationResult",
    "Violation",
    "validate_instance",
    "schedule_violations",
    "DegenerateData",
    "curve_mean",
    "fit_population_prior",
    "kalman_update",
    "project_duration",
    "DeadlineCheck",
    "PropagationResult",
    "RiskAllocation",
    "RobustnessReport",
    "allocate_risk",
    "check_robustness",
    "max_gaussian_ub",
    "propagate",
    "GridOverflow",
    "MonteCarloResult",
    "QuadratureResult",
    "make_grid",
    "monte_carlo_oracle",
    "quadrature_oracle",
    "ANNEALED",
    "EXPLOIT",
    "EXPLORE_EXPLOIT",
    "EvaluatedSchedule",
    "EvolveResult",
    "ExhaustedRetries",
    "ObjectiveValue",
    "SearchConfig",
    "StrategyConfig",
    "edf_seed",
    "entropy_term",
    "evaluate_schedule",
    "evolve",
    "mutate",
    "objective",
    "prior_states",
    "project_schedule_durations",
    "strategy_lambda",
    "ConfigError",
    "GenConfig",
    "GroundTruth",
    "generate",
    "sample_execution",
]
