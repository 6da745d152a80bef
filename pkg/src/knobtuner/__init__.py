"""Discrete autotuner: surrogate-guided search over knob design spaces.

Search agents (a PPO policy-gradient walker and simulated-annealing chains)
explore a surrogate cost model; an adaptive sampler turns trajectories into
small measurement batches; the driver alternates search, measurement, and
cost-model refits under a budget.
"""

from .agent import Agent, AgentHyperparams, Trajectory, init_agent, run_search_round
from .backends import (
    MeasurementRecord,
    SyntheticLandscape,
    gen_landscape,
    load_landscape,
    load_log,
    make_backend,
    measure_batch,
    save_landscape,
    synthetic_runtime,
)
from .cost_model import BoostParams, CostModel, TrainingSet, featurize, fit, predict
from .driver import TuningResult, TuningTask, best_so_far_curve, tune
from .errors import (
    BackendUnavailableError,
    DegenerateVarianceError,
    DimensionMismatchError,
    EnumerationCapError,
    KnobTunerError,
    LogParseError,
    MismatchedTaskError,
    NoValidResultError,
    SpaceParseError,
    SpaceValidationError,
)
from .report import (
    RunData,
    compare_runs,
    convergence_steps_for_round,
    measurements_to_reach,
    pca_project,
    per_step_best,
    steps_to_convergence,
)
from .sa import SAParams, run_sa_round
from .sampler import VisitedSet, adaptive_sample, kmeans
from .space import (
    Action,
    Configuration,
    DesignSpace,
    KnobDef,
    apply_action,
    encode_state,
    enumerate_space,
    load_space,
    parse_space,
    random_config,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "Agent",
    "AgentHyperparams",
    "BackendUnavailableError",
    "BoostParams",
    "Configuration",
    "CostModel",
    "DegenerateVarianceError",
    "DesignSpace",
    "DimensionMismatchError",
    "EnumerationCapError",
    "KnobDef",
    "KnobTunerError",
    "LogParseError",
    "MeasurementRecord",
    "MismatchedTaskError",
    "NoValidResultError",
    "RunData",
    "SAParams",
    "SpaceParseError",
    "SpaceValidationError",
    "SyntheticLandscape",
    "Trajectory",
    "TrainingSet",
    "TuningResult",
    "TuningTask",
    "VisitedSet",
    "adaptive_sample",
    "apply_action",
    "best_so_far_curve",
    "compare_runs",
    "convergence_steps_for_round",
    "encode_state",
    "enumerate_space",
    "featurize",
    "fit",
    "gen_landscape",
    "init_agent",
    "kmeans",
    "load_landscape",
    "load_log",
    "load_space",
    "make_backend",
    "measure_batch",
    "parse_space",
    "pca_project",
    "predict",
    "random_config",
    "run_sa_round",
    "run_search_round",
    "save_landscape",
    "measurements_to_reach",
    "per_step_best",
    "steps_to_convergence",
    "synthetic_runtime",
    "tune",
]
