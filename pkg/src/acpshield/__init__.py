"""Safe POMDP online planning among dynamic agents.

Adaptive conformal prediction regions around agent-trajectory predictors,
belief-support safety shields computed by backward induction, and a shielded
particle-based online planner, plus a gridworld testbed and an experiment
harness with a CLI.
"""

from .acp import (
    AcpEstimator,
    AcpTracker,
    PredictionRegions,
    nonconformity,
    region_radius,
    update_lambda,
)
from .errors import (
    AcpShieldError,
    AllActionsShielded,
    EmptyBelief,
    HistoryTooShort,
    ImpossibleObservation,
    InvalidModel,
    InvalidSpec,
    ParticleDeprivation,
    UnknownSupport,
)
from .gridworld import GridSpec, build_gridworld, cell_positions, initial_belief
from .harness import (
    AgentSetup,
    EpisodeResult,
    ExperimentConfig,
    acp_coverage_run,
    aggregate,
    load_config,
    run_benchmark,
    run_episode,
    safety_metrics,
)
from .planner import Planner, PlannerConfig, PlanStats, fallback_action
from .pomdp import (
    BeliefState,
    ParticleBelief,
    PomdpModel,
    belief_update,
    load_pomdp_file,
    resample_particles,
)
from .shield import (
    Bsts,
    Shield,
    UnsafeSets,
    WinningRegions,
    build_shield,
    compute_winning_regions,
    shield_actions,
    unsafe_sets,
    verify_winning_regions,
)
from .trajectory import (
    JointAgentState,
    PredictionSet,
    TrajectorySource,
    load_trajectories,
    make_predictor,
    synth_trajectories,
)

__version__ = "0.1.0"

__all__ = [
    "AcpEstimator",
    "AcpShieldError",
    "AcpTracker",
    "AgentSetup",
    "AllActionsShielded",
    "BeliefState",
    "Bsts",
    "EmptyBelief",
    "EpisodeResult",
    "ExperimentConfig",
    "GridSpec",
    "HistoryTooShort",
    "ImpossibleObservation",
    "InvalidModel",
    "InvalidSpec",
    "JointAgentState",
    "ParticleBelief",
    "ParticleDeprivation",
    "Planner",
    "PlannerConfig",
    "PlanStats",
    "PomdpModel",
    "PredictionRegions",
    "PredictionSet",
    "Shield",
    "TrajectorySource",
    "UnknownSupport",
    "UnsafeSets",
    "WinningRegions",
    "acp_coverage_run",
    "aggregate",
    "belief_update",
    "build_gridworld",
    "build_shield",
    "cell_positions",
    "compute_winning_regions",
    "fallback_action",
    "initial_belief",
    "load_config",
    "load_pomdp_file",
    "load_trajectories",
    "make_predictor",
    "nonconformity",
    "region_radius",
    "resample_particles",
    "run_benchmark",
    "run_episode",
    "safety_metrics",
    "shield_actions",
    "synth_trajectories",
    "unsafe_sets",
    "update_lambda",
    "verify_winning_regions",
]
