"""Tabular POMDP laboratory for belief-state selection and roll-out evaluation."""
from .belief import (
    CorruptionSpec,
    FunctionBelief,
    TableBelief,
    build_candidates,
    corrupt_belief,
    make_exact_belief,
)
from .errors import (
    BeliefBenchError,
    EnumerationCapError,
    InvalidModelError,
    LayerMismatchError,
    MissingExactDistError,
    UnreachableHistoryError,
)
from .kernels import BACKEND
from .metrics import (
    BoundInstance,
    check_all,
    check_bound,
    expected_belief_tv,
    expected_observable_tv,
    history_coverage,
    repeated_reset_coverage,
    tv,
    z_coverage,
)
from .pomdp import (
    History,
    Policy,
    Pomdp,
    QTable,
    exact_belief,
    exact_q,
    forward_filter,
    random_policy,
    random_pomdp,
    sample_trajectories,
    sample_trajectory,
)
from .rollout import (
    continuation_law,
    exact_repeated_reset_q,
    exact_single_reset_q,
    mc_q,
    repeated_reset_rollout,
    single_reset_rollout,
)
from .scenarios import CATALOG, make_scenario
from .selection import DiscriminatorClass, SelectionConfig, accuracy_oracle, run_selection
from .twostage import run_two_stage

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
