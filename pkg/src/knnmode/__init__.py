"""Adaptive identification of the point with the smallest k-NN distance
under noisy distance oracles."""

from .complexity import (
    GapProfile,
    InstanceMeans,
    bad_event,
    gaps,
    kl_bernoulli,
    kl_gaussian,
    lower_bound_findknn,
    mode_gaps,
    upper_bound_findknn,
    upper_bound_mode,
    z_threshold,
)
from .confidence import BetaSchedule, PairEstimate, beta_empirical, beta_theoretical, update_pair
from .dataset import (
    Dataset,
    SyntheticSpec,
    brute_force_mode,
    exact_distance,
    exact_knn_distance,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .errors import ConfigError, ContractError, InstanceError, KnnModeError, NonIdentifiableError, ParseError
from .harness import ExperimentConfig, SweepResult, emit_results, load_results, run_trials, sweep
from .knn_search import (
    PointState,
    StepReport,
    find_knn_step,
    init_point_state,
    knn_interval,
    run_find_knn,
    select_targets,
    stopping_met,
)
from .mode_estimator import (
    EstimatorConfig,
    TrialRecord,
    baseline_naive_plus,
    baseline_random_sampling,
    estimate_mode,
    estimate_mode_budget,
)
from .oracle import OracleSession, QuerySample, query, query_capped, query_model1, query_model2

__version__ = "0.1.0"
