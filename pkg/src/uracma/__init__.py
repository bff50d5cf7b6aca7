"""Black-box bilevel optimization with nested CMA-ES and upper-level ranking approximation."""
from .cma import (
    RankedPopulation,
    SearchDistribution,
    Termination,
    check_termination,
    condition_number,
    default_popsize,
    init_distribution,
    max_coord_std,
    rank_population,
    sample_population,
    update_distribution,
)
from .engine import (
    CacheEntry,
    LowerSolverState,
    UraParams,
    WarmStartMode,
    covariance_floor,
    kendall_tau,
    kendall_tau_b,
    lower_round,
    new_cache,
    post_process,
    ura_evaluate,
    warm_start,
)
from .errors import ConfigurationError, EvaluationError, NumericalError
from .harness import Ablation, RunConfig, TrialResult, run_ablation, run_suite, run_trial
from .problems import (
    BilevelProblem,
    FeMeter,
    make_problem,
    make_smd,
    make_synthetic_quadratic,
    make_wra,
    mirror,
)

__version__ = "0.1.0"
