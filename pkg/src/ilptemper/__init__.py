"""Binary integer linear programming by locally balanced MCMC with annealing
and parallel tempering."""

from ._backend import NAME as BACKEND
from .core import (
    ChainState,
    EnergyParams,
    FeasTolerance,
    IlpInstance,
    apply_flips,
    build_instance,
    energy,
    flip_deltas,
    init_state,
    is_feasible,
    objective,
    violation,
)
from .samplers import (
    ProposalKind,
    ProposalOutcome,
    lbp_log_weights,
    mh_log_ratio_mlbp,
    mlbp_step,
    rwm_step,
    sample_indices,
)
from .tempering import (
    AnnealSchedule,
    EnsembleConfig,
    Ladder,
    RunResult,
    SwapStats,
    TraceRecord,
    anneal,
    deo_pairs,
    gamma_from_halving,
    make_ladder,
    run_ensemble,
    swap_prob_lambda,
    swap_prob_tau,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ChainState", "EnergyParams", "FeasTolerance", "IlpInstance", "apply_flips",
    "build_instance", "energy", "flip_deltas", "init_state", "is_feasible", "objective",
    "violation", "ProposalKind", "ProposalOutcome", "lbp_log_weights", "mh_log_ratio_mlbp",
    "mlbp_step", "rwm_step", "sample_indices", "AnnealSchedule", "EnsembleConfig", "Ladder",
    "RunResult", "SwapStats", "TraceRecord", "anneal", "deo_pairs", "gamma_from_halving",
    "make_ladder", "run_ensemble", "swap_prob_lambda", "swap_prob_tau",
]
