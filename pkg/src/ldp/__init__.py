"""Large-deviation rate functions for finite, possibly reducible Markov chains."""

__version__ = "0.1.0"

from .chain import (
    ChainError,
    ChainSpec,
    ClassDecomposition,
    StateId,
    decompose_classes,
    log_word_probability,
    parse_chain,
    reaches,
    word_probability,
)
from .cycles import (
    ApproximatingWord,
    CycleDecomposition,
    CycleError,
    MinimalCycle,
    approximating_words,
    decompose_balanced,
    enumerate_minimal_cycles,
    find_cycle_in,
)
from .estimator import (
    EstimatorError,
    MonteCarloBall,
    PairCountDistribution,
    SlopeReport,
    ball_probability,
    monte_carlo_ball,
    pair_count_distribution,
    rl_slope,
)
from .measures import (
    AdmissibilityStatus,
    AdmissibilityVerdict,
    MeasureError,
    SparseMeasure,
    classify_admissible,
    dirac,
    in_allowed_support,
    is_balanced,
    last_marginal,
    marginal,
    mixture,
    parse_measure,
    tv_distance,
)
from .rates import (
    AscentResult,
    MarkovMeasure,
    OccupationReport,
    PairChainLift,
    RateError,
    RateReport,
    TiltPotential,
    dv_entropy,
    entropy_rate_limit,
    marginal_entropy_rate,
    markov_marginal,
    occupation_rate,
    occupation_report,
    pair_chain_lift,
    pair_measure,
    parse_potential,
    rate_report,
    relative_entropy,
    relative_entropy_rate,
    scgf,
    scgf_conjugate,
    scgf_truncated,
)
from .words import (
    SlicedWord,
    SlicingConfig,
    TransitionTable,
    WordOpError,
    build_transition_table,
    count_measure,
    couple,
    coupling_constant,
    decouple,
    decoupling_constant,
    empirical,
    empirical_k,
    gamma_mass,
    reorder,
    slice_word,
    slicing_fiber_constant,
    stitch,
    stitching_constant,
)
