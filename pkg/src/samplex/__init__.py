"""samplex: identification outcomes, sample-complexity distributions,
and typicality-based novelty decisions for finite hypothesis sets over
bit strings and discrete stochastic processes."""

from .bayes import (
    Decision,
    DecisionStatus,
    HypothesisSet,
    MCStoppingReport,
    PosteriorState,
    SCEstimate,
    StoppingConfig,
    TypicalityRegion,
    check_stop,
    divergence_rate,
    equivalence_groups,
    expected_sc_evaluator,
    expected_sc_predictive,
    falsification_bounds,
    hypothesis_count_bound,
    mc_sample_complexity,
    mc_surprisal_moment_curve,
    posterior_predictive,
    posterior_update,
    surprisal_moment,
    surprisal_moment_product_form,
    typical_membership,
    typical_set_bounds,
    warmup_threshold,
)
from .bitstrings import (
    IdOutcome,
    IdStatus,
    SortedHypothesisSet,
    StreamString,
    build_context_tree,
    grow_known_set,
    identify_depth_first,
    identify_sorted,
    identify_tree,
    load_hypothesis_set,
    resolution_cap,
    substring_identify,
)
from .info import (
    ComputationRefused,
    JointTable,
    ProbVector,
    SequenceDist,
    as_probvector,
    block_entropy,
    cross_entropy,
    divergences,
    entropy,
    entropy_rate,
    joint_measures,
    relative_entropy,
    surprisal,
    total_variation,
)
from .processes import (
    BitSource,
    EmpiricalProcess,
    IidSpec,
    MarkovSpec,
    NonErgodicError,
    SpreadCode,
    UndefinedDistributionError,
    empirical_dist,
    empirical_from_sequence,
    empirical_update,
    iid_sample,
    markov_sample,
    markov_step,
    sample_discrete,
    sequence_log_probability,
    spec_from_json,
    spec_to_json,
    spread_decode,
    spread_encode,
)
from .scdist import (
    EmpiricalSCDist,
    GeometricSCDist,
    PairwiseSCDist,
    PointMassSCDist,
    UndefinedMomentError,
    dist_moments,
    enumerate_orderings_oracle,
    geometric_pmf,
    mc_pairwise_oracle,
    pairwise_cdf,
    pairwise_pmf,
    pairwise_verification,
    partial_verification_prob,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
