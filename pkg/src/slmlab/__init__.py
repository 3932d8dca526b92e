"""Information-theoretic analysis of Bayes-optimal inference in the
standard linear model: scalar-channel functionals, replica fixed points
and phase transitions, AMP with state evolution, exact enumeration
oracles, information-sequence estimators and the subset-response map."""

__version__ = "0.1.0"

from .scalar_channel import (
    BGPosteriorParams,
    ScalarCurve,
    ScalarPrior,
    bg_posterior_update,
    check_immse,
    compute_scalar_curve,
    discretize_bg,
    k_transform,
    prior_moments,
    scalar_mi,
    scalar_mmse,
)
from .replica import (
    FixedPointCurve,
    PhaseTransition,
    ReplicaSolution,
    fixed_point_curve,
    locate_phase_transition,
    potential,
    replica_solution,
    single_crossing_diagnostic,
    state_evolution,
    stationary_points,
)
from .amp import (
    AMPOutput,
    LinearModelInstance,
    amp_diagnostics,
    amp_run,
    generate_instance,
    predict_new_observation,
)
from .exact import (
    Codebook,
    SupportPosterior,
    codebook_mmse_mi,
    detection_roc,
    exact_marginals,
    exact_mmse_mc,
    good_code_bounds,
    random_codebook,
    support_posterior,
)
from .infoseq import (
    check_card_bound,
    check_theorem_ip_ub,
    check_theorem_mmse_lb,
    check_theorem_monotone,
    conditional_mmse_function,
    estimate_info_sequence,
    estimate_mmse_sequence,
    estimate_sequences,
    mean_squared_covariance,
)
from .subset import (
    SubsetDecomposition,
    gaussianity_diagnostic,
    independence_check,
    interference_subtract,
    qr_split,
)
