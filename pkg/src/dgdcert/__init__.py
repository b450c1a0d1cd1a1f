"""Simulator and certificates for decentralized gradient descent with
diminishing stepsizes."""

from .certificates import (
    BoundCertificate,
    ProblemConstants,
    choose_l,
    consensus_envelope,
    damped_recursion_bound,
    evaluate_certificate,
    geometric_forcing_bound,
    problem_constants,
    rate_envelope_p1,
    rate_envelope_sub,
    recursion_oracle,
    uniform_radius,
)
from .engine import (
    AgentStates,
    Trajectory,
    average_dynamics_residual,
    dgd_step,
    initial_states,
    run,
)
from .errors import (
    AssumptionViolation,
    CertificateUnavailable,
    ConstructionError,
    EstimateUnavailable,
    HypothesisViolation,
)
from .harness import (
    ExperimentConfig,
    SlopeEstimate,
    cmd_certify,
    cmd_figure1,
    cmd_figure2,
    cmd_run,
    tail_slope,
)
from .network import (
    Graph,
    MixingMatrix,
    ValidationReport,
    build_graph,
    metropolis_weights,
    mixing_from_matrix,
    spectral_gap,
    two_agent_matrix,
    validate_mixing,
)
from .objectives import (
    CostEnsemble,
    ensemble_from_json,
    eta,
    grad_norm_at_opt,
    least_squares_from_data,
    quadratic_pair,
    random_least_squares,
)
from .schedules import (
    AdmissibilityReport,
    StepsizeSchedule,
    check_schedule,
    constant_schedule,
    polynomial_schedule,
)
from .sharpness import (
    SharpnessInstance,
    divergence_threshold,
    iteration_matrix,
    sharpness_ratio,
    top_eigenvalue,
)

__version__ = "0.1.0"
