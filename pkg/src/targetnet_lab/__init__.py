"""Linear off-policy RL with target networks: learners, oracles and a harness."""
from .errors import (
    ConfigError,
    InvalidInputError,
    LabError,
    NoStationaryDistributionError,
    SingularSystemError,
)
from .mdp import (
    Mdp,
    Policy,
    StateActionDist,
    build_transition_matrix,
    exact_q_pi,
    exact_q_star,
    is_ergodic,
    reward_rate_and_differential_q,
    sa_index,
    sample_transition,
    state_value_reduction,
    stationary_distribution,
)
from .features import (
    FeatureMatrix,
    center_features,
    check_rank,
    projection_matrix,
    scale_to_norm,
    spectral_norm,
    weighted_operator_norm,
)
from .agents import (
    ALGORITHMS,
    AlgorithmConfig,
    LearnerState,
    PolicySpec,
    Schedule,
    Transition,
    check_schedules,
    greedy_policy,
    mixture_policy,
    project_ball,
    softmax_policy,
    step,
    target_update,
)
from .oracles import (
    BoundReport,
    EvaluationOperators,
    LinearProblem,
    build_evaluation_operators,
    contraction_probe,
    control_fixed_point_discounted,
    diff_q_control_fixed_point,
    divergence_certificate,
    evaluation_fixed_point_average,
    evaluation_fixed_point_discounted,
    expected_dynamics,
    gradient_q_fixed_point,
    mean_field_iterate,
    mspbe,
    theorem2_constants_and_bound,
    theorem3_bound,
    theorem_fixed_point,
    w_star_map,
)
from .environments import make_baird, make_kolter, make_random_mdp
from .container import dump_mdp, load_mdp

__version__ = "0.1.0"
