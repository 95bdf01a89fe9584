"""Robust controlled invariant sets of two-player differential games.

Solves the stationary obstacle-form Hamilton-Jacobi inequalities whose
bounded solutions are the discounted game values, extracts the invariant sets
as their near-zero sublevel sets, synthesizes greedy feedback policies from
the value gradient, and verifies invariance by closed-loop simulation.
"""

from .dynamics import (
    AffineDynamics,
    Box,
    GameModel,
    GeneralDynamics,
    PolynomialMap,
    builtin_model,
    eval_constraint,
    eval_dynamics,
    normalize_constraint,
)
from .grid import (
    Grid,
    ValueField,
    index_to_point,
    interior_band_mask,
    interpolate,
    load_field,
    one_sided_gradients,
    save_field,
)
from .hamiltonian import (
    HamiltonianEvaluator,
    dissipation_bounds,
    eval_lower_hamiltonian,
    eval_upper_hamiltonian,
    make_evaluator,
)
from .oracle import DiscreteGame, brute_force_value, direct_payoff
from .setops import (
    Contour2D,
    GridMask,
    compare_masks,
    extract_sublevel,
    marching_squares,
)
from .solver import (
    BothValuesResult,
    SolveConfig,
    SolveReport,
    solve_both_values,
    solve_fd,
    solve_sl,
    validate_grid_margin,
)
from .synthesis import (
    ConstantPolicy,
    FeedbackPolicy,
    RandomPolicy,
    SequencePolicy,
    Trajectory,
    feedback_control,
    simulate,
    value_gradient,
    verify_invariance,
    worst_case_disturbance,
)

__version__ = "0.1.0"

__all__ = [
    "AffineDynamics", "Box", "GameModel", "GeneralDynamics", "PolynomialMap",
    "builtin_model", "eval_constraint", "eval_dynamics", "normalize_constraint",
    "Grid", "ValueField", "index_to_point", "interior_band_mask", "interpolate",
    "load_field", "one_sided_gradients", "save_field",
    "HamiltonianEvaluator", "dissipation_bounds", "eval_lower_hamiltonian",
    "eval_upper_hamiltonian", "make_evaluator",
    "DiscreteGame", "brute_force_value", "direct_payoff",
    "Contour2D", "GridMask", "compare_masks", "extract_sublevel", "marching_squares",
    "BothValuesResult", "SolveConfig", "SolveReport", "solve_both_values",
    "solve_fd", "solve_sl", "validate_grid_margin",
    "ConstantPolicy", "FeedbackPolicy", "RandomPolicy", "SequencePolicy",
    "Trajectory", "feedback_control", "simulate", "value_gradient",
    "verify_invariance", "worst_case_disturbance",
    "__version__",
]
