"""Decision-focused prediction+optimization with exact-penalty soft constraints."""

__version__ = "0.1.0"

from .problems import (  # noqa: F401
    Family,
    PredictionTarget,
    ProblemInstance,
    ProblemValidationError,
    RowKind,
    SuboptimalReference,
    UnifiedForm,
    feasibility_violation,
    problem_from_json,
    problem_to_json,
    regret,
    true_objective,
    unify,
)
from .surrogate import (  # noqa: F401
    SegmentState,
    SingularSystem,
    closed_form_x,
    grad_loss_C,
    grad_loss_Q,
    grad_loss_theta,
    jacobian_x_theta,
    s_grad,
    s_value,
    segment_state,
    surrogate_grad_x,
    surrogate_objective,
)
from .solver import (  # noqa: F401
    SolveReport,
    SolveStatus,
    brute_force_oracle,
    solve_original,
    solve_surrogate,
)
