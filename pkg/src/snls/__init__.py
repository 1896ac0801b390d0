"""Separable nonlinear least squares and infinity-norm fitting."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    EmptyDatasetError,
    InvalidInputError,
    InvalidStartError,
    ModelEvaluationError,
    ParseError,
    SnlsError,
    SubproblemFailedError,
)
from .lls import RankInfo, column_space_projector, pseudoinverse, solve_lls  # noqa: E402
from .separable import (  # noqa: E402
    Dataset,
    SeparableFit,
    SeparableModel,
    eliminate_linear,
    eval_design_matrix,
    full_residual,
    vp_residual,
)
from .models import constant_model, exp_sum_model, gaussian_peaks_model, line_model, make_model  # noqa: E402
from .solvers import (  # noqa: E402
    NlsProblem,
    SolverConfig,
    SolveResult,
    Status,
    fd_jacobian,
    gauss_newton_step,
    hessian_gap_norm,
    lm_step,
    solve_nls,
    solve_separable_joint,
    solve_separable_varpro,
)
from .minimax import (  # noqa: E402
    DualConfig,
    MinimaxProblem,
    MinimaxResult,
    primal_value,
    simplex_max_identity,
    solve_minimax,
    subgradient_update,
    weighted_subproblem,
)
