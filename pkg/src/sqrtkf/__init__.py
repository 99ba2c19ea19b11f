"""Differentiable square-root Kalman filtering.

The core primitive is a triangularization operator (wide M -> lower
triangular L with L L^T = M M^T) whose forward/reverse derivatives come
from the Gramian differential identity and remain exact and finite for
rank-deficient inputs.
"""

from .filtering import (
    DegenerateInnovationError,
    FilterState,
    ModelParams,
    StepOutput,
    load_model_config,
    loglik_term,
    predict,
    run_filter,
    save_model_config,
    update,
)
from .forward import (
    DualMatrix,
    DualModelParams,
    dual_add,
    dual_loglik_term,
    dual_matmul,
    dual_scale,
    dual_solve_lower,
    dual_triangularize,
    filter_jvp,
    gradient,
)
from .linalg import (
    QrResult,
    ShapeError,
    SingularSystemError,
    ValidationError,
    as_matrix,
    frobenius_inner,
    matrix_from_text,
    matrix_to_text,
    pinv_factor,
    solve_lower,
    thin_qr,
)
from .oracles import FdConfig, classical_qr_jvp, dense_filter, fd_gradient
from .triangularize import (
    TriangularizationResult,
    gramian_residual,
    jvp_triangularize,
    triangularize,
    vjp_triangularize,
)

__all__ = [
    "DegenerateInnovationError",
    "DualMatrix",
    "DualModelParams",
    "FdConfig",
    "FilterState",
    "ModelParams",
    "QrResult",
    "ShapeError",
    "SingularSystemError",
    "StepOutput",
    "TriangularizationResult",
    "ValidationError",
    "as_matrix",
    "classical_qr_jvp",
    "dense_filter",
    "dual_add",
    "dual_loglik_term",
    "dual_matmul",
    "dual_scale",
    "dual_solve_lower",
    "dual_triangularize",
    "fd_gradient",
    "filter_jvp",
    "frobenius_inner",
    "gradient",
    "gramian_residual",
    "jvp_triangularize",
    "load_model_config",
    "loglik_term",
    "matrix_from_text",
    "matrix_to_text",
    "pinv_factor",
    "predict",
    "run_filter",
    "save_model_config",
    "solve_lower",
    "thin_qr",
    "triangularize",
    "update",
    "vjp_triangularize",
]
