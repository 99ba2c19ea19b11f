"""Square-root Kalman filter: predict/update via triangularization.

The filter never forms a covariance matrix. It propagates a lower
triangular factor S with P = S S^T; each predict and update step is one
triangularization of a block matrix, the Kalman gain comes from
triangular solves against the innovation factor L11 (never an explicit
inverse), and the per-step log-likelihood is evaluated from L11's
diagonal and one forward substitution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .linalg import (
    ShapeError,
    SingularSystemError,
    as_matrix,
    diag_tolerance,
    matrix_from_text,
    matrix_to_text,
    solve_lower,
    solve_right_lower,
)
from .triangularize import triangularize

LOG_2PI = math.log(2.0 * math.pi)


class DegenerateInnovationError(SingularSystemError):
    """Innovation covariance is singular; the likelihood term is undefined."""

    def __init__(self, message: str, time_index: int | None = None):
        if time_index is not None:
            message = f"{message} (time index {time_index})"
        super().__init__(message)
        self.time_index = time_index


@dataclass(frozen=True)
class ModelParams:
    """Time-invariant model parameters, noise given as square-root factors.

    a: transition (d_x x d_x); b: observation (d_y x d_x);
    u_sqrt, v_sqrt: factors with U = u_sqrt u_sqrt^T, V = v_sqrt v_sqrt^T
    (either may be rank-deficient); x0: initial mean (d_x x 1);
    s0: initial covariance factor (d_x x d_x).
    """

    a: np.ndarray
    b: np.ndarray
    u_sqrt: np.ndarray
    v_sqrt: np.ndarray
    x0: np.ndarray
    s0: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a)
        d_x = a.shape[0]
        object.__setattr__(self, "a", as_matrix(a, d_x, d_x))
        b = as_matrix(self.b, cols=d_x)
        d_y = b.shape[0]
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "u_sqrt", as_matrix(self.u_sqrt, d_x, d_x))
        object.__setattr__(self, "v_sqrt", as_matrix(self.v_sqrt, d_y, d_y))
        object.__setattr__(self, "x0", as_matrix(self.x0, d_x, 1))
        object.__setattr__(self, "s0", as_matrix(self.s0, d_x, d_x))

    @property
    def d_x(self) -> int:
        return self.a.shape[0]

    @property
    def d_y(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class FilterState:
    """Filtered mean and lower-triangular square-root covariance factor."""

    mean: np.ndarray
    factor: np.ndarray


@dataclass(frozen=True)
class StepOutput:
    state: FilterState
    loglik_term: float
    innovation: np.ndarray
    obs_factor: np.ndarray
    gain: np.ndarray


def predict(state: FilterState, a: np.ndarray, u_sqrt: np.ndarray) -> FilterState:
    """Time update: mean <- A x, factor <- T([A S, U^{1/2}])."""
    mean = a @ state.mean
    m_pred = np.hstack([a @ state.factor, u_sqrt])
    return FilterState(mean=mean, factor=triangularize(m_pred).l)


def update(pred: FilterState, b: np.ndarray, v_sqrt: np.ndarray, y: np.ndarray) -> StepOutput:
    """Measurement update through one triangularization.

    Triangularizes [[B S, V^{1/2}], [S, 0]] and reads off the innovation
    factor L11, the gain L21 L11^{-1} (via triangular solves) and the
    posterior factor L22. Raises DegenerateInnovationError when L11 has a
    diagonal pivot at or below rank tolerance.
    """
    d_y, d_x = b.shape
    s = pred.factor
    m_upd = np.block([
        [b @ s, v_sqrt],
        [s, np.zeros((d_x, d_y))],
    ])
    l = triangularize(m_upd).l
    l11 = l[:d_y, :d_y]
    l21 = l[d_y:, :d_y]
    l22 = l[d_y:, d_y:]

    if y.shape != (d_y, 1):
        raise ShapeError(f"observation has shape {y.shape}, expected {(d_y, 1)}")
    innovation = y - b @ pred.mean
    try:
        gain = solve_right_lower(l21, l11)
        ll = loglik_term(l11, innovation)
    except SingularSystemError as exc:
        raise DegenerateInnovationError(str(exc)) from exc
    mean = pred.mean + gain @ innovation
    return StepOutput(
        state=FilterState(mean=mean, factor=l22),
        loglik_term=ll,
        innovation=innovation,
        obs_factor=l11,
        gain=gain,
    )


def loglik_term(obs_factor: np.ndarray, innovation: np.ndarray) -> float:
    """Gaussian log-density of the innovation under P_nu = L11 L11^T.

    l_t = -1/2 [d_y ln(2 pi) + 2 sum_i ln (L11)_ii + ||z||^2],  L11 z = nu.
    """
    d_y = obs_factor.shape[0]
    diag = np.diag(obs_factor)
    if np.min(diag) <= diag_tolerance(obs_factor):
        raise DegenerateInnovationError("innovation factor has a non-positive diagonal")
    z = solve_lower(obs_factor, innovation)
    return -0.5 * (d_y * LOG_2PI + 2.0 * float(np.sum(np.log(diag))) + float(np.sum(z * z)))


def run_filter(params: ModelParams, observations) -> tuple[list[StepOutput], float]:
    """Full predict-then-update recursion from (x0, s0).

    Returns all per-step outputs and the total log-marginal likelihood.
    A degenerate innovation covariance aborts with the offending time
    index (1-based, matching the observation sequence).
    """
    observations = list(observations)
    if not observations:
        raise ValueError("observation sequence must be non-empty")
    state = FilterState(mean=params.x0, factor=params.s0)
    outputs: list[StepOutput] = []
    total = 0.0
    for t, y in enumerate(observations, start=1):
        pred = predict(state, params.a, params.u_sqrt)
        try:
            out = update(pred, params.b, params.v_sqrt, as_matrix(y, params.d_y, 1))
        except DegenerateInnovationError as exc:
            raise DegenerateInnovationError(str(exc), time_index=t) from exc
        outputs.append(out)
        total += out.loglik_term
        state = out.state
    return outputs, total


# -- model configuration files -----------------------------------------------
#
# JSON document with integer fields d_x, d_y; the six parameter matrices
# serialized in the row-major whitespace text format of linalg; and an
# "observations" list of d_y x 1 matrices in the same format.

_PARAM_FIELDS = ("a", "b", "u_sqrt", "v_sqrt", "x0", "s0")


def save_model_config(path, params: ModelParams, observations) -> None:
    doc = {"d_x": params.d_x, "d_y": params.d_y}
    for name in _PARAM_FIELDS:
        doc[name] = matrix_to_text(getattr(params, name))
    doc["observations"] = [matrix_to_text(as_matrix(y, params.d_y, 1)) for y in observations]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_model_config(path) -> tuple[ModelParams, list[np.ndarray]]:
    with open(path) as fh:
        doc = json.load(fh)
    params = ModelParams(**{name: matrix_from_text(doc[name]) for name in _PARAM_FIELDS})
    if params.d_x != int(doc["d_x"]) or params.d_y != int(doc["d_y"]):
        raise ShapeError("declared d_x/d_y do not match the matrix shapes in the config")
    observations = [matrix_from_text(t) for t in doc["observations"]]
    return params, observations
