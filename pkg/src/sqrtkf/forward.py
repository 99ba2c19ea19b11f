"""Forward-mode tangent propagation through the square-root filter.

Every value is carried as a (primal, tangent) pair and pushed through a
closed set of dual rules: matrix product/sum, triangularization (with
the rank-robust surrogate tangent), lower-triangular solves, and the
per-step log-likelihood. filter_jvp runs the whole recursion once per
direction; gradient() sweeps the canonical basis of each parameter
entry, which is exact and cheap at filter-scale parameter counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filtering import DegenerateInnovationError, ModelParams, loglik_term
from .linalg import ShapeError, as_matrix, solve_lower, solve_right_lower
from .triangularize import jvp_triangularize, triangularize


@dataclass(frozen=True)
class DualMatrix:
    """A matrix together with its tangent (same shape)."""

    primal: np.ndarray
    tangent: np.ndarray

    def __post_init__(self):
        if self.primal.shape != self.tangent.shape:
            raise ShapeError(
                f"primal/tangent shapes differ: {self.primal.shape} vs {self.tangent.shape}"
            )

    @staticmethod
    def constant(a: np.ndarray) -> "DualMatrix":
        return DualMatrix(a, np.zeros_like(a))


_PARAM_FIELDS = ("a", "b", "u_sqrt", "v_sqrt", "x0", "s0")


@dataclass(frozen=True)
class DualModelParams:
    """Model parameters paired with a tangent direction d(theta)."""

    a: DualMatrix
    b: DualMatrix
    u_sqrt: DualMatrix
    v_sqrt: DualMatrix
    x0: DualMatrix
    s0: DualMatrix

    @staticmethod
    def from_params(params: ModelParams, tangents: dict | None = None) -> "DualModelParams":
        """Lift params to duals; unspecified tangents default to zero."""
        tangents = tangents or {}
        duals = {}
        for name in _PARAM_FIELDS:
            primal = getattr(params, name)
            tangent = tangents.get(name)
            tangent = np.zeros_like(primal) if tangent is None else as_matrix(tangent, *primal.shape)
            duals[name] = DualMatrix(primal, tangent)
        return DualModelParams(**duals)

    def primal_params(self) -> ModelParams:
        return ModelParams(**{name: getattr(self, name).primal for name in _PARAM_FIELDS})


def dual_matmul(a: DualMatrix, b: DualMatrix) -> DualMatrix:
    return DualMatrix(a.primal @ b.primal, a.tangent @ b.primal + a.primal @ b.tangent)


def dual_add(a: DualMatrix, b: DualMatrix) -> DualMatrix:
    return DualMatrix(a.primal + b.primal, a.tangent + b.tangent)


def dual_scale(c: float, a: DualMatrix) -> DualMatrix:
    return DualMatrix(c * a.primal, c * a.tangent)


def dual_triangularize(m: DualMatrix) -> DualMatrix:
    res = triangularize(m.primal)
    return DualMatrix(res.l, jvp_triangularize(res, m.tangent))


def dual_solve_lower(l: DualMatrix, b: DualMatrix) -> DualMatrix:
    z = solve_lower(l.primal, b.primal)
    dz = solve_lower(l.primal, b.tangent - l.tangent @ z)
    return DualMatrix(z, dz)


def _dual_solve_right_lower(b: DualMatrix, l: DualMatrix) -> DualMatrix:
    # x = b l^{-1}; dx = (db - x dl) l^{-1}
    x = solve_right_lower(b.primal, l.primal)
    dx = solve_right_lower(b.tangent - x @ l.tangent, l.primal)
    return DualMatrix(x, dx)


def dual_loglik_term(obs_factor: DualMatrix, innovation: DualMatrix) -> tuple[float, float]:
    """(l_t, dl_t): log-det tangent from the factor diagonal, quadratic
    term through the dual triangular solve."""
    value = loglik_term(obs_factor.primal, innovation.primal)
    diag = np.diag(obs_factor.primal)
    d_diag = np.diag(obs_factor.tangent)
    z = dual_solve_lower(obs_factor, innovation)
    d_value = -0.5 * (
        2.0 * float(np.sum(d_diag / diag)) + 2.0 * float(np.sum(z.primal * z.tangent))
    )
    return value, d_value


def _dual_hstack(*blocks: DualMatrix) -> DualMatrix:
    return DualMatrix(
        np.hstack([b.primal for b in blocks]),
        np.hstack([b.tangent for b in blocks]),
    )


def _dual_slice(a: DualMatrix, rows: slice, cols: slice) -> DualMatrix:
    return DualMatrix(a.primal[rows, cols], a.tangent[rows, cols])


@dataclass(frozen=True)
class DualStepOutput:
    mean: DualMatrix
    factor: DualMatrix
    loglik_term: tuple[float, float]
    innovation: DualMatrix
    obs_factor: DualMatrix
    gain: DualMatrix


def _dual_predict(mean: DualMatrix, factor: DualMatrix, a: DualMatrix, u_sqrt: DualMatrix):
    new_mean = dual_matmul(a, mean)
    m_pred = _dual_hstack(dual_matmul(a, factor), u_sqrt)
    return new_mean, dual_triangularize(m_pred)


def _dual_update(
    mean: DualMatrix,
    factor: DualMatrix,
    b: DualMatrix,
    v_sqrt: DualMatrix,
    y: np.ndarray,
) -> DualStepOutput:
    d_y, d_x = b.primal.shape
    zeros = DualMatrix.constant(np.zeros((d_x, d_y)))
    top = _dual_hstack(dual_matmul(b, factor), v_sqrt)
    bottom = _dual_hstack(factor, zeros)
    m_upd = DualMatrix(
        np.vstack([top.primal, bottom.primal]),
        np.vstack([top.tangent, bottom.tangent]),
    )
    l = dual_triangularize(m_upd)
    l11 = _dual_slice(l, slice(0, d_y), slice(0, d_y))
    l21 = _dual_slice(l, slice(d_y, d_y + d_x), slice(0, d_y))
    l22 = _dual_slice(l, slice(d_y, d_y + d_x), slice(d_y, d_y + d_x))

    innovation = dual_add(DualMatrix.constant(y), dual_scale(-1.0, dual_matmul(b, mean)))
    gain = _dual_solve_right_lower(l21, l11)
    ll = dual_loglik_term(l11, innovation)
    post_mean = dual_add(mean, dual_matmul(gain, innovation))
    return DualStepOutput(
        mean=post_mean,
        factor=l22,
        loglik_term=ll,
        innovation=innovation,
        obs_factor=l11,
        gain=gain,
    )


def filter_jvp(params: DualModelParams, observations) -> tuple[float, float, list[DualStepOutput]]:
    """Run the filter on duals: returns (L, dL along d(theta), dual steps).

    The primal part is identical to run_filter; the tangent part is the
    exact directional derivative of the log-marginal likelihood and of
    all filtered moments, at any rank of the noise factors.
    """
    observations = list(observations)
    if not observations:
        raise ValueError("observation sequence must be non-empty")
    d_y = params.b.primal.shape[0]
    mean, factor = params.x0, params.s0
    outputs: list[DualStepOutput] = []
    total = 0.0
    d_total = 0.0
    for t, y in enumerate(observations, start=1):
        mean, factor = _dual_predict(mean, factor, params.a, params.u_sqrt)
        try:
            out = _dual_update(mean, factor, params.b, params.v_sqrt, as_matrix(y, d_y, 1))
        except DegenerateInnovationError as exc:
            raise DegenerateInnovationError(str(exc), time_index=t) from exc
        outputs.append(out)
        total += out.loglik_term[0]
        d_total += out.loglik_term[1]
        mean, factor = out.mean, out.factor
    return total, d_total, outputs


def gradient(params: ModelParams, observations) -> ModelParams:
    """Full gradient of the log-marginal likelihood w.r.t. every entry of
    every parameter, assembled from forward-mode sweeps over canonical
    basis directions. Returned with the same structure as ModelParams."""
    observations = list(observations)
    grads = {}
    for name in _PARAM_FIELDS:
        primal = getattr(params, name)
        g = np.zeros_like(primal)
        for idx in np.ndindex(primal.shape):
            tangent = np.zeros_like(primal)
            tangent[idx] = 1.0
            duals = DualModelParams.from_params(params, {name: tangent})
            _, d_total, _ = filter_jvp(duals, observations)
            g[idx] = d_total
        grads[name] = g
    return ModelParams(**grads)
