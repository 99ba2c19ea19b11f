"""Independent references the production paths are checked against.

None of these share code with the square-root filter or the surrogate
tangent: the finite-difference gradient only evaluates the scalar
function it is handed; the dense filter runs the textbook covariance
recursion; classical_qr_jvp reproduces the standard QR tangent with an
explicit inverse, kept both as a full-rank correctness oracle and as the
documented failure mode at rank deficiency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .filtering import DegenerateInnovationError, ModelParams
from .linalg import diag_part, tril_part
from .triangularize import TriangularizationResult

_PARAM_FIELDS = ("a", "b", "u_sqrt", "v_sqrt", "x0", "s0")


@dataclass(frozen=True)
class FdConfig:
    """Central finite-difference settings.

    step: base step h; relative: scale the step per entry by (1 + |theta_i|).
    """

    step: float = 1e-6
    relative: bool = True

    def __post_init__(self):
        if self.step <= 0.0:
            raise ValueError("FD step must be positive")


def fd_gradient(f, params: ModelParams, cfg: FdConfig = FdConfig()) -> ModelParams:
    """Central differences of a scalar function of ModelParams, entrywise.

    Exceptions raised by f at a perturbed point are re-raised annotated
    with the offending field and entry index.
    """
    grads = {}
    for name in _PARAM_FIELDS:
        base = getattr(params, name)
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            h = cfg.step * (1.0 + abs(float(base[idx]))) if cfg.relative else cfg.step
            try:
                plus = base.copy()
                plus[idx] = base[idx] + h
                f_plus = f(replace(params, **{name: plus}))
                minus = base.copy()
                minus[idx] = base[idx] - h
                f_minus = f(replace(params, **{name: minus}))
            except Exception as exc:
                raise type(exc)(f"{exc} [while perturbing {name}{list(idx)}]") from exc
            g[idx] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = g
    return ModelParams(**grads)


def dense_filter(params: ModelParams, observations):
    """Textbook covariance-form Kalman filter, P reconstructed from factors.

    Returns (filtered means, filtered covariances, total log-likelihood).
    Not a production path: no factored updates, explicit P_nu inverse
    solves, used purely as an equivalence oracle.
    """
    a, b = params.a, params.b
    u = params.u_sqrt @ params.u_sqrt.T
    v = params.v_sqrt @ params.v_sqrt.T
    x = params.x0
    p = params.s0 @ params.s0.T
    d_y = params.d_y

    means, covs = [], []
    total = 0.0
    for t, y in enumerate(observations, start=1):
        x = a @ x
        p = a @ p @ a.T + u
        p_nu = b @ p @ b.T + v
        sign, logdet = np.linalg.slogdet(p_nu)
        if sign <= 0:
            raise DegenerateInnovationError("singular innovation covariance", time_index=t)
        nu = np.asarray(y, dtype=np.float64).reshape(d_y, 1) - b @ x
        sol = np.linalg.solve(p_nu, nu)
        total += -0.5 * (d_y * math.log(2.0 * math.pi) + logdet + float((nu.T @ sol)[0, 0]))
        gain = p @ b.T @ np.linalg.inv(p_nu)
        x = x + gain @ nu
        p = p - gain @ p_nu @ gain.T
        means.append(x)
        covs.append(p)
    return means, covs, total


def classical_qr_jvp(res: TriangularizationResult, dm: np.ndarray) -> np.ndarray:
    """Classical QR-based tangent, built on an explicit inverse of L.

    Equals the surrogate tangent whenever L is invertible. On (near)
    rank-deficient input it raises numpy's singular-matrix error or
    returns values that are non-finite or violate the Gramian identity;
    that failure is the documented behavior, demonstrated by the
    experiment CLI.
    """
    l_inv = np.linalg.inv(res.l)
    k_mat = l_inv @ dm @ res.q
    return res.l @ (tril_part(k_mat + k_mat.T) - diag_part(k_mat))
