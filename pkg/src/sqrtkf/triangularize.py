"""Triangularization of a wide matrix and its rank-robust derivatives.

triangularize(m) maps a wide matrix M (n x k, k >= n) to the lower
triangular factor L with L L^T = M M^T, via thin QR of M^T. Its forward
tangent is a closed-form surrogate built from the differential of the
Gramian identity

    dL L^T + L dL^T = dM M^T + M dM^T,

split into a column-space part driven by the pseudoinverse of L and a
null-space correction. The surrogate stays finite and exact (for any
Gramian-dependent downstream quantity) when M is rank-deficient, where
the classical QR tangent blows up; at full rank it coincides with the
classical formula. The reverse-mode map is the explicit transpose of the
forward one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    ShapeError,
    as_matrix,
    diag_part,
    pinv_factor,
    thin_qr,
    tril_part,
)


@dataclass(frozen=True)
class TriangularizationResult:
    """Factor L, the semi-orthogonal Q with M = L Q^T, and cached L^+."""

    l: np.ndarray
    q: np.ndarray
    l_pinv: np.ndarray

    @property
    def n(self) -> int:
        return self.l.shape[0]

    @property
    def k(self) -> int:
        return self.q.shape[0]

    def projector_complement(self) -> np.ndarray:
        """I - L L^+, the orthogonal projector onto the complement of col(L)."""
        return np.eye(self.n) - self.l @ self.l_pinv


def triangularize(m, rtol: float | None = None) -> TriangularizationResult:
    """Lower-triangular L (non-negative diagonal) with L L^T = M M^T.

    Computed as L = R^T from the sign-normalized thin QR of M^T; Q is the
    semi-orthogonal factor of that same call, so M = L Q^T holds exactly
    for the cached pair. Requires M wide (k >= n); rank-deficient M is
    supported and yields zero diagonal entries in L.
    """
    m = as_matrix(m)
    n, k = m.shape
    if k < n:
        raise ShapeError(f"triangularize requires a wide matrix (k >= n), got {m.shape}")
    qr = thin_qr(m.T)
    l = qr.r.T
    return TriangularizationResult(l=l, q=qr.q, l_pinv=pinv_factor(l, rtol=rtol))


def _check_tangent_shape(res: TriangularizationResult, t: np.ndarray, name: str) -> None:
    if t.shape != (res.n, res.k):
        raise ShapeError(f"{name} has shape {t.shape}, expected {(res.n, res.k)}")


def jvp_triangularize(res: TriangularizationResult, dm: np.ndarray) -> np.ndarray:
    """Surrogate forward tangent dL for the triangularization at `res`.

    dL = dL_col + dL_null with
        K       = L^+ dM Q
        dL_col  = L [tril(K + K^T) - diag(K)]
        dL_null = (I - L L^+) dM Q

    satisfying the Gramian differential identity at any rank. When L is
    invertible the null term vanishes and dL is the classical QR tangent.
    """
    _check_tangent_shape(res, dm, "dm")
    dm_q = dm @ res.q
    k_mat = res.l_pinv @ dm_q
    dl_col = res.l @ (tril_part(k_mat + k_mat.T) - diag_part(k_mat))
    dl_null = res.projector_complement() @ dm_q
    return dl_col + dl_null


def vjp_triangularize(res: TriangularizationResult, g_l: np.ndarray) -> np.ndarray:
    """Adjoint of jvp_triangularize: cotangent on L pulled back to M.

    Transposes each linear primitive of the forward map, giving
        G_N = L^T g_l
        G_K = tril(G_N) + tril(G_N)^T - diag(G_N)
        G_M = (L^+)^T G_K Q^T + (I - L L^+) g_l Q^T,
    so that <g_l, jvp(dm)> = <vjp(g_l), dm> for every dm.
    """
    if g_l.shape != (res.n, res.n):
        raise ShapeError(f"g_l has shape {g_l.shape}, expected {(res.n, res.n)}")
    g_n = res.l.T @ g_l
    g_k = tril_part(g_n) + tril_part(g_n).T - diag_part(g_n)
    return res.l_pinv.T @ g_k @ res.q.T + res.projector_complement() @ g_l @ res.q.T


def gramian_residual(m: np.ndarray, dm: np.ndarray, l: np.ndarray, dl: np.ndarray) -> float:
    """Frobenius norm of dl l^T + l dl^T - dm m^T - m dm^T."""
    if m.shape != dm.shape:
        raise ShapeError(f"m and dm shapes differ: {m.shape} vs {dm.shape}")
    if l.shape != dl.shape:
        raise ShapeError(f"l and dl shapes differ: {l.shape} vs {dl.shape}")
    if l.shape[0] != m.shape[0]:
        raise ShapeError(f"l rows {l.shape[0]} do not match m rows {m.shape[0]}")
    resid = dl @ l.T + l @ dl.T - dm @ m.T - m @ dm.T
    return float(np.linalg.norm(resid))
