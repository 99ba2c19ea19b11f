"""Dense double-precision linear algebra used by the filter.

Matrices are 2-D float64 numpy arrays throughout. Public constructors
validate shape and finiteness; the numeric kernels (QR, pseudoinverse,
triangular solves) are thin wrappers over numpy/scipy with the sign and
rank conventions the triangularization module relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

EPS = float(np.finfo(np.float64).eps)

# Frobenius tolerance used by the QR self-checks in tests.
QR_TOL = 1e-12
# Relative tolerance for the Penrose conditions of pinv_factor.
PINV_TOL = 1e-10


class ShapeError(ValueError):
    """Operands have incompatible or unsupported dimensions."""


class ValidationError(ValueError):
    """Input entries fail validation (non-finite, empty, not 2-D)."""


class SingularSystemError(ArithmeticError):
    """A triangular system has a (numerically) zero diagonal pivot."""


def as_matrix(a, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Validate and return `a` as a 2-D float64 array.

    Rejects empty dimensions and non-finite entries; optionally enforces
    an expected shape.
    """
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got ndim={out.ndim}")
    if out.shape[0] < 1 or out.shape[1] < 1:
        raise ValidationError(f"degenerate shape {out.shape}: both dimensions must be >= 1")
    if not np.all(np.isfinite(out)):
        raise ValidationError("matrix contains non-finite entries")
    if rows is not None and out.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got {out.shape[0]}")
    if cols is not None and out.shape[1] != cols:
        raise ShapeError(f"expected {cols} cols, got {out.shape[1]}")
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions {a.shape} x {b.shape} do not match")
    return a @ b


def transpose(a: np.ndarray) -> np.ndarray:
    return a.T


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return a + b


def scale(c: float, a: np.ndarray) -> np.ndarray:
    return float(c) * a


def frobenius_inner(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ShapeError(f"frobenius_inner: shapes {a.shape} and {b.shape} differ")
    return float(np.sum(a * b))


@dataclass(frozen=True)
class QrResult:
    """Thin QR factors: q has orthonormal columns, r is upper triangular
    with non-negative diagonal."""

    q: np.ndarray
    r: np.ndarray


def thin_qr(a: np.ndarray) -> QrResult:
    """Thin (reduced) QR of an m x n matrix with m >= n.

    The raw Householder factorization is sign-normalized so that
    diag(r) >= 0 (zero diagonals keep sign +1), which pins a single
    deterministic branch of the decomposition. Rank-deficient inputs are
    supported and simply produce zero diagonal entries in r.
    """
    m, n = a.shape
    if m < n:
        raise ShapeError(f"thin_qr requires m >= n, got {a.shape}")
    q, r = np.linalg.qr(a, mode="reduced")
    signs = np.where(np.diag(r) < 0.0, -1.0, 1.0)
    return QrResult(q=q * signs, r=signs[:, None] * r)


def pinv_factor(l: np.ndarray, rtol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a square factor via SVD.

    Singular values sigma_i <= rtol * sigma_max are treated as zero;
    rtol defaults to n * machine epsilon. Rank-deficient input is the
    supported case, not an error.
    """
    n, k = l.shape
    if n != k:
        raise ShapeError(f"pinv_factor expects a square factor, got {l.shape}")
    if rtol is None:
        rtol = n * EPS
    return np.linalg.pinv(l, rcond=rtol)


def tril_part(x: np.ndarray) -> np.ndarray:
    """Entries on and below the diagonal; zeros above."""
    n, k = x.shape
    if n != k:
        raise ShapeError(f"tril_part expects a square matrix, got {x.shape}")
    return np.tril(x)


def diag_part(x: np.ndarray) -> np.ndarray:
    """Diagonal of x as a diagonal matrix, everything else zeroed."""
    n, k = x.shape
    if n != k:
        raise ShapeError(f"diag_part expects a square matrix, got {x.shape}")
    return np.diag(np.diag(x))


def diag_tolerance(l: np.ndarray) -> float:
    """Rank tolerance below which a triangular diagonal pivot counts as zero."""
    d = np.abs(np.diag(l))
    return l.shape[0] * EPS * max(1.0, float(d.max()))


def solve_lower(l: np.ndarray, b: np.ndarray, diag_tol: float | None = None) -> np.ndarray:
    """Solve l z = b for lower-triangular l with strictly positive diagonal."""
    k = l.shape[0]
    if l.shape[1] != k:
        raise ShapeError(f"solve_lower expects a square triangular matrix, got {l.shape}")
    if b.shape[0] != k:
        raise ShapeError(f"solve_lower: rhs has {b.shape[0]} rows, expected {k}")
    tol = diag_tolerance(l) if diag_tol is None else diag_tol
    if np.min(np.diag(l)) <= tol:
        raise SingularSystemError("lower-triangular system has a diagonal pivot below rank tolerance")
    return solve_triangular(l, b, lower=True)


def solve_right_lower(b: np.ndarray, l: np.ndarray, diag_tol: float | None = None) -> np.ndarray:
    """Solve x l = b (i.e. x = b l^{-1}) for lower-triangular l, without
    forming the inverse."""
    k = l.shape[0]
    if l.shape[1] != k:
        raise ShapeError(f"solve_right_lower expects a square triangular matrix, got {l.shape}")
    if b.shape[1] != k:
        raise ShapeError(f"solve_right_lower: lhs has {b.shape[1]} cols, expected {k}")
    tol = diag_tolerance(l) if diag_tol is None else diag_tol
    if np.min(np.diag(l)) <= tol:
        raise SingularSystemError("lower-triangular system has a diagonal pivot below rank tolerance")
    return solve_triangular(l.T, b.T, lower=False).T


def matrix_to_text(a: np.ndarray) -> str:
    """Serialize a matrix as whitespace-separated text with round-trip precision.

    First line holds `rows cols`; each following line is one row. Floats
    use Python's shortest round-trip repr.
    """
    rows, cols = a.shape
    lines = [f"{rows} {cols}"]
    for i in range(rows):
        lines.append(" ".join(repr(float(v)) for v in a[i]))
    return "\n".join(lines)


def matrix_from_text(text: str) -> np.ndarray:
    tokens = text.split()
    if len(tokens) < 2:
        raise ValidationError("matrix text must start with 'rows cols'")
    rows, cols = int(tokens[0]), int(tokens[1])
    values = [float(t) for t in tokens[2:]]
    if len(values) != rows * cols:
        raise ValidationError(f"matrix text declares {rows}x{cols} but carries {len(values)} entries")
    return as_matrix(np.array(values, dtype=np.float64).reshape(rows, cols))
