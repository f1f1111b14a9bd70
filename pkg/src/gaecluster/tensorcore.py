"""Dense float64 matrix kernel.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The
helpers here add the shape checks, the clamped activations and the
reductions the rest of the package relies on, plus a cyclic Jacobi
eigensolver for small symmetric matrices.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, NumericError, ShapeError

Matrix = np.ndarray

SIGMOID_CLAMP = 500.0

_ELEMENTWISE = ("relu", "sigmoid", "relu_grad", "sigmoid_from_value")
_REDUCTIONS = ("sum", "mean", "max", "column_mean", "column_std")


def as_matrix(x, name: str = "matrix") -> Matrix:
    """Coerce ``x`` to a finite 2-D float64 array."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains NaN or Inf")
    return a


def identity(n: int) -> Matrix:
    return np.eye(n, dtype=np.float64)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(x):
    x = np.clip(x, -SIGMOID_CLAMP, SIGMOID_CLAMP)
    return 1.0 / (1.0 + np.exp(-x))


def map_elementwise(a: Matrix, f: str) -> Matrix:
    """Apply one of ``relu``, ``sigmoid``, ``relu_grad``, ``sigmoid_from_value``."""
    if f == "relu":
        return np.maximum(a, 0.0)
    if f == "sigmoid":
        return sigmoid(a)
    if f == "relu_grad":
        # subgradient at exactly 0 is 0
        return (a > 0.0).astype(np.float64)
    if f == "sigmoid_from_value":
        return a * (1.0 - a)
    raise ValueError(f"unknown elementwise function {f!r}; expected one of {_ELEMENTWISE}")


def reduce(a: Matrix, kind: str):
    """Reduce ``a`` to a scalar (sum, mean, max) or a 1-D column statistic.

    ``column_std`` is the population standard deviation (divides by the
    row count).
    """
    if a.size == 0:
        raise DomainError(f"cannot reduce an empty matrix of shape {a.shape}")
    if kind == "sum":
        return float(a.sum())
    if kind == "mean":
        return float(a.mean())
    if kind == "max":
        return float(a.max())
    if kind == "column_mean":
        return a.mean(axis=0)
    if kind == "column_std":
        return a.std(axis=0, ddof=0)
    raise ValueError(f"unknown reduction {kind!r}; expected one of {_REDUCTIONS}")


def jacobi_eigh(a: Matrix, tol: float = 1e-10, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    eigenvectors as columns. Convergence is declared once the Frobenius
    norm of the off-diagonal part drops below ``tol`` times
    ``max(1, ||a||_F)``.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ShapeError(f"jacobi_eigh needs a square matrix, got {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12, rtol=0.0):
        raise DomainError("jacobi_eigh needs a symmetric matrix")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))

    off_mask = ~np.eye(n, dtype=bool)

    def off_norm():
        return float(np.sqrt(np.sum(a[off_mask] ** 2)))

    for _ in range(max_sweeps):
        if off_norm() <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        if off_norm() > tol * scale:
            raise NumericError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]
