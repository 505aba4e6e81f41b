"""Dense real linear algebra used throughout the package.

All matrices here are small (at most a few dozen rows), so everything is
dense and backed by LAPACK through numpy.  The wrappers exist to give the
rest of the package a uniform failure vocabulary: non-convergence and
singularity raise dedicated exceptions instead of leaking NaNs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EigenResult",
    "EigenvalueConvergenceError",
    "SingularMatrixError",
    "NotPositiveDefiniteError",
    "AsymmetricMatrixError",
    "as_matrix",
    "eigenvalues",
    "is_negative_definite",
    "is_positive_definite",
    "max_eig_sym",
    "solve",
    "cholesky_logdet",
    "symmetrize",
]

SYMMETRY_RTOL = 1e-9
DEFINITENESS_TOL = 1e-8


class EigenvalueConvergenceError(ArithmeticError):
    """QR iteration did not converge."""


class SingularMatrixError(ArithmeticError):
    """Linear system is numerically singular.

    Attributes
    ----------
    condition : float
        Estimated 2-norm condition number of the coefficient matrix.
    """

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class NotPositiveDefiniteError(ArithmeticError):
    """Cholesky factorization failed; the matrix is not positive definite."""


class AsymmetricMatrixError(ValueError):
    """A matrix expected to be symmetric is not, beyond tolerance."""


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray
    converged: bool = True

    def __len__(self) -> int:
        return len(self.values)


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    a = np.atleast_2d(np.asarray(M, dtype=float))
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _square(M, name="matrix") -> np.ndarray:
    a = as_matrix(M, name)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def eigenvalues(M) -> EigenResult:
    """All eigenvalues of a real square matrix.

    LAPACK ``dgeev`` (Hessenberg reduction followed by shifted QR) does the
    work; for real input complex eigenvalues come out as exact conjugate
    pairs.

    Raises
    ------
    EigenvalueConvergenceError
        If the QR iteration fails to converge.
    """
    a = _square(M)
    if a.size == 0:
        return EigenResult(np.zeros(0, dtype=complex))
    try:
        w = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise EigenvalueConvergenceError(str(exc)) from exc
    return EigenResult(np.asarray(w, dtype=complex))


def _check_symmetric(a: np.ndarray, tol: float | None) -> None:
    scale = max(1.0, np.linalg.norm(a, 2)) if a.size else 1.0
    bound = SYMMETRY_RTOL * scale if tol is None else tol
    if a.size and np.max(np.abs(a - a.T)) > bound:
        raise AsymmetricMatrixError(
            f"matrix is not symmetric (max |M - M^T| = {np.max(np.abs(a - a.T)):.3g})"
        )


def symmetrize(M) -> np.ndarray:
    a = np.asarray(M, dtype=float)
    return 0.5 * (a + a.T)


def max_eig_sym(M) -> float:
    """Largest eigenvalue of the symmetric part of ``M``."""
    a = symmetrize(_square(M))
    if a.size == 0:
        return -np.inf
    return float(np.linalg.eigvalsh(a)[-1])


def is_negative_definite(M, tol: float = DEFINITENESS_TOL, sym_tol: float | None = None) -> bool:
    """True iff the largest eigenvalue of symmetric ``M`` is below ``-tol``."""
    a = _square(M)
    _check_symmetric(a, sym_tol)
    return max_eig_sym(a) < -tol


def is_positive_definite(M, tol: float = DEFINITENESS_TOL, sym_tol: float | None = None) -> bool:
    a = _square(M)
    _check_symmetric(a, sym_tol)
    return max_eig_sym(-a) < -tol


def solve(A, B, rcond_limit: float = 1e-13) -> np.ndarray:
    """Solve ``A X = B`` by LU with partial pivoting.

    Raises
    ------
    SingularMatrixError
        If the reciprocal condition estimate of ``A`` falls below
        ``rcond_limit``.  The exception carries the condition estimate.
    """
    a = _square(A, "A")
    b = np.asarray(B, dtype=float)
    vector = b.ndim == 1
    b = b.reshape(-1, 1) if vector else b
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"row mismatch: A is {a.shape}, B is {b.shape}")
    if a.size == 0:
        x = np.zeros((0, b.shape[1]))
        return x.ravel() if vector else x
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or 1.0 / cond < rcond_limit:
        raise SingularMatrixError(f"matrix is numerically singular (cond ~ {cond:.3g})", float(cond))
    x = np.linalg.solve(a, b)
    return x.ravel() if vector else x


def cholesky_logdet(M) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor and log-determinant of a symmetric matrix.

    Raises
    ------
    NotPositiveDefiniteError
        When the factorization breaks down.  Barrier code uses this as the
        domain test, so it is an ordinary control-flow signal.
    """
    a = symmetrize(_square(M))
    if a.size == 0:
        return np.zeros((0, 0)), 0.0
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    d = np.diag(L)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise NotPositiveDefiniteError("non-positive pivot")
    return L, float(2.0 * np.sum(np.log(d)))
