"""Dense linear algebra kernels.

Self-contained implementations (unpivoted Cholesky, cyclic Jacobi
eigensolver) so that the routines used as test oracles do not share code
with the iterative solvers they validate.  Scales targeted are small:
matrices up to a few hundred rows.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular


class RankDeficiencyError(ValueError):
    """A matrix required to have full rank is (numerically) rank deficient."""


class NotPositiveDefiniteError(ValueError):
    """Cholesky hit a non-positive pivot."""


class SymmetryError(ValueError):
    """Input violated a symmetry precondition."""


class SymEigenResult(NamedTuple):
    eigenvalues: np.ndarray   # ascending
    eigenvectors: np.ndarray  # orthonormal columns, eigenvectors[:, k] <-> eigenvalues[k]


_PIVOT_FLOOR = 1e-14


def cholesky(a):
    """Lower-triangular L with A = L L^T, no pivoting.

    Raises NotPositiveDefiniteError when a pivot is <= 1e-14, which is the
    package-wide signal that a matrix is not positive definite.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    low = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if d <= _PIVOT_FLOOR:
            raise NotPositiveDefiniteError(f"pivot {d:.3e} at index {j}")
        low[j, j] = np.sqrt(d)
        if j + 1 < n:
            low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def least_norm_solution(a, b):
    """Minimum-Euclidean-norm solution of the underdetermined system A x = b.

    A must have full row rank (rows <= cols); computes x = A^T (A A^T)^{-1} b
    through an unpivoted Cholesky factorization of A A^T.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or b.shape != (a.shape[0],):
        raise ValueError("shape mismatch between A and b")
    gram = a @ a.T
    try:
        low = cholesky(gram)
    except NotPositiveDefiniteError as exc:
        raise RankDeficiencyError("A A^T is numerically singular; A lacks full row rank") from exc
    w = solve_triangular(low, b, lower=True)
    w = solve_triangular(low.T, w, lower=False)
    return a.T @ w


def _check_symmetric(a, tol):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, np.max(np.abs(a)))
    skew = np.max(np.abs(a - a.T)) if a.size else 0.0
    if skew > tol * scale:
        raise SymmetryError(f"matrix is not symmetric: max |A - A^T| = {skew:.3e}")
    return a


def sym_eigen(a, max_sweeps=100):
    """Full spectral decomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Sweeps run until the off-diagonal Frobenius norm drops below
    1e-12 * ||A||_F (or max_sweeps).  Eigenvalues come back ascending with
    matching orthonormal eigenvector columns.
    """
    a = _check_symmetric(a, 1e-12)
    n = a.shape[0]
    work = 0.5 * (a + a.T)
    q = np.eye(n)
    norm_f = np.linalg.norm(work)
    if n > 1 and norm_f > 0.0:
        for _ in range(max_sweeps):
            off = np.sqrt(max(np.sum(work**2) - np.sum(np.diag(work) ** 2), 0.0))
            if off <= 1e-12 * norm_f:
                break
            for p in range(n - 1):
                for r in range(p + 1, n):
                    apq = work[p, r]
                    if abs(apq) < 1e-300:
                        continue
                    # stable rotation angle (Golub & Van Loan)
                    tau = (work[r, r] - work[p, p]) / (2.0 * apq)
                    if tau == 0.0:
                        t = 1.0
                    elif abs(tau) > 1e150:   # tau*tau would overflow
                        t = 0.5 / tau
                    else:
                        t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = t * c
                    rot_p = work[:, p].copy()
                    rot_r = work[:, r].copy()
                    work[:, p] = c * rot_p - s * rot_r
                    work[:, r] = s * rot_p + c * rot_r
                    rot_p = work[p, :].copy()
                    rot_r = work[r, :].copy()
                    work[p, :] = c * rot_p - s * rot_r
                    work[r, :] = s * rot_p + c * rot_r
                    rot_p = q[:, p].copy()
                    q[:, p] = c * rot_p - s * q[:, r]
                    q[:, r] = s * rot_p + c * q[:, r]
    values = np.diag(work).copy()
    order = np.argsort(values, kind="stable")
    return SymEigenResult(values[order], q[:, order])


def gen_eigen(a, b):
    """All generalized eigenpairs of (A, B) with B positive definite.

    Reduces to the symmetric problem L^{-1} A L^{-T} with B = L L^T and maps
    the eigenvectors back; columns are B-orthonormal, eigenvalues ascending.
    """
    a = _check_symmetric(a, 1e-12)
    b = _check_symmetric(b, 1e-12)
    low = cholesky(b)
    c = solve_triangular(low, a, lower=True)
    c = solve_triangular(low, c.T, lower=True).T
    values, y = sym_eigen(0.5 * (c + c.T))
    vectors = solve_triangular(low.T, y, lower=False)
    return values, vectors


def gen_eigen_min(a, b):
    """Smallest generalized eigenvalue of (A, B) and its B-normalized eigenvector."""
    values, vectors = gen_eigen(a, b)
    return float(values[0]), vectors[:, 0].copy()


def oversampled_dct(p, n, f, w):
    """Oversampled-cosine sensing matrix with columns (1/sqrt(P)) cos(2 pi w j / F).

    Column index j runs 1..N.  The frequency vector w must lie in [0, 1]^P;
    F controls how coherent neighbouring columns are.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (p,):
        raise ValueError(f"w must have shape ({p},), got {w.shape}")
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError("entries of w must lie in [0, 1]")
    if p <= 0 or n <= 0 or f <= 0:
        raise ValueError("P, N, F must be positive")
    cols = np.arange(1, n + 1, dtype=float)
    return np.cos(2.0 * np.pi * np.outer(w, cols) / f) / np.sqrt(p)
