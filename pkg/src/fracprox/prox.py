"""Proximal operators and projections for the solver subproblems.

Closed-form projections live alongside QP-backed proximal maps.  The
QP-backed classes keep one ADMM workspace alive: the constraint matrix never
changes between calls, so the KKT factorization is built once and every call
only updates the linear term (warm started from the previous anchor).
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .qp import SOLVED, QpProblem, QpSettings, QpSolver, QpStatusError

FEAS_TOL = 1e-8  # absolute per-constraint feasibility tolerance


def project_box(z, lb, ub):
    """Componentwise clamp onto [lb, ub]."""
    return np.minimum(np.maximum(np.asarray(z, dtype=float), lb), ub)


def project_sphere(z):
    """Nearest point on the unit sphere; the origin maps to e_1 (fixed tie-break)."""
    z = np.asarray(z, dtype=float)
    norm = np.linalg.norm(z)
    if norm == 0.0:
        out = np.zeros_like(z)
        out[0] = 1.0
        return out
    return z / norm


def project_simplex(z):
    """Euclidean projection onto {x >= 0, sum x = 1} by sorted thresholding."""
    z = np.asarray(z, dtype=float)
    u = np.sort(z)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, z.size + 1)
    cond = u + (1.0 - css) / idx > 0.0
    k = idx[cond][-1]
    tau = (1.0 - css[k - 1]) / k
    return np.maximum(z + tau, 0.0)


def soft_threshold(z, t):
    """Prox of t*||.||_1: componentwise shrink toward zero by t."""
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


class BoxProx:
    """Prox oracle for the zero function plus a box indicator."""

    def __init__(self, lb, ub):
        self.lb = np.asarray(lb, dtype=float)
        self.ub = np.asarray(ub, dtype=float)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lb - FEAS_TOL) or np.any(x > self.ub + FEAS_TOL):
            return np.inf
        return 0.0

    def evaluate(self, t, z):
        return project_box(z, self.lb, self.ub)


class SphereProx:
    """Prox oracle for the unit-sphere indicator."""

    def value(self, x):
        return 0.0 if abs(np.linalg.norm(x) - 1.0) <= FEAS_TOL else np.inf

    def evaluate(self, t, z):
        return project_sphere(z)


class L1PolytopeProx:
    """Prox oracle for ||x||_1 over {A x = b, lb <= x <= ub}.

    evaluate(t, z) minimizes ||x||_1 + (1/(2t)) ||x - z||^2 over the polytope
    through an epigraph split w = (x, s): the quadratic block is (1/t) I on
    the x variables, the objective gains 1^T s, and -s <= x <= s encodes the
    absolute values.  One QpSolver per value of t is cached.
    """

    def __init__(self, a, b, lb, ub, settings: QpSettings | None = None):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        n = self.a.shape[1] if self.a.size else np.broadcast(np.asarray(lb)).size
        self.n = n
        self.lb = np.broadcast_to(np.asarray(lb, dtype=float), (n,))
        self.ub = np.broadcast_to(np.asarray(ub, dtype=float), (n,))
        self.settings = settings or QpSettings()
        self._solver = None
        self._t = None

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.a.size and np.max(np.abs(self.a @ x - self.b)) > FEAS_TOL:
            return np.inf
        if np.any(x < self.lb - FEAS_TOL) or np.any(x > self.ub + FEAS_TOL):
            return np.inf
        return float(np.sum(np.abs(x)))

    def _build(self, t):
        n = self.n
        p_rows = self.a.shape[0] if self.a.size else 0
        eye = sp.identity(n, format="csr")
        zn = sp.csr_matrix((n, n))
        blocks = []
        l_parts, u_parts = [], []
        if p_rows:
            blocks.append(sp.hstack([sp.csr_matrix(self.a), sp.csr_matrix((p_rows, n))]))
            l_parts.append(self.b)
            u_parts.append(self.b)
        blocks.append(sp.hstack([eye, zn]))
        l_parts.append(self.lb)
        u_parts.append(self.ub)
        blocks.append(sp.hstack([eye, -eye]))      # x - s <= 0
        l_parts.append(np.full(n, -np.inf))
        u_parts.append(np.zeros(n))
        blocks.append(sp.hstack([eye, eye]))       # x + s >= 0
        l_parts.append(np.zeros(n))
        u_parts.append(np.full(n, np.inf))
        problem = QpProblem(
            P=sp.diags(np.concatenate([np.full(n, 1.0 / t), np.zeros(n)])),
            q=np.concatenate([np.zeros(n), np.ones(n)]),
            A=sp.vstack(blocks, format="csc"),
            l=np.concatenate(l_parts),
            u=np.concatenate(u_parts),
        )
        self._solver = QpSolver(problem, self.settings)
        self._t = t

    def retarget(self, eps_abs, eps_rel, max_iters=None):
        """Adjust termination tolerances (and optionally the iteration budget)
        in place; no refactorization needed.

        Solvers use this to run subproblems loose while far from convergence
        and tight near it (inexact-prox style with an escalation ladder).
        """
        self.settings.eps_abs = eps_abs
        self.settings.eps_rel = eps_rel
        if max_iters is not None:
            self.settings.max_iters = max_iters
        if self._solver is not None:
            self._solver.settings.eps_abs = eps_abs
            self._solver.settings.eps_rel = eps_rel
            if max_iters is not None:
                self._solver.settings.max_iters = max_iters

    def evaluate(self, t, z):
        z = np.asarray(z, dtype=float)
        if self._solver is None or t != self._t:
            self._build(t)
        self._solver.update_linear(np.concatenate([-z / t, np.ones(self.n)]))
        sol = self._solver.solve()
        if sol.status != SOLVED:
            raise QpStatusError(sol)
        return sol.x[: self.n]


class MaxAffineProx:
    """Prox oracle for max_i (r_i - a_i^T x), optionally over the unit simplex.

    evaluate(t, z) solves the epigraph QP in (x, s) with quadratic block
    (1/t) I on x; with ``simplex=False`` the feasible set is all of R^n
    (used for closed-form cross-checks).
    """

    def __init__(self, a_rows, r, simplex=True, settings: QpSettings | None = None):
        self.a_rows = np.atleast_2d(np.asarray(a_rows, dtype=float))
        self.r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.a_rows.shape[0] != self.r.shape[0]:
            raise ValueError("one offset r_i per affine row is required")
        self.simplex = simplex
        self.n = self.a_rows.shape[1]
        self.settings = settings or QpSettings()
        self._solver = None
        self._t = None

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.simplex:
            if abs(np.sum(x) - 1.0) > FEAS_TOL or np.any(x < -FEAS_TOL):
                return np.inf
        return float(np.max(self.r - self.a_rows @ x))

    def _build(self, t):
        n, m1 = self.n, self.a_rows.shape[0]
        blocks = [sp.hstack([sp.csr_matrix(-self.a_rows), -np.ones((m1, 1))])]
        l_parts = [np.full(m1, -np.inf)]
        u_parts = [-self.r]                        # r_i - a_i^T x <= s
        if self.simplex:
            blocks.append(sp.hstack([sp.csr_matrix(np.ones((1, n))), sp.csr_matrix((1, 1))]))
            l_parts.append(np.ones(1))
            u_parts.append(np.ones(1))
            blocks.append(sp.hstack([sp.identity(n, format="csr"), sp.csr_matrix((n, 1))]))
            l_parts.append(np.zeros(n))
            u_parts.append(np.full(n, np.inf))
        problem = QpProblem(
            P=sp.diags(np.concatenate([np.full(n, 1.0 / t), np.zeros(1)])),
            q=np.concatenate([np.zeros(n), np.ones(1)]),
            A=sp.vstack(blocks, format="csc"),
            l=np.concatenate(l_parts),
            u=np.concatenate(u_parts),
        )
        self._solver = QpSolver(problem, self.settings)
        self._t = t

    def retarget(self, eps_abs, eps_rel, max_iters=None):
        self.settings.eps_abs = eps_abs
        self.settings.eps_rel = eps_rel
        if max_iters is not None:
            self.settings.max_iters = max_iters
        if self._solver is not None:
            self._solver.settings.eps_abs = eps_abs
            self._solver.settings.eps_rel = eps_rel
            if max_iters is not None:
                self._solver.settings.max_iters = max_iters

    def evaluate(self, t, z):
        z = np.asarray(z, dtype=float)
        if self._solver is None or t != self._t:
            self._build(t)
        self._solver.update_linear(np.concatenate([-z / t, np.ones(1)]))
        sol = self._solver.solve()
        if sol.status != SOLVED:
            raise QpStatusError(sol)
        return sol.x[: self.n]


def prox_l1_box_affine(z, t, a, b, lb, ub, settings=None):
    """argmin ||x||_1 + (1/(2t))||x - z||^2 s.t. A x = b, lb <= x <= ub."""
    z = np.asarray(z, dtype=float)
    a = np.asarray(a, dtype=float).reshape(-1, z.size)
    oracle = L1PolytopeProx(a, b, np.broadcast_to(lb, z.shape), np.broadcast_to(ub, z.shape),
                            settings)
    return oracle.evaluate(t, z)


def prox_maxaffine_polytope(z, t, a_rows, r, simplex=True, settings=None):
    """argmin max_i(r_i - a_i^T x) + (1/(2t))||x - z||^2, optionally on the simplex."""
    oracle = MaxAffineProx(a_rows, r, simplex=simplex, settings=settings)
    return oracle.evaluate(t, np.asarray(z, dtype=float))
