"""Convex QP solver based on ADMM operator splitting.

Solves
    minimize    (1/2) x^T P x + q^T x
    subject to  l <= A x <= u
with P symmetric positive semidefinite and two-sided (possibly infinite)
row bounds; rows with l == u are equality constraints.  The splitting,
equilibration and termination logic follow the standard operator-splitting
QP design: a one-time factorization of the quasi-definite KKT matrix

    [[P + sigma*I, A^T], [A, -diag(rho)^{-1}]]

is reused by every iteration, and is recomputed only if the penalty
changes.  Residuals are reported for the original (unscaled) data.

A ``QpSolver`` instance owns its workspace and retains the last iterate, so
consecutive solves of the same problem with an updated linear term are warm
started.  Instances must not be shared between concurrent callers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import NotPositiveDefiniteError, cholesky

SOLVED = "solved"
MAX_ITERS = "max_iters"
INFEASIBLE = "infeasible-suspect"


class QpStatusError(RuntimeError):
    """Raised when a caller requires status 'solved' and got something else."""

    def __init__(self, solution):
        super().__init__(f"QP solve ended with status '{solution.status}' "
                         f"(primal {solution.primal_residual:.2e}, "
                         f"dual {solution.dual_residual:.2e})")
        self.solution = solution


@dataclass
class QpSettings:
    rho: float = 0.1                # initial base ADMM penalty
    rho_eq_scale: float = 1e3       # extra penalty weight on equality rows
    sigma: float = 1e-6
    alpha: float = 1.6              # over-relaxation
    eps_abs: float = 1e-9
    eps_rel: float = 1e-9
    eps_infeas: float = 1e-7
    max_iters: int = 200_000
    check_interval: int = 25
    scaling_passes: int = 10        # Ruiz equilibration passes
    adaptive_rho: bool = True       # rebalance rho when residuals are skewed
    rho_update_interval: int = 200  # must be a multiple of check_interval
    rho_min: float = 1e-6
    rho_max: float = 1e6


@dataclass
class QpProblem:
    """QP data; validated on construction.

    P may be dense or scipy-sparse and must be symmetric PSD (verified by a
    Cholesky factorization of P + 1e-10*I).  l <= u componentwise; +-inf
    bounds mark one-sided or absent constraints.
    """

    P: object
    q: np.ndarray
    A: object
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        n = self.q.shape[0]
        self.P = sp.csc_matrix(self.P, shape=None) if sp.issparse(self.P) else sp.csc_matrix(np.asarray(self.P, dtype=float))
        self.A = sp.csc_matrix(self.A) if sp.issparse(self.A) else sp.csc_matrix(np.asarray(self.A, dtype=float).reshape(-1, n))
        self.l = np.asarray(self.l, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        m = self.A.shape[0]
        if self.P.shape != (n, n):
            raise ValueError(f"P must be {n}x{n}, got {self.P.shape}")
        if self.A.shape[1] != n or self.l.shape != (m,) or self.u.shape != (m,):
            raise ValueError("inconsistent constraint dimensions")
        if np.any(self.l > self.u):
            raise ValueError("component of l exceeds u")
        _check_psd(self.P)

    @property
    def n(self):
        return self.q.shape[0]

    @property
    def m(self):
        return self.A.shape[0]

    def objective(self, x):
        return 0.5 * float(x @ (self.P @ x)) + float(self.q @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    iterations: int


def _check_psd(p_csc):
    dense_diag = p_csc - sp.diags(p_csc.diagonal(), shape=p_csc.shape)
    if dense_diag.nnz == 0:
        # diagonal fast path, equivalent to the shifted Cholesky below
        if np.any(p_csc.diagonal() + 1e-10 <= 1e-14):
            raise ValueError("P is not positive semidefinite")
        sym_gap = 0.0
    else:
        dense = p_csc.toarray()
        sym_gap = float(np.max(np.abs(dense - dense.T)))
        if sym_gap > 1e-10 * max(1.0, float(np.max(np.abs(dense)))):
            raise ValueError(f"P is not symmetric: max |P - P^T| = {sym_gap:.3e}")
        try:
            cholesky(0.5 * (dense + dense.T) + 1e-10 * np.eye(dense.shape[0]))
        except NotPositiveDefiniteError as exc:
            raise ValueError("P is not positive semidefinite") from exc


def _col_inf_norms(mat):
    if mat.shape[0] == 0 or mat.nnz == 0:
        return np.zeros(mat.shape[1])
    return np.asarray(abs(mat).max(axis=0).todense()).ravel()


def _row_inf_norms(mat):
    if mat.shape[0] == 0 or mat.nnz == 0:
        return np.zeros(mat.shape[0])
    return np.asarray(abs(mat).max(axis=1).todense()).ravel()


class QpSolver:
    """ADMM workspace bound to one QpProblem.

    The constructor equilibrates the data and factors the KKT matrix; solve()
    continues from the retained iterate (zero on first use, warm otherwise).
    """

    def __init__(self, problem: QpProblem, settings: QpSettings | None = None):
        self.problem = problem
        self.settings = settings or QpSettings()
        self._scale_data()
        self._build_rho()
        self._factor()
        n, m = problem.n, problem.m
        self._x = np.zeros(n)
        self._z = np.zeros(m)
        self._y = np.zeros(m)

    # -- setup -------------------------------------------------------------

    def _scale_data(self):
        pr = self.problem
        n, m = pr.n, pr.m
        p = pr.P.copy().astype(float)
        a = pr.A.copy().astype(float)
        q = pr.q.copy()
        l = pr.l.copy()
        u = pr.u.copy()
        d = np.ones(n)
        e = np.ones(m)
        c = 1.0
        for _ in range(self.settings.scaling_passes):
            col = np.maximum(_col_inf_norms(p), _col_inf_norms(a))
            col[col < 1e-12] = 1.0
            dx = 1.0 / np.sqrt(col)
            row = _row_inf_norms(a)
            row[row < 1e-12] = 1.0
            de = 1.0 / np.sqrt(row)
            dxm = sp.diags(dx)
            dem = sp.diags(de)
            p = dxm @ p @ dxm
            a = dem @ a @ dxm
            q = dx * q
            l = de * l
            u = de * u
            d *= dx
            e *= de
            pcol = _col_inf_norms(p)
            cost = max(np.mean(pcol) if n else 0.0, float(np.max(np.abs(q))) if q.size else 0.0)
            gamma = 1.0 / cost if cost > 1e-12 else 1.0
            p = p * gamma
            q = q * gamma
            c *= gamma
        self._P = p.tocsc()
        self._A = a.tocsr()
        self._At = a.T.tocsr()
        self._q = q
        self._l = l
        self._u = u
        self._d = d
        self._e = e
        self._c = c

    def _build_rho(self):
        self._rho_base = self.settings.rho
        self._eq_rows = (np.isfinite(self._l) & np.isfinite(self._u)
                         & (self._l == self._u))
        rho = np.full(self.problem.m, self._rho_base)
        rho[self._eq_rows] *= self.settings.rho_eq_scale
        self._rho = rho

    def _factor(self):
        n, m = self.problem.n, self.problem.m
        if m:
            kkt = sp.bmat(
                [[self._P + self.settings.sigma * sp.identity(n), self._At],
                 [self._A, -sp.diags(1.0 / self._rho)]],
                format="csc",
            )
        else:
            kkt = (self._P + self.settings.sigma * sp.identity(n)).tocsc()
        self._kkt = kkt
        self._lu = spla.splu(kkt)

    # -- public API --------------------------------------------------------

    def update_linear(self, q):
        """Replace the linear cost term; the factorization is reused."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.problem.n,):
            raise ValueError("q has the wrong length")
        self.problem.q = q
        self._q = self._c * self._d * q

    def warm_start(self, x=None, y=None):
        """Seed the iterate with an unscaled primal and/or dual point."""
        if x is not None:
            self._x = np.asarray(x, dtype=float) / self._d
            self._z = np.clip(self._A @ self._x, self._l, self._u)
        if y is not None:
            self._y = self._c * np.asarray(y, dtype=float) / self._e

    def solve(self) -> QpSolution:
        s = self.settings
        n, m = self.problem.n, self.problem.m
        x, z, y = self._x, self._z, self._y
        rho = self._rho
        status = MAX_ITERS
        iters = s.max_iters
        rp = rd = np.inf
        x_mark = x.copy()
        y_mark = y.copy()
        for k in range(1, s.max_iters + 1):
            if m:
                rhs = s.sigma * x - self._q + self._At @ (rho * z - y)
            else:
                rhs = s.sigma * x - self._q
            xt = self._solve_kkt(rhs)
            x = s.alpha * xt + (1.0 - s.alpha) * x
            if m:
                zt = self._A @ xt
                zr = s.alpha * zt + (1.0 - s.alpha) * z
                z = np.clip(zr + y / rho, self._l, self._u)
                y = y + rho * (zr - z)
            if k == 1 or k % s.check_interval == 0 or k == s.max_iters:
                rp, rd, done = self._residuals(x, z, y)
                if done:
                    status = SOLVED
                    iters = k
                    break
                if self._primal_infeasible(y - y_mark) or self._dual_infeasible(x - x_mark):
                    status = INFEASIBLE
                    iters = k
                    break
                x_mark = x.copy()
                y_mark = y.copy()
                if s.adaptive_rho and k % s.rho_update_interval == 0:
                    if self._maybe_update_rho(x, z, y):
                        rho = self._rho
        self._x, self._z, self._y = x, z, y
        return QpSolution(
            x=self._d * x,
            y=self._e * y / self._c,
            status=status,
            primal_residual=rp,
            dual_residual=rd,
            iterations=iters,
        )

    # -- internals ----------------------------------------------------------

    def _maybe_update_rho(self, x, z, y):
        """Rescale the base penalty toward balanced scaled residuals; the KKT
        matrix is refactored only when rho actually changes."""
        if self.problem.m == 0:
            return False
        ax = self._A @ x
        rp = float(np.max(np.abs(ax - z)))
        sp_scale = max(float(np.max(np.abs(ax))), float(np.max(np.abs(z))), 1e-30)
        rd_vec = self._P @ x + self._q + self._At @ y
        rd = float(np.max(np.abs(rd_vec)))
        sd_scale = max(float(np.max(np.abs(self._P @ x))),
                       float(np.max(np.abs(self._At @ y))),
                       float(np.max(np.abs(self._q))), 1e-30)
        ratio = np.sqrt((rp / sp_scale) / max(rd / sd_scale, 1e-30))
        if 0.2 < ratio < 5.0:
            return False
        new_base = float(np.clip(self._rho_base * ratio,
                                 self.settings.rho_min, self.settings.rho_max))
        if new_base == self._rho_base:
            return False
        self._rho_base = new_base
        rho = np.full(self.problem.m, new_base)
        rho[self._eq_rows] *= self.settings.rho_eq_scale
        self._rho = rho
        self._factor()
        return True

    def _solve_kkt(self, rhs_x):
        m = self.problem.m
        rhs = np.concatenate([rhs_x, np.zeros(m)]) if m else rhs_x
        sol = self._lu.solve(rhs)
        # one step of iterative refinement keeps the per-solve error floor
        # well under the tightest termination tolerances in use
        sol += self._lu.solve(rhs - self._kkt @ sol)
        return sol[: self.problem.n] if m else sol

    def _residuals(self, x, z, y):
        s = self.settings
        m = self.problem.m
        if m:
            ax = (self._A @ x) / self._e
            zu = z / self._e
            rp = float(np.max(np.abs(ax - zu))) if m else 0.0
            sp_scale = max(float(np.max(np.abs(ax))), float(np.max(np.abs(zu))))
            aty = (self._At @ y) / self._d
        else:
            rp, sp_scale = 0.0, 0.0
            aty = np.zeros(self.problem.n)
        px = (self._P @ x) / self._d
        qd = self._q / self._d
        rd_vec = (px + qd + aty) / self._c
        rd = float(np.max(np.abs(rd_vec))) if rd_vec.size else 0.0
        sd_scale = max(float(np.max(np.abs(px))), float(np.max(np.abs(aty))),
                       float(np.max(np.abs(qd)))) / self._c if self.problem.n else 0.0
        ok = rp <= s.eps_abs + s.eps_rel * sp_scale and rd <= s.eps_abs + s.eps_rel * sd_scale
        return rp, rd, ok

    def _primal_infeasible(self, dy_scaled):
        if self.problem.m == 0:
            return False
        eps = self.settings.eps_infeas
        v = self._e * dy_scaled
        nv = float(np.max(np.abs(v)))
        if nv <= 1e-14:
            return False
        v = v / nv
        pr = self.problem
        if float(np.max(np.abs(pr.A.T @ v))) > eps:
            return False
        pos = v > eps
        neg = v < -eps
        if np.any(pos & ~np.isfinite(pr.u)) or np.any(neg & ~np.isfinite(pr.l)):
            return False
        support = float(np.sum(pr.u[pos] * v[pos]) + np.sum(pr.l[neg] * v[neg]))
        return support < -eps

    def _dual_infeasible(self, dx_scaled):
        eps = self.settings.eps_infeas
        w = self._d * dx_scaled
        nw = float(np.max(np.abs(w))) if w.size else 0.0
        if nw <= 1e-14:
            return False
        w = w / nw
        pr = self.problem
        if float(np.max(np.abs(pr.P @ w))) > eps:
            return False
        if float(pr.q @ w) > -eps:
            return False
        if pr.m:
            aw = pr.A @ w
            if np.any((aw > eps) & np.isfinite(pr.u)) or np.any((aw < -eps) & np.isfinite(pr.l)):
                return False
        return True


def solve_qp(problem: QpProblem, settings: QpSettings | None = None,
             x0=None, y0=None) -> QpSolution:
    """One-shot solve; builds a fresh workspace (deterministic for fixed input)."""
    solver = QpSolver(problem, settings)
    if x0 is not None or y0 is not None:
        solver.warm_start(x0, y0)
    return solver.solve()


def kkt_residual(problem: QpProblem, x, y):
    """(stationarity, primal, complementarity) residuals in the infinity norm.

    Complementarity pairs each multiplier with the distance of A_i x to the
    bound its sign selects (upper for y_i > 0, lower for y_i < 0); a nonzero
    multiplier on an infinite bound contributes its own magnitude, and
    y_i = 0 contributes 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    stat = float(np.max(np.abs(problem.P @ x + problem.q + problem.A.T @ y))) if problem.n else 0.0
    if problem.m == 0:
        return stat, 0.0, 0.0
    ax = problem.A @ x
    prim = float(np.max(np.abs(ax - np.clip(ax, problem.l, problem.u))))
    comp = 0.0
    for i in range(problem.m):
        if y[i] == 0.0:
            continue
        bound = problem.u[i] if y[i] > 0 else problem.l[i]
        gap = abs(ax[i] - bound) if np.isfinite(bound) else 1.0
        comp = max(comp, abs(y[i]) * gap)
    return stat, prim, comp


def solve_l1_polytope(a, b, lb, ub, settings: QpSettings | None = None):
    """Minimize ||x||_1 over {A x = b, lb <= x <= ub}.

    Uses the split x = p - q with p, q >= 0 and the linear objective
    1^T (p + q), cast as a QpProblem with P = 0.  The split is deliberately
    over-parameterized; at an LP optimum min(p_i, q_i) = 0 holds
    automatically, so callers should not assert complementarity of the raw
    split variables.  Raises QpStatusError unless the LP solves cleanly.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p_rows, n = a.shape
    lb = np.broadcast_to(np.asarray(lb, dtype=float), (n,))
    ub = np.broadcast_to(np.asarray(ub, dtype=float), (n,))
    eye = sp.identity(n, format="csr")
    rows = sp.vstack(
        [sp.hstack([sp.csr_matrix(a), -sp.csr_matrix(a)]),
         sp.hstack([eye, -eye]),
         sp.hstack([eye, sp.csr_matrix((n, n))]),
         sp.hstack([sp.csr_matrix((n, n)), eye])],
        format="csc",
    )
    problem = QpProblem(
        P=sp.csc_matrix((2 * n, 2 * n)),
        q=np.ones(2 * n),
        A=rows,
        l=np.concatenate([b, lb, np.zeros(n), np.zeros(n)]),
        u=np.concatenate([b, ub, np.full(n, np.inf), np.full(n, np.inf)]),
    )
    sol = solve_qp(problem, settings)
    if sol.status != SOLVED:
        raise QpStatusError(sol)
    return sol.x[:n] - sol.x[n:]
