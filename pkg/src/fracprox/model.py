"""Problem and parameter model: oracles, solver configuration, merit constants.

A ``FractionalProgram`` bundles the three oracles of min f(x)/g(x) over S:

* ``smooth``       -- the differentiable convex part of the numerator with a
                      Lipschitz gradient (modulus ``lipschitz_ell``);
* ``nonsmooth``    -- a prox oracle carrying the remaining numerator term plus
                      the constraint-set indicator (see :mod:`fracprox.prox`);
* ``denominator``  -- value/subgradient access to g, weakly convex with
                      modulus ``weak_convexity_beta`` (0 means convex).

``DenominatorBounds`` records positive constants m <= g(x) <= M valid on the
feasible set; declaring them unlocks extrapolation (mu_bar, kappa_bar > 0).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import linalg
from .prox import BoxProx, L1PolytopeProx, MaxAffineProx, SphereProx
from .qp import QpProblem, QpSettings, solve_qp

DENOMINATOR_GUARD = 1e-12
NUMERATOR_SLACK = -1e-10


class ConfigurationError(ValueError):
    """Solver parameters violate their admissible ranges."""


class AssumptionViolationError(RuntimeError):
    """A runtime check of the model assumptions failed; the problem encoding
    is wrong, not the solver."""


class DenominatorDegeneracyError(AssumptionViolationError):
    """g(x) fell below the positivity guard at a visited point."""


@dataclass(frozen=True)
class SmoothPart:
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz_ell: float = 0.0


def zero_smooth(dim=None):
    """SmoothPart for f^s identically zero (ell = 0)."""
    return SmoothPart(value=lambda x: 0.0,
                      gradient=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                      lipschitz_ell=0.0)


@dataclass(frozen=True)
class MaxOfSmooth:
    """g as a pointwise maximum of finitely many smooth components.

    ``component_values(x)`` returns all p values at once; ``component_gradient(x, i)``
    the gradient of one component.  Component indices are 0-based.
    """

    component_values: Callable[[np.ndarray], np.ndarray]
    component_gradient: Callable[[np.ndarray, int], np.ndarray]
    count: int


@dataclass(frozen=True)
class Denominator:
    value: Callable[[np.ndarray], float]
    subgradient: Callable[[np.ndarray], np.ndarray]
    weak_convexity_beta: float = 0.0
    structure: Optional[MaxOfSmooth] = None


def max_of_smooth_denominator(structure: MaxOfSmooth, beta=0.0) -> Denominator:
    """Denominator whose value/subgradient come from a max structure.

    The subgradient is the gradient of the first maximizing component
    (smallest index on ties) so runs stay deterministic.
    """

    def value(x):
        return float(np.max(structure.component_values(x)))

    def subgradient(x):
        vals = structure.component_values(x)
        return structure.component_gradient(x, int(np.argmax(vals)))

    return Denominator(value=value, subgradient=subgradient,
                       weak_convexity_beta=beta, structure=structure)


@dataclass(frozen=True)
class DenominatorBounds:
    m: float
    M: float

    def __post_init__(self):
        if not (0.0 < self.m <= self.M):
            raise ConfigurationError(f"need 0 < m <= M, got m={self.m}, M={self.M}")


@dataclass(frozen=True)
class FractionalProgram:
    smooth: SmoothPart
    nonsmooth: object           # prox oracle: value(x), evaluate(t, z)
    denominator: Denominator
    bc: Optional[DenominatorBounds] = None


@dataclass(frozen=True)
class SolverConfig:
    delta: float
    zeta: float = 0.5
    mu_bar: float = 0.0
    kappa_bar: float = 0.0
    tol: float = 1e-9
    max_iters: int = 1000
    epsilon_active: float = 1e-8   # enhanced solver only
    n0_restart: int = 50
    schedule: str = "fista"        # "fista" | "constant"


def extrapolation_bounds(ell, beta, delta, zeta, bc: Optional[DenominatorBounds]):
    """Admissible extrapolation ranges (mu_bar_max, kappa_bar_max(mu_bar)).

    Without denominator bounds both extrapolation weights are forced to zero.
    With bounds, mu_bar may range over [0, mu_bar_max) and, given mu_bar,
    kappa_bar over [0, kappa_bar_max(mu_bar)); when ell = 0 the kappa bound
    is vacuous (extrapolating the gradient anchor has no effect) and is
    reported as +inf.
    """
    root = 1.0 - math.sqrt(beta) * zeta
    if root <= 0.0:
        raise ConfigurationError(f"need 1 - sqrt(beta)*zeta > 0, got {root}")
    if bc is None:
        return 0.0, lambda mu_bar: 0.0
    m, big_m = bc.m, bc.M
    mu_max = delta * root * math.sqrt(m * big_m) / (2.0 * big_m)

    def kappa_max(mu_bar):
        if not 0.0 <= mu_bar < mu_max:
            raise ConfigurationError(
                f"mu_bar={mu_bar} outside the admissible range [0, {mu_max})")
        if ell == 0.0:
            return math.inf
        return math.sqrt(m * delta * root / (ell * big_m)
                         - 2.0 * m * mu_bar / (ell * math.sqrt(m * big_m)))

    return mu_max, kappa_max


def validate_config(cfg: SolverConfig, prog: FractionalProgram):
    """All parameter-range violations (empty list means the config is valid)."""
    violations = []
    beta = prog.denominator.weak_convexity_beta
    if cfg.delta <= 0.0:
        violations.append(f"delta must be positive, got {cfg.delta}")
    if cfg.zeta <= 0.0:
        violations.append(f"zeta must be positive, got {cfg.zeta}")
    root = 1.0 - math.sqrt(max(beta, 0.0)) * cfg.zeta
    if beta < 0.0:
        violations.append(f"weak-convexity modulus must be nonnegative, got {beta}")
    elif root <= 0.0:
        violations.append(f"1 - sqrt(beta)*zeta = {root} <= 0")
    if cfg.tol <= 0.0:
        violations.append(f"tol must be positive, got {cfg.tol}")
    if cfg.max_iters < 1:
        violations.append("max_iters must be at least 1")
    if cfg.n0_restart < 1:
        violations.append("n0_restart must be at least 1")
    if cfg.schedule not in ("fista", "constant"):
        violations.append(f"unknown schedule {cfg.schedule!r}")
    if violations:
        return violations
    if cfg.delta > 0 and root > 0:
        mu_max, kappa_max = extrapolation_bounds(
            prog.smooth.lipschitz_ell, beta, cfg.delta, cfg.zeta, prog.bc)
        if prog.bc is None:
            if cfg.mu_bar != 0.0 or cfg.kappa_bar != 0.0:
                violations.append("without denominator bounds, mu_bar and kappa_bar must be 0")
        else:
            if not 0.0 <= cfg.mu_bar < mu_max:
                violations.append(
                    f"mu_bar={cfg.mu_bar} outside [0, {mu_max}) (range is half-open)")
            else:
                kmax = kappa_max(cfg.mu_bar)
                if not 0.0 <= cfg.kappa_bar < kmax:
                    violations.append(
                        f"kappa_bar={cfg.kappa_bar} outside [0, {kmax}) (range is half-open)")
    return violations


def theta(prog: FractionalProgram, x):
    """Objective ratio (f^s(x) + f^n(x)) / g(x) with degeneracy guards."""
    x = np.asarray(x, dtype=float)
    den = float(prog.denominator.value(x))
    if den < DENOMINATOR_GUARD:
        raise DenominatorDegeneracyError(
            f"denominator {den:.3e} below guard {DENOMINATOR_GUARD}")
    num = float(prog.smooth.value(x)) + float(prog.nonsmooth.value(x))
    if not np.isfinite(num):
        raise AssumptionViolationError("point is outside the feasible domain")
    if num < NUMERATOR_SLACK:
        raise AssumptionViolationError(f"numerator {num:.3e} is negative")
    return num / den


def merit_constants(cfg: SolverConfig, prog: FractionalProgram):
    """Constants (c, alpha) of the decrease inequality F_{n+1} + alpha*step^2 <= F_n,
    where F_n = theta(x_n) + c*||x_n - x_{n-1}||^2.

    Without denominator bounds c = 0 and alpha is unavailable at configuration
    time (it involves a supremum over the initial sublevel set); the decrease
    diagnostic then checks plain objective monotonicity.
    """
    if prog.bc is None:
        return 0.0, None
    ell = prog.smooth.lipschitz_ell
    beta = prog.denominator.weak_convexity_beta
    m, big_m = prog.bc.m, prog.bc.M
    root = 1.0 - math.sqrt(beta) * cfg.zeta
    c = ell * cfg.kappa_bar**2 / (2.0 * m) + cfg.mu_bar / (2.0 * math.sqrt(m * big_m))
    alpha = (cfg.delta * root / (2.0 * big_m)
             - cfg.mu_bar / math.sqrt(m * big_m)
             - ell * cfg.kappa_bar**2 / (2.0 * m))
    if alpha <= 0.0:
        raise ConfigurationError(
            f"nonpositive decrease constant alpha={alpha}; config not validated?")
    return c, alpha


def merit(prog: FractionalProgram, c, x, x_prev):
    """Merit value theta(x) + c*||x - x_prev||^2."""
    diff = np.asarray(x, dtype=float) - np.asarray(x_prev, dtype=float)
    return theta(prog, x) + c * float(diff @ diff)


# -- sampled assumption checks (used by tests and generators) ---------------

def spot_check_smooth(sp_part: SmoothPart, dim, rng, samples=20, h=1e-6, tol=1e-4,
                      radius=1.0):
    """Directional finite differences of value() against gradient(), plus a
    sampled Lipschitz bound on the gradient.  Returns the worst FD gap."""
    worst = 0.0
    for _ in range(samples):
        x = rng.uniform(-radius, radius, dim)
        e = rng.standard_normal(dim)
        e /= np.linalg.norm(e)
        fd = (sp_part.value(x + h * e) - sp_part.value(x)) / h
        worst = max(worst, abs(fd - float(sp_part.gradient(x) @ e)))
        y = rng.uniform(-radius, radius, dim)
        lhs = np.linalg.norm(sp_part.gradient(x) - sp_part.gradient(y))
        if lhs > sp_part.lipschitz_ell * np.linalg.norm(x - y) + 1e-9:
            raise AssumptionViolationError(
                f"gradient Lipschitz bound {sp_part.lipschitz_ell} violated: {lhs:.3e}")
    if worst > tol:
        raise AssumptionViolationError(f"finite-difference gap {worst:.3e} exceeds {tol}")
    return worst


def spot_check_denominator(den: Denominator, points):
    """Weak-convexity subgradient inequality on all ordered pairs of points."""
    points = [np.asarray(p, dtype=float) for p in points]
    beta = den.weak_convexity_beta
    for x in points:
        u = den.subgradient(x)
        gx = den.value(x)
        for y in points:
            lhs = float(u @ (y - x))
            rhs = den.value(y) - gx + 0.5 * beta * float((y - x) @ (y - x))
            if lhs > rhs + 1e-9:
                raise AssumptionViolationError(
                    f"weak-convexity inequality violated by {lhs - rhs:.3e}")


# -- program builders --------------------------------------------------------

def build_l1_box_affine_program(a, b, lb, ub, bc=None, qp_settings=None):
    """min ||x||_1 / ||x||_2 over {A x = b, lb <= x <= ub}.

    When ``bc`` is omitted, m is the norm of the least-norm solution of
    A x = b (a valid lower bound for ||x||_2 on the affine set) and M the
    largest norm the box allows.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[1]
    lb = np.broadcast_to(np.asarray(lb, dtype=float), (n,)).copy()
    ub = np.broadcast_to(np.asarray(ub, dtype=float), (n,)).copy()
    if bc is None:
        m = float(np.linalg.norm(linalg.least_norm_solution(a, b)))
        if m <= 0.0:
            raise ConfigurationError("feasible set contains the origin; g = ||.||_2 "
                                     "is not bounded away from zero")
        big_m = float(np.linalg.norm(np.maximum(np.abs(lb), np.abs(ub))))
        bc = DenominatorBounds(m, big_m)
    den = Denominator(
        value=lambda x: float(np.linalg.norm(x)),
        subgradient=lambda x: x / np.linalg.norm(x),
        weak_convexity_beta=0.0,
    )
    prog = FractionalProgram(
        smooth=zero_smooth(),
        nonsmooth=L1PolytopeProx(a, b, lb, ub, settings=qp_settings),
        denominator=den,
        bc=bc,
    )
    return prog, {"m": bc.m, "M": bc.M, "ell": 0.0, "n": n}


def build_quadratic_sphere_program(a, b):
    """min x^T A x / x^T B x over the unit sphere, A and B positive definite."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    evals_a, _ = linalg.sym_eigen(a)
    evals_b, _ = linalg.sym_eigen(b)
    if evals_a[0] <= 0.0 or evals_b[0] <= 0.0:
        raise ConfigurationError("both quadratic forms must be positive definite")
    ell = 2.0 * float(evals_a[-1])
    two_a = 2.0 * a
    two_b = 2.0 * b
    smooth = SmoothPart(
        value=lambda x: float(x @ (a @ x)),
        gradient=lambda x: two_a @ x,
        lipschitz_ell=ell,
    )
    den = Denominator(
        value=lambda x: float(x @ (b @ x)),
        subgradient=lambda x: two_b @ x,
        weak_convexity_beta=0.0,
    )
    bc = DenominatorBounds(float(evals_b[0]), float(evals_b[-1]))
    prog = FractionalProgram(smooth=smooth, nonsmooth=SphereProx(), denominator=den, bc=bc)
    return prog, {"m": bc.m, "M": bc.M, "ell": ell, "n": a.shape[0]}


def build_maxaffine_simplex_program(a_rows, r, quadratics, qp_settings=None):
    """min max_i(r_i - a_i^T x) / max_j sqrt(x^T A_j x) over the unit simplex.

    Requires r_i - a_i^T x >= 0 on the simplex (equivalently r_i >= max of the
    coordinates of a_i) and each A_j positive definite.  m comes from per-
    component QPs minimizing x^T A_j x over the simplex, M from the largest
    top eigenvalue.
    """
    a_rows = np.atleast_2d(np.asarray(a_rows, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    quadratics = [np.asarray(m_, dtype=float) for m_ in quadratics]
    n = a_rows.shape[1]
    short = r - np.max(a_rows, axis=1)
    if np.any(short < -1e-12):
        raise ConfigurationError(
            "numerator can be negative on the simplex: need r_i >= max_j (a_i)_j")
    tops, bottoms = [], []
    eye = np.eye(n)
    simplex_rows = np.vstack([np.ones((1, n)), eye])
    l_rows = np.concatenate([[1.0], np.zeros(n)])
    u_rows = np.concatenate([[1.0], np.full(n, np.inf)])
    for quad in quadratics:
        evals, _ = linalg.sym_eigen(quad)
        if evals[0] <= 0.0:
            raise ConfigurationError("every denominator quadratic must be positive definite")
        tops.append(math.sqrt(float(evals[-1])))
        qp = QpProblem(P=2.0 * quad, q=np.zeros(n), A=simplex_rows, l=l_rows, u=u_rows)
        sol = solve_qp(qp, qp_settings)
        bottoms.append(math.sqrt(max(sol.x @ (quad @ sol.x), 0.0)))
    bc = DenominatorBounds(max(bottoms), max(max(tops), max(bottoms)))

    def component_values(x):
        return np.array([math.sqrt(max(float(x @ (quad @ x)), 0.0)) for quad in quadratics])

    def component_gradient(x, i):
        quad = quadratics[i]
        val = math.sqrt(max(float(x @ (quad @ x)), 0.0))
        return (quad @ x) / val

    structure = MaxOfSmooth(component_values=component_values,
                            component_gradient=component_gradient,
                            count=len(quadratics))
    prog = FractionalProgram(
        smooth=zero_smooth(),
        nonsmooth=MaxAffineProx(a_rows, r, simplex=True, settings=qp_settings),
        denominator=max_of_smooth_denominator(structure),
        bc=bc,
    )
    return prog, {"m": bc.m, "M": bc.M, "ell": 0.0, "n": n, "p": len(quadratics)}


# -- JSON problem documents ---------------------------------------------------

PROBLEM_KINDS = ("l1_box_affine", "quadratic_sphere", "maxaffine_simplex")


def load_program(source):
    """Build a FractionalProgram from a JSON document (path, JSON text, or dict).

    The document is a tagged union on "kind"; dense matrices are nested
    arrays.  See the README for the full schema.  Returns (program, meta).
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            doc = json.loads(text)
        else:
            with open(text, "r", encoding="utf-8") as handle:
                doc = json.load(handle)
    kind = doc.get("kind")
    if kind == "l1_box_affine":
        bc = doc.get("bc")
        bounds = DenominatorBounds(float(bc["m"]), float(bc["M"])) if bc else None
        return build_l1_box_affine_program(
            np.asarray(doc["A"], dtype=float), np.asarray(doc["b"], dtype=float),
            np.asarray(doc["lb"], dtype=float), np.asarray(doc["ub"], dtype=float),
            bc=bounds)
    if kind == "quadratic_sphere":
        return build_quadratic_sphere_program(
            np.asarray(doc["A"], dtype=float), np.asarray(doc["B"], dtype=float))
    if kind == "maxaffine_simplex":
        return build_maxaffine_simplex_program(
            np.asarray(doc["a"], dtype=float), np.asarray(doc["r"], dtype=float),
            [np.asarray(m_, dtype=float) for m_ in doc["quadratics"]])
    raise ConfigurationError(
        f"unknown problem kind {kind!r}; expected one of {PROBLEM_KINDS}")
