"""Extrapolated proximal subgradient iteration for fractional programs.

Each iteration evaluates the objective ratio theta_n = f(x_n)/g(x_n), picks a
denominator subgradient g_n, forms the extrapolated anchors
u_n = x_n + kappa_n (x_n - x_{n-1}) and v_n = x_n + mu_n (x_n - x_{n-1}),
and produces x_{n+1} by applying the nonsmooth prox oracle at

    z = (v_n + tau_n theta_n g_n + ell tau_n u_n - tau_n grad f^s(u_n)) / (1 + ell tau_n)

with prox scale tau_n / (1 + ell tau_n).  The run terminates when the
relative step ||x_{n+1} - x_n|| / max(||x_n||, 1) drops below the tolerance.

Model assumptions are asserted while iterating: the declared denominator
bounds, nonnegativity of the ratio, the weak-convexity subgradient
inequality on every consecutive iterate pair, and a floor on tau_n.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .model import (
    AssumptionViolationError,
    ConfigurationError,
    FractionalProgram,
    SolverConfig,
    merit_constants,
    theta,
    validate_config,
)
from .schedules import FactorSchedule, kappa_mu_schedule, tau_rule

CONVERGED = "converged"
MAX_ITERS = "max_iters"

TRACE_COLUMNS = ("n", "theta", "objective", "merit_F", "step_norm", "tau",
                 "kappa", "mu", "residual", "elapsed_ms")
ENHANCED_COLUMNS = TRACE_COLUMNS + ("active_count", "chosen_index")

_BC_SLACK = 1e-9
_WEAK_CONVEXITY_SLACK = 1e-9
_TAU_FLOOR = 1e-12


class StartPointError(ValueError):
    """The initial point is outside the feasible domain."""


@dataclass
class IterateTrace:
    """Per-iteration records of one solve.

    Row n documents the transition x_n -> x_{n+1}: ``theta`` is the ratio at
    x_n (the multiplier used in the subgradient push), ``objective`` the ratio
    at the produced iterate x_{n+1}, ``merit_F`` the merit value
    theta(x_{n+1}) + c ||x_{n+1} - x_n||^2, ``residual`` the fixed-point
    surrogate ||x_{n+1} - x_n|| / tau_n, and ``elapsed_ms`` wall time since
    the start of the run (the one nondeterministic column).
    """

    enhanced: bool = False
    n: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    merit_F: list = field(default_factory=list)
    step_norm: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    kappa: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    elapsed_ms: list = field(default_factory=list)
    active_count: list = field(default_factory=list)
    chosen_index: list = field(default_factory=list)
    xs: list = field(default_factory=list)   # x_{n+1} per row
    x0: np.ndarray | None = None

    def __len__(self):
        return len(self.n)

    @property
    def columns(self):
        return ENHANCED_COLUMNS if self.enhanced else TRACE_COLUMNS

    def iterates(self):
        """All visited points x_0, x_1, ..., as a list of arrays."""
        return [self.x0] + list(self.xs)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(",".join(self.columns) + "\n")
            for i in range(len(self.n)):
                row = [repr(getattr(self, col)[i]) for col in self.columns]
                handle.write(",".join(row) + "\n")


@dataclass
class RunResult:
    x: np.ndarray
    trace: IterateTrace
    status: str


def prox_anchor(x_n, x_prev, kappa_n, mu_n, tau_n, theta_n, g_n, smooth):
    """Anchor point and prox scale of the current subproblem."""
    u_n = x_n + kappa_n * (x_n - x_prev)
    v_n = x_n + mu_n * (x_n - x_prev)
    denom = 1.0 + smooth.lipschitz_ell * tau_n
    z = (v_n + tau_n * theta_n * g_n + smooth.lipschitz_ell * tau_n * u_n
         - tau_n * smooth.gradient(u_n)) / denom
    return z, tau_n / denom


@dataclass
class SolveState:
    x: np.ndarray
    x_prev: np.ndarray
    iteration: int = 0
    num_value: float | None = None   # cached f(x)
    den_value: float | None = None   # cached g(x)
    last_step: float | None = None
    prox_tight: bool = True         # whether the last prox ran at the tight rung


# Escalation ladders for QP-backed prox oracles: (eps_abs, eps_rel, budget)
# rungs, tried in order with the ADMM state carried over between rungs.  Far
# from convergence (relative step > 1000*tol, or no step yet) a loose rung is
# acceptable: the merit decrease per step dwarfs the solve noise there, and
# some subproblem geometries only admit loose accuracy.  Near convergence
# only the tight rung is allowed, which keeps per-step noise below the
# merit-diagnostic slack and makes the termination test trustworthy.
_LADDER_FAR = ((1e-11, 0.0, 8000), (1e-9, 1e-9, 4000), (1e-8, 1e-8, 30000))
_LADDER_MID = ((1e-11, 0.0, 8000), (1e-10, 0.0, 60000))
_LADDER_NEAR = ((1e-11, 0.0, 100000),)
_TIGHT_EPS = 1e-11


def _evaluate_prox(oracle, scale, z, rel_step, tol):
    """Evaluate a prox oracle through the escalation ladder.

    Returns (point, tight) where ``tight`` says the accepted rung was the
    tight one; exact (non-QP) oracles are always tight.
    """
    if not hasattr(oracle, "retarget"):
        return oracle.evaluate(scale, z), True
    if rel_step is None or rel_step > 1e3 * tol:
        ladder = _LADDER_FAR
    elif rel_step > 30.0 * tol:
        ladder = _LADDER_MID
    else:
        ladder = _LADDER_NEAR
    last_exc = None
    for eps_abs, eps_rel, budget in ladder:
        oracle.retarget(eps_abs, eps_rel, budget)
        try:
            return oracle.evaluate(scale, z), eps_abs <= _TIGHT_EPS
        except Exception as exc:   # stalled rung: escalate, state carries over
            last_exc = exc
    raise last_exc


def _evaluate(prog, x):
    num = float(prog.smooth.value(x)) + float(prog.nonsmooth.value(x))
    den = float(prog.denominator.value(x))
    return num, den


def _checked_theta(prog, num, den, n):
    from .model import DENOMINATOR_GUARD, DenominatorDegeneracyError, NUMERATOR_SLACK
    if den < DENOMINATOR_GUARD:
        raise DenominatorDegeneracyError(
            f"iteration {n}: denominator {den:.3e} below guard")
    if not np.isfinite(num):
        raise AssumptionViolationError(f"iteration {n}: iterate left the feasible domain")
    if num < NUMERATOR_SLACK:
        raise AssumptionViolationError(f"iteration {n}: negative numerator {num:.3e}")
    if prog.bc is not None and not (prog.bc.m - _BC_SLACK <= den <= prog.bc.M + _BC_SLACK):
        raise AssumptionViolationError(
            f"iteration {n}: denominator {den} escapes declared bounds "
            f"[{prog.bc.m}, {prog.bc.M}]")
    return num / den


def step(state: SolveState, prog: FractionalProgram, cfg: SolverConfig,
         schedule: FactorSchedule, c=0.0, trace: IterateTrace | None = None,
         started=None):
    """One iteration x_n -> x_{n+1}; mutates and returns the state."""
    n = state.iteration
    x = state.x
    if state.num_value is None:
        state.num_value, state.den_value = _evaluate(prog, x)
    num, den = state.num_value, state.den_value
    theta_n = _checked_theta(prog, num, den, n)
    beta = prog.denominator.weak_convexity_beta
    g_n = prog.denominator.subgradient(x)
    tau_n = tau_rule(theta_n, beta, cfg.zeta, cfg.delta)
    if tau_n < _TAU_FLOOR:
        raise AssumptionViolationError(f"iteration {n}: step size {tau_n:.3e} underflow")
    factor = schedule.next()
    kappa_n, mu_n = kappa_mu_schedule(cfg, tau_n, factor)
    z, scale = prox_anchor(x, state.x_prev, kappa_n, mu_n, tau_n, theta_n, g_n, prog.smooth)
    rel_step = (None if state.last_step is None
                else state.last_step / max(float(np.linalg.norm(x)), 1.0))
    try:
        x_next, tight = _evaluate_prox(prog.nonsmooth, scale, z, rel_step, cfg.tol)
    except Exception as exc:
        raise AssumptionViolationError(f"iteration {n}: prox oracle failed") from exc
    diff = x_next - x
    step_norm = float(np.linalg.norm(diff))
    num_next, den_next = _evaluate(prog, x_next)
    # weak-convexity subgradient inequality on the visited pair
    gap = float(g_n @ diff) - (den_next - den + 0.5 * beta * step_norm**2)
    if gap > _WEAK_CONVEXITY_SLACK:
        raise AssumptionViolationError(
            f"iteration {n}: weak-convexity subgradient inequality violated by {gap:.3e}")
    theta_next = _checked_theta(prog, num_next, den_next, n + 1)
    if trace is not None:
        trace.n.append(n)
        trace.theta.append(theta_n)
        trace.objective.append(theta_next)
        trace.merit_F.append(theta_next + c * step_norm**2)
        trace.step_norm.append(step_norm)
        trace.tau.append(tau_n)
        trace.kappa.append(kappa_n)
        trace.mu.append(mu_n)
        trace.residual.append(step_norm / tau_n)
        trace.elapsed_ms.append(0.0 if started is None
                                else (time.perf_counter() - started) * 1e3)
        trace.xs.append(x_next)
    state.x_prev = x
    state.x = x_next
    state.num_value = num_next
    state.den_value = den_next
    state.iteration = n + 1
    state.last_step = step_norm
    state.prox_tight = tight
    return state


def run(prog: FractionalProgram, cfg: SolverConfig, x0) -> RunResult:
    """Iterate from x0 until the relative step is below cfg.tol or the
    iteration budget runs out."""
    violations = validate_config(cfg, prog)
    if violations:
        raise ConfigurationError("; ".join(violations))
    x0 = np.asarray(x0, dtype=float)
    if not np.isfinite(prog.nonsmooth.value(x0)):
        raise StartPointError("x0 is outside the feasible domain")
    theta(prog, x0)  # raises on degenerate or negative start values
    c, _ = merit_constants(cfg, prog)
    schedule = FactorSchedule(cfg.schedule, cfg.n0_restart)
    trace = IterateTrace()
    trace.x0 = x0.copy()
    state = SolveState(x=x0.copy(), x_prev=x0.copy())
    started = time.perf_counter()
    status = MAX_ITERS
    for _ in range(cfg.max_iters):
        x_before = state.x
        step(state, prog, cfg, schedule, c=c, trace=trace, started=started)
        rel = trace.step_norm[-1] / max(float(np.linalg.norm(x_before)), 1.0)
        # a loose-rung step is not evidence of stationarity
        if rel <= cfg.tol and state.prox_tight:
            status = CONVERGED
            break
    return RunResult(x=state.x.copy(), trace=trace, status=status)
