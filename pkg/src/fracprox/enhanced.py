"""Enhanced proximal subgradient solver for max-structured denominators.

When g is the pointwise maximum of finitely many smooth weakly convex
components, replacing the single subgradient push with one candidate prox
solve per epsilon-active component and keeping the best-scoring candidate
steers the iteration to strong(er) stationary points: at the limit x the
inclusion holds for the gradient of *every* active component, not just one.

Candidate solves inside one iteration share the QP factorization of the prox
oracle (only the linear term differs between components).
"""
from __future__ import annotations

import time
from dataclasses import dataclass

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
from .solver import (
    CONVERGED,
    MAX_ITERS,
    IterateTrace,
    RunResult,
    SolveState,
    StartPointError,
    _checked_theta,
    _evaluate,
    _evaluate_prox,
    _TAU_FLOOR,
    _WEAK_CONVEXITY_SLACK,
    prox_anchor,
)


@dataclass(frozen=True)
class ActiveSet:
    """Indices (0-based, ascending) of components within epsilon of the max."""

    indices: tuple

    def __post_init__(self):
        if not self.indices:
            raise ValueError("active set may never be empty")

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)


def active_set(den, x, epsilon) -> ActiveSet:
    """Components i with g_i(x) >= g(x) - epsilon (the argmax is always in)."""
    if den.structure is None:
        raise ValueError("denominator has no max-of-smooth structure")
    values = den.structure.component_values(np.asarray(x, dtype=float))
    top = float(np.max(values))
    idx = np.nonzero(values >= top - epsilon)[0]
    return ActiveSet(tuple(int(i) for i in idx))


def candidate(prog, x, x_prev, kappa_n, mu_n, tau_n, theta_n, index):
    """Candidate iterate from the prox subproblem with one component gradient."""
    point, _ = _candidate_laddered(prog, x, x_prev, kappa_n, mu_n, tau_n, theta_n,
                                   index, None, 0.0)
    return point


def _candidate_laddered(prog, x, x_prev, kappa_n, mu_n, tau_n, theta_n, index,
                        rel_step, tol):
    grad = prog.denominator.structure.component_gradient(x, index)
    z, scale = prox_anchor(x, x_prev, kappa_n, mu_n, tau_n, theta_n, grad, prog.smooth)
    if tol <= 0.0:
        return prog.nonsmooth.evaluate(scale, z), True
    return _evaluate_prox(prog.nonsmooth, scale, z, rel_step, tol)


def _selection_coefficient(prog, cfg, tau_n, mu_n):
    beta = prog.denominator.weak_convexity_beta
    root = 1.0 - np.sqrt(beta) * cfg.zeta
    m, big_m = prog.bc.m, prog.bc.M
    return 0.5 * (root / tau_n - big_m * mu_n / (np.sqrt(m * big_m) * tau_n))


def select(candidates, x, theta_n, coefficient, prog):
    """Index (into ``candidates``) and point minimizing
    f(w) - theta_n g(w) + coefficient ||w - x||^2; ties go to the first."""
    scores = []
    for w in candidates:
        num = float(prog.smooth.value(w)) + float(prog.nonsmooth.value(w))
        den = float(prog.denominator.value(w))
        diff = w - x
        scores.append(num - theta_n * den + coefficient * float(diff @ diff))
    best = int(np.argmin(scores))
    assert scores[best] <= min(scores)
    return best, candidates[best]


def step_enhanced(state: SolveState, prog, cfg, schedule, c=0.0,
                  trace: IterateTrace | None = None, started=None):
    """One enhanced iteration: candidate solves over the active set, then selection."""
    n = state.iteration
    x = state.x
    if state.num_value is None:
        state.num_value, state.den_value = _evaluate(prog, x)
    num, den = state.num_value, state.den_value
    theta_n = _checked_theta(prog, num, den, n)
    beta = prog.denominator.weak_convexity_beta
    active = active_set(prog.denominator, x, cfg.epsilon_active)
    tau_n = tau_rule(theta_n, beta, cfg.zeta, cfg.delta)
    if tau_n < _TAU_FLOOR:
        raise AssumptionViolationError(f"iteration {n}: step size {tau_n:.3e} underflow")
    factor = schedule.next()
    kappa_n, mu_n = kappa_mu_schedule(cfg, tau_n, factor)
    rel_step = (None if state.last_step is None
                else state.last_step / max(float(np.linalg.norm(x)), 1.0))
    try:
        pairs = [_candidate_laddered(prog, x, state.x_prev, kappa_n, mu_n, tau_n,
                                     theta_n, i, rel_step, cfg.tol)
                 for i in active]
    except Exception as exc:
        raise AssumptionViolationError(f"iteration {n}: candidate solve failed") from exc
    candidates = [w for w, _ in pairs]
    tight = all(t for _, t in pairs)
    coeff = _selection_coefficient(prog, cfg, tau_n, mu_n)
    pos, x_next = select(candidates, x, theta_n, coeff, prog)
    chosen = active.indices[pos]
    diff = x_next - x
    step_norm = float(np.linalg.norm(diff))
    num_next, den_next = _evaluate(prog, x_next)
    grad = prog.denominator.structure.component_gradient(x, chosen)
    gap = float(grad @ diff) - (den_next - den + 0.5 * beta * step_norm**2)
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
        trace.active_count.append(len(active))
        trace.chosen_index.append(chosen)
        trace.xs.append(x_next)
    state.x_prev = x
    state.x = x_next
    state.num_value = num_next
    state.den_value = den_next
    state.iteration = n + 1
    state.last_step = step_norm
    state.prox_tight = tight
    return state


def run_enhanced(prog: FractionalProgram, cfg: SolverConfig, x0) -> RunResult:
    """Full enhanced loop with the same termination rule as the basic solver."""
    if prog.denominator.structure is None:
        raise ConfigurationError("enhanced solver requires a max-of-smooth denominator")
    if prog.bc is None:
        raise ConfigurationError("enhanced solver requires declared denominator bounds")
    if cfg.epsilon_active <= 0.0:
        raise ConfigurationError("epsilon_active must be positive")
    violations = validate_config(cfg, prog)
    if violations:
        raise ConfigurationError("; ".join(violations))
    x0 = np.asarray(x0, dtype=float)
    if not np.isfinite(prog.nonsmooth.value(x0)):
        raise StartPointError("x0 is outside the feasible domain")
    theta(prog, x0)
    c, _ = merit_constants(cfg, prog)
    schedule = FactorSchedule(cfg.schedule, cfg.n0_restart)
    trace = IterateTrace(enhanced=True)
    trace.x0 = x0.copy()
    state = SolveState(x=x0.copy(), x_prev=x0.copy())
    started = time.perf_counter()
    status = MAX_ITERS
    for _ in range(cfg.max_iters):
        x_before = state.x
        step_enhanced(state, prog, cfg, schedule, c=c, trace=trace, started=started)
        rel = trace.step_norm[-1] / max(float(np.linalg.norm(x_before)), 1.0)
        if rel <= cfg.tol and state.prox_tight:
            status = CONVERGED
            break
    return RunResult(x=state.x.copy(), trace=trace, status=status)


def strong_stationarity_residuals(prog, cfg, x, epsilon=1e-8):
    """Candidate displacement per 0-active component at x.

    For a strong(er) stationary point every candidate solve launched from x
    with a 0-active component gradient returns (numerically) x itself, so the
    displacements are a computable surrogate for the stationarity inclusion.
    Returns a list of (component_index, ||w_i - x||).
    """
    x = np.asarray(x, dtype=float)
    num, den = _evaluate(prog, x)
    theta_x = num / den
    beta = prog.denominator.weak_convexity_beta
    tau = tau_rule(theta_x, beta, cfg.zeta, cfg.delta)
    out = []
    for i in active_set(prog.denominator, x, epsilon):
        w = candidate(prog, x, x, 0.0, 0.0, tau, theta_x, i)
        out.append((i, float(np.linalg.norm(w - x))))
    return out
