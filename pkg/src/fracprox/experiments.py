"""Deterministic experiment generators and runners for the benchmark CLI.

All randomness flows through counter-based Philox streams keyed by
(seed, trial index), so trials are reproducible individually and independent
of execution order.  Timing values are kept apart from the deterministic
payload of every record so result files can be compared byte-for-byte after
dropping the timing fields.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import linalg
from .enhanced import run_enhanced, strong_stationarity_residuals
from .diagnostics import check_sufficient_decrease, estimate_rate, errors_to_reference, rayleigh_residual
from .model import (
    Denominator,
    DenominatorBounds,
    FractionalProgram,
    MaxOfSmooth,
    SmoothPart,
    SolverConfig,
    build_l1_box_affine_program,
    build_maxaffine_simplex_program,
    build_quadratic_sphere_program,
    extrapolation_bounds,
    max_of_smooth_denominator,
    merit_constants,
    theta,
    zero_smooth,
)
from .prox import BoxProx
from .qp import QpSettings, QpStatusError, solve_l1_polytope
from .solver import run

SPARSITY_THRESHOLD = 1e-6

X_STAR = math.sqrt(2.0) - 1.0
STATIONARY_POINTS = (-X_STAR, 0.0, X_STAR)
STRONG_STATIONARY_POINTS = (-X_STAR, X_STAR)

DESK_EP2 = dict(p=32, n=256, s=6, f=10.0)
PAPER_EP2 = dict(p=64, n=1024, s=12, f=10.0)


def trial_stream(seed, trial=0, substream=0):
    """Counter-based generator for one (seed, trial) pair; order-independent.

    ``substream`` jumps to a disjoint block of the same key, for draws that
    must not perturb the instance stream (start points, for example).
    """
    key = np.array([np.uint64(seed), np.uint64(trial)], dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    if substream:
        bitgen = bitgen.jumped(substream)
    return np.random.Generator(bitgen)


def sparsity(x, threshold=SPARSITY_THRESHOLD):
    """Number of entries with magnitude above the reporting threshold."""
    return int(np.count_nonzero(np.abs(np.asarray(x)) > threshold))


# ---------------------------------------------------------------------------
# analytic box-ratio example (ep1)
# ---------------------------------------------------------------------------

def ep1_program():
    """min (x^2 + 1) / (|x| + 1) on [-1, 1], with the split-denominator
    structure max(x + 1, 1 - x) available for the enhanced solver."""
    smooth = SmoothPart(
        value=lambda x: float(x[0] ** 2 + 1.0),
        gradient=lambda x: 2.0 * x,
        lipschitz_ell=2.0,
    )
    structure = MaxOfSmooth(
        component_values=lambda x: np.array([x[0] + 1.0, 1.0 - x[0]]),
        component_gradient=lambda x, i: np.array([1.0]) if i == 0 else np.array([-1.0]),
        count=2,
    )

    def subgradient(x):
        # sign(0) = 0 keeps the origin a fixed point of the basic solver
        return np.sign(x)

    den = Denominator(
        value=lambda x: float(np.abs(x[0]) + 1.0),
        subgradient=subgradient,
        weak_convexity_beta=0.0,
        structure=structure,
    )
    prog = FractionalProgram(
        smooth=smooth,
        nonsmooth=BoxProx(np.array([-1.0]), np.array([1.0])),
        denominator=den,
        bc=DenominatorBounds(1.0, 2.0),
    )
    return prog


def ep1_config(tol=1e-12, max_iters=200, alpha_extrap=0.0, delta=4.0, n0=50,
               schedule="fista", epsilon_active=2.0):
    prog = ep1_program()
    mu_max, _ = extrapolation_bounds(2.0, 0.0, delta, 0.5, prog.bc)
    return SolverConfig(
        delta=delta, zeta=0.5, mu_bar=alpha_extrap * mu_max, kappa_bar=0.0,
        tol=tol, max_iters=max_iters, epsilon_active=epsilon_active,
        n0_restart=n0, schedule=schedule)


def run_ep1(x0, algorithm="epsg", **config_kwargs):
    """Solve the analytic example from a scalar start point; returns a record
    with the distance to the nearest known stationary point plus the run."""
    prog = ep1_program()
    cfg = ep1_config(**config_kwargs)
    start = np.array([float(x0)])
    tic = time.process_time()
    if algorithm == "enhanced":
        result = run_enhanced(prog, cfg, start)
    elif algorithm == "epsg":
        result = run(prog, cfg, start)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    cpu = time.process_time() - tic
    x = float(result.x[0])
    dists = [abs(x - p) for p in STATIONARY_POINTS]
    nearest = int(np.argmin(dists))
    c, alpha = merit_constants(cfg, prog)
    record = {
        "x0": float(x0),
        "algorithm": algorithm,
        "x_final": x,
        "theta_final": theta(prog, result.x),
        "nearest_stationary_point": STATIONARY_POINTS[nearest],
        "distance_to_stationary": dists[nearest],
        "iterations": len(result.trace),
        "status": result.status,
        "merit_decrease_violation": check_sufficient_decrease(result.trace, alpha),
        "timing": {"cpu_seconds": cpu},
    }
    return record, result


# ---------------------------------------------------------------------------
# scale-invariant sparse recovery benchmark (ep2)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ep2Instance:
    A: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    x_ground: np.ndarray
    seed: int
    trial: int = 0


@dataclass
class TrialRecord:
    seed: int
    trial: int
    sparsity_init: int
    sparsity_final: int
    err_ground_truth: float
    objective_init: float
    objective_final: float
    iterations: int
    status: str
    cpu_seconds: float
    init_status: str = "solved"

    def payload(self):
        """(deterministic fields, timing fields) for JSON serialization."""
        det = {
            "seed": self.seed,
            "trial": self.trial,
            "sparsity_init": self.sparsity_init,
            "sparsity_final": self.sparsity_final,
            "err_ground_truth": self.err_ground_truth,
            "objective_init": self.objective_init,
            "objective_final": self.objective_final,
            "iterations": self.iterations,
            "status": self.status,
            "init_status": self.init_status,
        }
        return det, {"cpu_seconds": self.cpu_seconds}


def gen_ep2(p, n, s, f, seed, trial=0) -> Ep2Instance:
    """Sensing matrix from random cosine frequencies, an s-sparse ground truth
    normalized to unit max magnitude, exact measurements, and the unit box."""
    if s > n:
        raise ValueError("sparsity level cannot exceed the dimension")
    rng = trial_stream(seed, trial)
    w = rng.uniform(0.0, 1.0, p)
    a = linalg.oversampled_dct(p, n, f, w)
    support = rng.choice(n, size=s, replace=False)
    values = rng.standard_normal(s)
    x_ground = np.zeros(n)
    x_ground[support] = values
    x_ground /= np.max(np.abs(x_ground))
    return Ep2Instance(
        A=a, b=a @ x_ground, lb=-np.ones(n), ub=np.ones(n),
        x_ground=x_ground, seed=int(seed), trial=int(trial))


INIT_FALLBACK_RESIDUAL = 1e-3


def _restore_feasibility(a, b, lb, ub, x, rounds=10000, target=1e-12):
    """Alternate projections between the affine set and the box until both
    hold to near machine precision; returns None when the angle is too bad."""
    x = np.clip(x, lb, ub)
    for _ in range(rounds):
        gap = b - a @ x
        if np.max(np.abs(gap)) <= target:
            return x
        x = np.clip(x + linalg.least_norm_solution(a, gap), lb, ub)
    return None


def run_ep2(instance: Ep2Instance, tol=1e-9, max_iters=5000, alpha_extrap=0.99,
            delta=1.0, n0=50, schedule="fista", init_settings=None,
            prox_settings=None, keep_trace=True):
    """One benchmark trial: solve the plain l1 problem for the start point,
    then minimize ||x||_1 / ||x||_2 over the measurement polytope.

    The initializer LP runs at the stock QP tolerance with a capped iteration
    budget; on dual-degenerate instances where ADMM stalls near the LP
    optimum, the stalled iterate is projected back onto the feasible set
    (alternating projections, exact to ~1e-12) and used as the start point.
    The in-loop prox QPs follow the solver's adaptive tolerance schedule.
    """
    init_settings = init_settings or QpSettings(max_iters=20_000)
    prox_settings = prox_settings or QpSettings(eps_abs=1e-11, eps_rel=0.0, max_iters=100_000)
    tic = time.process_time()
    prog, meta = build_l1_box_affine_program(
        instance.A, instance.b, instance.lb, instance.ub, qp_settings=prox_settings)
    init_status = "solved"
    try:
        x0 = solve_l1_polytope(instance.A, instance.b, instance.lb, instance.ub,
                               settings=init_settings)
    except QpStatusError as exc:
        sol = exc.solution
        n = instance.A.shape[1]
        stalled = sol.x[:n] - sol.x[n:]
        x0 = None
        if np.all(np.isfinite(stalled)) and sol.primal_residual <= INIT_FALLBACK_RESIDUAL:
            x0 = _restore_feasibility(instance.A, instance.b, instance.lb,
                                      instance.ub, stalled)
        if x0 is None:
            cpu = time.process_time() - tic
            record = TrialRecord(
                seed=instance.seed, trial=instance.trial, sparsity_init=-1,
                sparsity_final=-1, err_ground_truth=float("nan"),
                objective_init=float("nan"), objective_final=float("nan"),
                iterations=0, status=f"init_failed:{sol.status}",
                cpu_seconds=cpu, init_status=sol.status)
            return record, None, None
        init_status = "projected_fallback"
    mu_max, _ = extrapolation_bounds(0.0, 0.0, delta, 0.5, prog.bc)
    cfg = SolverConfig(
        delta=delta, zeta=0.5, mu_bar=alpha_extrap * mu_max, kappa_bar=0.0,
        tol=tol, max_iters=max_iters, n0_restart=n0, schedule=schedule)
    objective_init = theta(prog, x0)
    result = run(prog, cfg, x0)
    cpu = time.process_time() - tic
    record = TrialRecord(
        seed=instance.seed,
        trial=instance.trial,
        sparsity_init=sparsity(x0),
        sparsity_final=sparsity(result.x),
        err_ground_truth=float(np.linalg.norm(result.x - instance.x_ground)),
        objective_init=objective_init,
        objective_final=theta(prog, result.x),
        iterations=len(result.trace),
        status=result.status,
        cpu_seconds=cpu,
        init_status=init_status,
    )
    if not keep_trace:
        result.trace.xs = []
    return record, result, x0


# ---------------------------------------------------------------------------
# quadratic-ratio problem on the sphere (rayleigh)
# ---------------------------------------------------------------------------

def gen_rayleigh(n, seed, trial=0):
    """Seeded positive definite pair A = M^T M + I, B = K^T K + I."""
    if n < 2:
        raise ValueError("dimension must be at least 2")
    rng = trial_stream(seed, trial)
    m_mat = rng.standard_normal((n, n))
    k_mat = rng.standard_normal((n, n))
    a = m_mat.T @ m_mat + np.eye(n)
    b = k_mat.T @ k_mat + np.eye(n)
    return a, b


def run_rayleigh(a, b, x0, tol=1e-10, max_iters=60000, delta=None,
                 alpha_extrap=0.0, n0=50, schedule="fista"):
    """Quadratic-over-quadratic minimization on the unit sphere.

    ``delta`` defaults to one ninth of the numerator gradient modulus, which
    puts the effective prox step near its saturation value 1/ell and keeps
    the iteration a plain geometric descent at this problem scale.
    """
    prog, meta = build_quadratic_sphere_program(a, b)
    if delta is None:
        delta = meta["ell"] / 9.0
    zeta = 0.5
    mu_max, kappa_max = extrapolation_bounds(meta["ell"], 0.0, delta, zeta, prog.bc)
    kappa_bar = alpha_extrap * kappa_max(0.0) if alpha_extrap else 0.0
    cfg = SolverConfig(delta=delta, zeta=zeta, mu_bar=0.0, kappa_bar=kappa_bar,
                       tol=tol, max_iters=max_iters, n0_restart=n0, schedule=schedule)
    x0 = np.asarray(x0, dtype=float)
    x0 = x0 / np.linalg.norm(x0)
    tic = time.process_time()
    result = run(prog, cfg, x0)
    cpu = time.process_time() - tic
    residual = rayleigh_residual(a, b, result.x)
    eigenvalues, _ = linalg.gen_eigen(a, b)
    final_theta = theta(prog, result.x)
    match = int(np.argmin(np.abs(eigenvalues - final_theta)))
    errors = errors_to_reference(result.trace, result.x)[:-1]
    try:
        rate = estimate_rate(errors)
        rate_fields = {"rate_rho": rate.rho, "rate_r_squared": rate.r_squared}
    except Exception:
        rate_fields = {"rate_rho": None, "rate_r_squared": None}
    c, alpha = merit_constants(cfg, prog)
    record = {
        "theta_final": final_theta,
        "stationarity_residual": residual,
        "matched_eigenvalue": float(eigenvalues[match]),
        "eigenvalue_gap": float(abs(eigenvalues[match] - final_theta)),
        "iterations": len(result.trace),
        "status": result.status,
        "merit_decrease_violation": check_sufficient_decrease(result.trace, alpha),
        **rate_fields,
        "timing": {"cpu_seconds": cpu},
    }
    return record, result


# ---------------------------------------------------------------------------
# robust ratio-of-risk problem on the simplex (sharpe)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SharpeInstance:
    a_rows: np.ndarray
    r: np.ndarray
    quadratics: tuple
    seed: int
    trial: int = 0


def gen_sharpe(n, m1, m2, seed, trial=0) -> SharpeInstance:
    """Seeded instance with positive numerator pieces on the simplex.

    The offsets r_i = max_j (a_i)_j + 0.1 keep every affine piece at least
    0.1 on the feasible set; the quadratics are M^T M + I, positive definite.
    """
    if min(n, m1, m2) < 1:
        raise ValueError("n, m1, m2 must all be at least 1")
    rng = trial_stream(seed, trial)
    a_rows = rng.standard_normal((m1, n))
    r = np.max(a_rows, axis=1) + 0.1
    quadratics = []
    for _ in range(m2):
        m_mat = rng.standard_normal((n, n))
        quadratics.append(m_mat.T @ m_mat + np.eye(n))
    return SharpeInstance(a_rows=a_rows, r=r, quadratics=tuple(quadratics),
                          seed=int(seed), trial=int(trial))


def run_sharpe(instance: SharpeInstance, tol=1e-9, max_iters=20000,
               alpha_extrap=0.0, delta=1.0, n0=50, schedule="fista",
               algorithm="enhanced", epsilon_active=None, qp_settings=None):
    """Enhanced solve of the max-affine over max-of-norms ratio on the simplex.

    The prox QPs run at a tight absolute tolerance so per-step solve noise
    stays below the 1e-10 slack of the merit-decrease diagnostic.
    """
    qp_settings = qp_settings or QpSettings(eps_abs=1e-11, eps_rel=0.0)
    prog, meta = build_maxaffine_simplex_program(
        instance.a_rows, instance.r, instance.quadratics, qp_settings=qp_settings)
    n = meta["n"]
    x0 = np.full(n, 1.0 / n)
    if epsilon_active is None:
        comps = prog.denominator.structure.component_values(x0)
        spread = float(np.max(comps) - np.min(comps))
        epsilon_active = max(1e-3 * spread, 1e-12)
    mu_max, _ = extrapolation_bounds(0.0, 0.0, delta, 0.5, prog.bc)
    cfg = SolverConfig(
        delta=delta, zeta=0.5, mu_bar=alpha_extrap * mu_max, kappa_bar=0.0,
        tol=tol, max_iters=max_iters, epsilon_active=epsilon_active,
        n0_restart=n0, schedule=schedule)
    tic = time.process_time()
    if algorithm == "enhanced":
        result = run_enhanced(prog, cfg, x0)
    elif algorithm == "epsg":
        result = run(prog, cfg, x0)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    cpu = time.process_time() - tic
    residuals = strong_stationarity_residuals(prog, cfg, result.x)
    c, alpha = merit_constants(cfg, prog)
    record = {
        "theta_final": theta(prog, result.x),
        "iterations": len(result.trace),
        "status": result.status,
        "epsilon_active": epsilon_active,
        "merit_decrease_violation": check_sufficient_decrease(result.trace, alpha),
        "strong_residuals": [{"component": i, "displacement": d} for i, d in residuals],
        "max_strong_residual": max(d for _, d in residuals),
        "timing": {"cpu_seconds": cpu},
    }
    return record, result


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def aggregate(records, fields):
    """Mean and median per field over a list of record dicts (NaNs excluded)."""
    out = {"mean": {}, "median": {}}
    for name in fields:
        values = np.array([float(r[name]) for r in records if r.get(name) is not None],
                          dtype=float)
        values = values[np.isfinite(values)]
        if values.size == 0:
            out["mean"][name] = None
            out["median"][name] = None
        else:
            out["mean"][name] = float(np.mean(values))
            out["median"][name] = float(np.median(values))
    return out
