"""Post-hoc verification of solver runs: decrease checks, stationarity
residuals, and empirical convergence-rate estimation."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

DECREASE_SLACK = 1e-10
RATE_FLOOR = 1e-14


class InsufficientDataError(ValueError):
    """Too few usable entries to fit a rate."""


class RateEstimate(NamedTuple):
    rho: float
    r_squared: float


def check_sufficient_decrease(trace, alpha=None, slack=DECREASE_SLACK):
    """First iteration violating F_{n+1} + alpha * step_n^2 <= F_n, or None.

    ``alpha`` is the decrease constant of the merit inequality; pass None for
    runs without declared denominator bounds, which reduces the check to plain
    objective monotonicity (the trace merit column then carries c = 0).
    """
    a = 0.0 if alpha is None else float(alpha)
    merit = np.asarray(trace.merit_F, dtype=float)
    steps = np.asarray(trace.step_norm, dtype=float)
    if merit.size == 0:
        return None
    prev = np.concatenate([[trace.theta[0]], merit[:-1]])
    bad = np.nonzero(merit + a * steps**2 > prev + slack)[0]
    return int(bad[0]) if bad.size else None


def rayleigh_residual(a, b, x):
    """Stationarity residual of the quadratic-ratio problem on the unit sphere.

    Equals || 2((x^T B x) A x - (x^T A x) B x) || / (x^T B x)^2, which is the
    distance from 0 to the subdifferential of the ratio-plus-sphere objective
    at a unit vector x.
    """
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x)
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"x must be a unit vector, got ||x|| = {norm}")
    xbx = float(x @ (b @ x))
    xax = float(x @ (a @ x))
    bracket = 2.0 * (xbx * (a @ x) - xax * (b @ x))
    return float(np.linalg.norm(bracket)) / xbx**2


def estimate_rate(errors) -> RateEstimate:
    """Geometric decay rate fitted on the tail half of an error sequence.

    Entries from the first one at or below 1e-14 onward are dropped (they sit
    in the floating-point noise floor); a least-squares line through
    log(error) over the tail half of what remains gives rho = exp(slope) and
    the fit quality r^2.  Requires at least 10 usable tail entries.
    """
    errors = np.asarray(errors, dtype=float)
    above = np.nonzero(errors <= RATE_FLOOR)[0]
    if above.size:
        errors = errors[: above[0]]
    tail = errors[errors.size // 2:]
    if tail.size < 10:
        raise InsufficientDataError(
            f"need at least 10 tail entries above {RATE_FLOOR}, have {tail.size}")
    n = np.arange(errors.size)[errors.size // 2:]
    logs = np.log(tail)
    slope, intercept = np.polyfit(n, logs, 1)
    fitted = slope * n + intercept
    ss_res = float(np.sum((logs - fitted) ** 2))
    ss_tot = float(np.sum((logs - np.mean(logs)) ** 2))
    if ss_tot < 1e-30:
        r2 = 1.0 if ss_res < 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return RateEstimate(rho=float(np.exp(slope)), r_squared=r2)


def errors_to_reference(trace, reference):
    """Distances ||x_n - reference|| over all visited iterates (x_0 included)."""
    reference = np.asarray(reference, dtype=float)
    return np.array([float(np.linalg.norm(np.asarray(x) - reference))
                     for x in trace.iterates()])
