"""Step-size rule and extrapolation-coefficient schedules.

The step size takes the largest admissible value
tau_n = 1 / max(sqrt(beta) * theta_n / zeta, delta); the extrapolation
weights are kappa_n = kappa_bar * factor and mu_n = mu_bar * tau_n * factor,
where the factor comes either from a constant schedule (factor = 1) or from
the momentum recurrence nu_{n+1} = (1 + sqrt(1 + 4 nu_n^2)) / 2 with
factor = (nu_{n-1} - 1) / nu_n, reset to nu_{n-1} = nu_n = 1 every n0
iterations (restarted-FISTA style).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace


def tau_rule(theta_n, beta, zeta, delta):
    """Maximal admissible step size for the current objective ratio."""
    return 1.0 / max(math.sqrt(beta) * theta_n / zeta if beta > 0.0 else 0.0, delta)


@dataclass(frozen=True)
class FistaRestartState:
    nu_prev: float = 1.0
    nu: float = 1.0
    iteration: int = 0
    n0: int = 50


def fista_factor(state: FistaRestartState):
    """Momentum factor at the current iteration plus the advanced state.

    The reset to nu_{n-1} = nu_n = 1 happens before the factor is computed
    whenever the iteration count is a positive multiple of n0, so the factor
    at a restart boundary is exactly 0.
    """
    nu_prev, nu = state.nu_prev, state.nu
    if state.iteration > 0 and state.iteration % state.n0 == 0:
        nu_prev = nu = 1.0
    factor = (nu_prev - 1.0) / nu
    nu_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * nu * nu))
    return factor, replace(state, nu_prev=nu, nu=nu_next, iteration=state.iteration + 1)


def kappa_mu_schedule(cfg, tau_n, factor):
    """Extrapolation weights (kappa_n, mu_n), clamped into their admissible
    intervals [0, kappa_bar] and [0, mu_bar * tau_n]."""
    kappa_n = min(max(cfg.kappa_bar * factor, 0.0), cfg.kappa_bar)
    mu_cap = cfg.mu_bar * tau_n
    mu_n = min(max(mu_cap * factor, 0.0), mu_cap)
    return kappa_n, mu_n


class FactorSchedule:
    """Stateful factor stream used by one solve. Not shareable across solves."""

    def __init__(self, kind="fista", n0=50):
        if kind not in ("fista", "constant"):
            raise ValueError(f"unknown schedule kind {kind!r}")
        self.kind = kind
        self._state = FistaRestartState(n0=n0)

    def next(self):
        if self.kind == "constant":
            return 1.0
        factor, self._state = fista_factor(self._state)
        return factor
