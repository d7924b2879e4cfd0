"""Step-size rule and extrapolation schedules."""
import math

import numpy as np

from fracprox.model import SolverConfig
from fracprox.schedules import (
    FactorSchedule,
    FistaRestartState,
    fista_factor,
    kappa_mu_schedule,
    tau_rule,
)


class TestTauRule:
    def test_convex_denominator_gives_one_over_delta(self):
        for theta in (0.0, 1.0, 100.0):
            assert tau_rule(theta, 0.0, 0.5, 4.0) == 0.25

    def test_ratio_term_binds(self):
        # sqrt(4)*2/0.25 = 16 dominates delta = 4
        assert tau_rule(2.0, 4.0, 0.25, 4.0) == 1.0 / 16.0

    def test_zero_theta(self):
        assert tau_rule(0.0, 4.0, 0.25, 4.0) == 0.25

    def test_both_bounds_hold(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            theta = rng.uniform(0, 10)
            beta = rng.uniform(0, 4)
            zeta = rng.uniform(0.05, 1.0 / math.sqrt(beta) if beta > 0 else 2.0) * 0.99
            delta = rng.uniform(0.1, 10)
            tau = tau_rule(theta, beta, zeta, delta)
            assert tau <= 1.0 / delta + 1e-15
            if beta > 0 and theta > 0:
                assert tau <= zeta / (math.sqrt(beta) * theta) + 1e-15


class TestFistaFactor:
    def test_startup_factor_zero(self):
        factor, state = fista_factor(FistaRestartState(n0=50))
        assert factor == 0.0
        assert state.iteration == 1

    def test_recurrence_values(self):
        state = FistaRestartState(n0=1000)
        factors = []
        for _ in range(4):
            factor, state = fista_factor(state)
            factors.append(factor)
        golden = (1.0 + math.sqrt(5.0)) / 2.0
        nu2 = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * golden**2))
        assert abs(factors[2] - (golden - 1.0) / nu2) <= 1e-15
        assert abs(factors[2] - 0.2817535) <= 1e-6

    def test_reset_at_restart_boundary(self):
        state = FistaRestartState(n0=5)
        factors = []
        for _ in range(11):
            factor, state = fista_factor(state)
            factors.append(factor)
        assert factors[5] == 0.0 and factors[10] == 0.0
        assert factors[4] > 0.0

    def test_factor_stays_in_unit_interval(self):
        state = FistaRestartState(n0=50)
        for _ in range(500):
            factor, state = fista_factor(state)
            assert 0.0 <= factor < 1.0


class TestKappaMuSchedule:
    def test_zero_factor(self):
        cfg = SolverConfig(delta=4.0, mu_bar=0.5, kappa_bar=0.5)
        assert kappa_mu_schedule(cfg, 0.25, 0.0) == (0.0, 0.0)

    def test_momentum_stream_stays_within_caps(self):
        # mirrors the benchmark schedule mu_n = mu_bar * tau * factor
        mu_bar, tau = 0.99 * 0.054, 1.0
        cfg = SolverConfig(delta=1.0, mu_bar=mu_bar, kappa_bar=0.0)
        state = FistaRestartState(n0=50)
        for _ in range(200):
            factor, state = fista_factor(state)
            kappa, mu = kappa_mu_schedule(cfg, tau, factor)
            assert kappa == 0.0
            assert 0.0 <= mu <= mu_bar * tau

    def test_clamp_near_one(self):
        cfg = SolverConfig(delta=4.0, mu_bar=0.0, kappa_bar=0.9)
        kappa, mu = kappa_mu_schedule(cfg, 0.25, 1.0 - 1e-9)
        assert abs(kappa - 0.9) <= 1e-8 and kappa <= 0.9
        assert mu == 0.0


class TestFactorSchedule:
    def test_constant_schedule(self):
        sched = FactorSchedule("constant")
        assert [sched.next() for _ in range(3)] == [1.0, 1.0, 1.0]

    def test_fista_schedule_matches_pure_function(self):
        sched = FactorSchedule("fista", n0=7)
        state = FistaRestartState(n0=7)
        for _ in range(30):
            expected, state = fista_factor(state)
            assert sched.next() == expected
