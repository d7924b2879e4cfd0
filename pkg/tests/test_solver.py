"""Basic proximal subgradient solver on the analytic box-ratio example."""
import math

import numpy as np
import pytest

from fracprox.experiments import X_STAR, ep1_config, ep1_program
from fracprox.diagnostics import check_sufficient_decrease, errors_to_reference, estimate_rate
from fracprox.model import SmoothPart, merit_constants
from fracprox.solver import (
    CONVERGED,
    MAX_ITERS,
    StartPointError,
    TRACE_COLUMNS,
    prox_anchor,
    run,
)


class TestProxAnchor:
    def test_pure_subgradient_push_when_smooth_vanishes(self):
        zero = SmoothPart(value=lambda x: 0.0, gradient=lambda x: np.zeros_like(x),
                          lipschitz_ell=0.0)
        x = np.array([0.3, -0.2])
        g = np.array([1.0, 0.0])
        z, scale = prox_anchor(x, x, 0.0, 0.0, 0.5, 2.0, g, zero)
        np.testing.assert_allclose(z, x + 0.5 * 2.0 * g)
        assert scale == 0.5

    def test_analytic_example_first_step_numbers(self):
        prog = ep1_program()
        x = np.array([1.0])
        z, scale = prox_anchor(x, x, 0.0, 0.0, 0.25, 1.0, np.array([1.0]), prog.smooth)
        np.testing.assert_allclose(z, [1.25 / 1.5])
        assert abs(scale - 1.0 / 6.0) <= 1e-16

    def test_zero_displacement_extrapolation_is_noop(self):
        prog = ep1_program()
        x = np.array([0.4])
        z0, _ = prox_anchor(x, x, 0.0, 0.0, 0.25, 1.0, np.array([1.0]), prog.smooth)
        z1, _ = prox_anchor(x, x, 0.7, 0.1, 0.25, 1.0, np.array([1.0]), prog.smooth)
        np.testing.assert_array_equal(z0, z1)


class TestRun:
    def test_converges_from_one(self):
        result = run(ep1_program(), ep1_config(), np.array([1.0]))
        assert result.status == CONVERGED
        assert abs(result.x[0] - X_STAR) <= 1e-9
        assert len(result.trace) <= 200
        np.testing.assert_allclose(result.trace.xs[0], [5.0 / 6.0])

    def test_origin_is_fixed(self):
        result = run(ep1_program(), ep1_config(), np.array([0.0]))
        assert result.x[0] == 0.0
        assert all(float(x[0]) == 0.0 for x in result.trace.xs)

    def test_negative_start_symmetric_limit(self):
        result = run(ep1_program(), ep1_config(), np.array([-1.0]))
        assert abs(result.x[0] + X_STAR) <= 1e-9

    def test_fixed_point_is_stationary(self):
        result = run(ep1_program(), ep1_config(max_iters=5), np.array([X_STAR]))
        assert result.trace.step_norm[0] <= 1e-15

    def test_iteration_cap(self):
        result = run(ep1_program(), ep1_config(tol=1e-16, max_iters=3), np.array([1.0]))
        assert result.status == MAX_ITERS
        assert len(result.trace) == 3

    def test_infeasible_start_rejected(self):
        with pytest.raises(StartPointError):
            run(ep1_program(), ep1_config(), np.array([1.5]))

    def test_merit_decrease_and_termination_step(self):
        prog = ep1_program()
        cfg = ep1_config()
        result = run(prog, cfg, np.array([0.9]))
        c, alpha = merit_constants(cfg, prog)
        assert check_sufficient_decrease(result.trace, alpha) is None
        x_last_but_one = result.trace.xs[-2] if len(result.trace) > 1 else result.trace.x0
        assert result.trace.step_norm[-1] <= cfg.tol * max(np.linalg.norm(x_last_but_one), 1.0)

    def test_local_rate_matches_map_derivative(self):
        result = run(ep1_program(), ep1_config(), np.array([1.0]))
        errors = errors_to_reference(result.trace, np.array([X_STAR]))
        rate = estimate_rate(errors)
        assert math.log(2.0 / 3.0) - 0.05 <= math.log(rate.rho) <= math.log(2.0 / 3.0) + 0.05

    def test_extrapolation_off_schedules_bitwise_equal(self):
        prog = ep1_program()
        res_f = run(prog, ep1_config(schedule="fista"), np.array([0.7]))
        res_c = run(prog, ep1_config(schedule="constant"), np.array([0.7]))
        assert len(res_f.trace) == len(res_c.trace)
        for a, b in zip(res_f.trace.xs, res_c.trace.xs):
            assert a.tobytes() == b.tobytes()

    def test_momentum_run_still_decreases_merit(self):
        prog = ep1_program()
        cfg = ep1_config(alpha_extrap=0.9)
        assert cfg.mu_bar > 0
        result = run(prog, cfg, np.array([1.0]))
        assert result.status == CONVERGED
        assert abs(result.x[0] - X_STAR) <= 1e-9
        c, alpha = merit_constants(cfg, prog)
        assert check_sufficient_decrease(result.trace, alpha) is None


class TestTraceCsv:
    def test_columns_and_rows(self, tmp_path):
        result = run(ep1_program(), ep1_config(max_iters=7, tol=1e-16), np.array([1.0]))
        path = tmp_path / "trace.csv"
        result.trace.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == ",".join(TRACE_COLUMNS)
        assert len(lines) == 8
        first = dict(zip(TRACE_COLUMNS, lines[1].split(",")))
        assert first["n"] == "0"
        assert abs(float(first["theta"]) - 1.0) <= 1e-15
        assert abs(float(first["residual"]) - float(first["step_norm"]) / 0.25) <= 1e-12
