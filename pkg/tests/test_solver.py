import numpy as np
import pytest
from support import (
    gradient_descent_oracle,
    objective_value,
    projected_gd_oracle,
    smooth_image,
)

from tvmap.errors import ArgumentError, StepFailureError
from tvmap.fidelity import FidelityKind
from tvmap.metrics import ssim
from tvmap.solver import Backtracking, SolverConfig, solve, solve_gaussian, solve_poisson

TIGHT = SolverConfig(max_iters=5000, rel_tol=1e-12)


class TestSolveGaussian:
    def test_large_mu_pins_clean_input(self):
        y = smooth_image(np.random.default_rng(0), (32, 32))
        x, _ = solve_gaussian(y, 240.0, SolverConfig())
        assert ssim(y, x) >= 0.999

    def test_constant_image_is_fixed_point(self):
        y = np.full((12, 12), 0.7)
        x, report = solve_gaussian(y, 5.0, SolverConfig())
        np.testing.assert_array_equal(x, y)
        assert report.iterations <= 2

    def test_matches_long_run_gd_oracle(self):
        rng = np.random.default_rng(1)
        y = rng.random((16, 16))
        x_oracle = gradient_descent_oracle(y, np.full((16, 16), 10.0), TIGHT.eps, 50_000)
        f_oracle = objective_value(x_oracle, y, np.full((16, 16), 10.0), FidelityKind.GAUSSIAN, TIGHT.eps, 0.0)
        _, report = solve_gaussian(y, 10.0, TIGHT)
        assert abs(report.final_objective - f_oracle) / abs(f_oracle) < 1e-6

    def test_first_order_residual_small(self):
        rng = np.random.default_rng(2)
        y = rng.random((16, 16))
        _, report = solve_gaussian(y, 10.0, TIGHT)
        assert report.residual_norm < 1e-4 * y.size

    def test_plain_descent_trace_monotone(self):
        rng = np.random.default_rng(3)
        y = rng.random((16, 16))
        _, report = solve_gaussian(y, 10.0, SolverConfig(max_iters=300), accelerate=False)
        trace = np.array(report.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12)

    def test_accelerated_final_not_worse_than_start(self):
        rng = np.random.default_rng(4)
        y = rng.random((16, 16))
        _, report = solve_gaussian(y, 10.0, SolverConfig(max_iters=300))
        assert report.final_objective <= report.objective_trace[0]

    def test_more_mu_tracks_data_closer(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            y = rng.random((12, 12))
            mu = float(rng.uniform(1.0, 50.0))
            x1, _ = solve_gaussian(y, mu, TIGHT)
            x2, _ = solve_gaussian(y, 2.0 * mu, TIGHT)
            assert np.linalg.norm(x2 - y) <= np.linalg.norm(x1 - y) + 1e-8

    def test_stationarity_characterises_solution(self):
        # mu (x - y) + grad TV(x) = 0 at the minimiser
        rng = np.random.default_rng(6)
        y = rng.random((12, 12))
        mu = np.full((12, 12), 8.0)
        x, report = solve_gaussian(y, mu, TIGHT)
        from tvmap.tv import tv_value_grad

        residual = mu * (x - y) + tv_value_grad(x, TIGHT.eps)[1]
        assert np.linalg.norm(residual) == pytest.approx(report.residual_norm)
        assert np.linalg.norm(residual) < 1e-4 * y.size

    def test_rejects_bad_arguments(self):
        with pytest.raises(ArgumentError):
            solve_gaussian(np.zeros((4, 4)), np.zeros((4, 4)))
        with pytest.raises(ArgumentError):
            solve_gaussian(np.zeros((4, 4)), np.ones((3, 3)))


class TestSolvePoisson:
    def test_large_mu_recovers_shifted_data(self):
        rng = np.random.default_rng(7)
        y = 0.1 + 0.8 * smooth_image(rng, (16, 16))
        cfg = SolverConfig(max_iters=2000, rel_tol=1e-10)
        x, _ = solve_poisson(y, 240.0, cfg)
        np.testing.assert_allclose(x, np.clip(y - cfg.eta, 0.0, 1.0), atol=1e-2)

    def test_iterates_stay_in_unit_box(self):
        rng = np.random.default_rng(8)
        y = np.abs(rng.standard_normal((16, 16)))
        _, report = solve_poisson(y, 10.0, SolverConfig(max_iters=200), keep_iterates=True)
        assert len(report.iterates) == report.iterations
        for iterate in report.iterates:
            assert iterate.min() >= 0.0 and iterate.max() <= 1.0

    def test_nonmonotone_acceptance_rule_holds(self):
        rng = np.random.default_rng(9)
        y = rng.random((16, 16))
        cfg = SolverConfig(max_iters=300)
        _, report = solve_poisson(y, 15.0, cfg)
        memory = cfg.backtrack.memory
        delta = cfg.backtrack.sufficient_decrease
        trace = report.objective_trace
        for k in range(report.iterations):
            reference = max(trace[max(0, k - memory + 1) : k + 1])
            bound = reference - delta / (2.0 * report.step_sizes[k]) * report.move_sq[k]
            assert trace[k + 1] <= bound + 1e-10

    def test_beats_fixed_step_oracle_with_equal_grad_budget(self):
        rng = np.random.default_rng(10)
        wins = 0
        for _ in range(10):
            y = rng.random((16, 16))
            mu = np.full((16, 16), float(rng.uniform(5.0, 30.0)))
            cfg = SolverConfig(max_iters=200)
            _, report = solve_poisson(y, mu, cfg)
            x_fixed = projected_gd_oracle(y, mu, cfg.eps, cfg.eta, cfg.eps / 8.0, report.grad_evals)
            f_fixed = objective_value(x_fixed, y, mu, FidelityKind.POISSON, cfg.eps, cfg.eta)
            wins += report.final_objective <= f_fixed
        assert wins == 10

    def test_dispatch_bit_identical(self):
        rng = np.random.default_rng(11)
        y = rng.random((12, 12))
        cfg = SolverConfig(max_iters=80)
        for kind, direct in ((FidelityKind.GAUSSIAN, solve_gaussian), (FidelityKind.POISSON, solve_poisson)):
            via_dispatch, _ = solve(y, 10.0, kind, cfg)
            via_direct, _ = direct(y, 10.0, cfg)
            np.testing.assert_array_equal(via_dispatch, via_direct)

    def test_constant_map_equals_scalar(self):
        rng = np.random.default_rng(12)
        for _ in range(4):
            y = rng.random((10, 10))
            cfg = SolverConfig(max_iters=60)
            scalar, _ = solve_poisson(y, 12.5, cfg)
            mapped, _ = solve_poisson(y, np.full((10, 10), 12.5), cfg)
            np.testing.assert_array_equal(scalar, mapped)

    def test_step_failure_carries_iterate(self):
        y = np.random.default_rng(13).random((8, 8))
        cfg = SolverConfig(
            max_iters=50,
            initial_step=1e12,
            backtrack=Backtracking(max_shrinks=0),
        )
        with pytest.raises(StepFailureError) as excinfo:
            solve_poisson(y, 10.0, cfg)
        assert excinfo.value.iterate.shape == (8, 8)

    def test_rejects_negative_observations(self):
        with pytest.raises(ArgumentError):
            solve_poisson(np.full((4, 4), -0.5), 10.0, SolverConfig())
