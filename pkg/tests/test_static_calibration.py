import numpy as np
import pytest
from pydantic import ValidationError

from engines.static_calibration import (
    build_extended_system,
    calibrate_mixture,
    calibration_diagnostics,
    check_static_no_arbitrage,
    cone_partition_from_p0,
    discrete_payoff_matrix,
    grid_bounds,
    max_uniform_sigma,
    mixture_grid,
    price_range_contains,
    price_range_extremes,
    solve_discrete_probabilities,
)
from models.market_models import MarketSnapshot
from models.mixture_models import TWO_PI, MixtureSpec
from presets.parameter_sets import SP500_N2, SP500_N5
from utils.exceptions import (
    DivisionDegenerate,
    DomainError,
    InfeasibleAtFloor,
    InfeasiblePrices,
    OutOfRange,
)

from tests.conftest import P0_N2

N5_P0 = np.array([0.26, 0.23, 0.08, 0.15, 0.15, 0.13, 0.002])
N5_HALF_SIGMA_P0 = np.array([0.34363, 0.03560, 0.15594, 0.16167, 0.14830, 0.13005, 0.02481])


class TestStaticArbitrage:
    def test_published_snapshots_are_arbitrage_free(self, snap_n2, snap_n5):
        for snap in (snap_n2, snap_n5):
            report = check_static_no_arbitrage(snap)
            assert report.passed
            assert report.failures == []

    def test_condition_count(self, snap_n2, snap_n5):
        assert len(check_static_no_arbitrage(snap_n2).conditions) == 5
        assert len(check_static_no_arbitrage(snap_n5).conditions) == 14

    def test_increasing_call_prices_fail_vertical_spread(self, snap_n2, warnings_sink):
        snap = snap_n2.model_copy(update={"option_forwards": [26.455, 49.615]})
        report = check_static_no_arbitrage(snap)
        assert not report.passed
        assert any(c.kind == "vertical_lower" and c.index == 2 for c in report.failures)
        assert any("vertical_lower" in m for m in warnings_sink.messages)

    def test_non_convex_prices_fail_butterfly(self):
        snap = MarketSnapshot(tau=0.2, forward=100.0, strikes=[90.0, 100.0, 110.0],
                              option_forwards=[12.0, 2.0, 1.0])
        kinds = {c.kind for c in check_static_no_arbitrage(snap).failures}
        assert "butterfly" in kinds


class TestGridBounds:
    def test_two_option_bounds(self, snap_n2):
        bounds = grid_bounds(snap_n2)
        assert bounds.x1_max == pytest.approx(1016.8126, abs=1e-3)
        assert bounds.x_top_min == pytest.approx(1257.1136, abs=1e-3)

    def test_five_option_bounds(self, snap_n5):
        bounds = grid_bounds(snap_n5)
        assert bounds.x1_max == pytest.approx(968.8597, abs=1e-3)
        assert bounds.x_top_min == pytest.approx(1321.8000, abs=1e-3)

    def test_needs_two_strikes(self):
        snap = MarketSnapshot(tau=0.2, forward=100.0, strikes=[100.0], option_forwards=[5.0])
        with pytest.raises(DomainError):
            grid_bounds(snap)

    def test_equal_top_prices_are_unbounded(self, snap_n2):
        snap = snap_n2.model_copy(update={"option_forwards": [30.0, 30.0]})
        with pytest.raises(DivisionDegenerate):
            grid_bounds(snap)


class TestDiscreteModel:
    def test_probabilities_reprice_the_snapshot(self, snap_n2):
        p = solve_discrete_probabilities(snap_n2, 950.0, 1300.0)
        x = mixture_grid(snap_n2.strikes, 950.0, 1300.0)
        np.testing.assert_allclose(discrete_payoff_matrix(x, snap_n2.strikes) @ p,
                                   snap_n2.calibration_target(), rtol=1e-10)
        assert np.all(p >= 0)

    def test_five_option_probabilities(self, snap_n5):
        x = mixture_grid(snap_n5.strikes, 950.0, 1400.0)
        p = solve_discrete_probabilities(snap_n5, 950.0, 1400.0)
        np.testing.assert_allclose(discrete_payoff_matrix(x, snap_n5.strikes) @ p,
                                   snap_n5.calibration_target(), rtol=1e-10)

    @pytest.mark.parametrize("x1, x_top", [(1100.0, 1300.0), (950.0, 1250.0)])
    def test_grid_beyond_bounds_is_infeasible(self, snap_n2, x1, x_top):
        with pytest.raises(InfeasiblePrices):
            solve_discrete_probabilities(snap_n2, x1, x_top)

    def test_grid_must_bracket_strikes(self, snap_n2):
        with pytest.raises(DomainError):
            solve_discrete_probabilities(snap_n2, 1160.0, 1300.0)


class TestCalibration:
    def test_two_option_weights(self, spec_n2):
        np.testing.assert_allclose(spec_n2.p0, P0_N2, atol=1e-4)
        assert sum(spec_n2.p0) == pytest.approx(1.0, abs=1e-12)

    def test_weights_reprice_the_snapshot(self, spec_n2, snap_n2):
        a = build_extended_system(spec_n2.grid, spec_n2.sigma, spec_n2.strikes, spec_n2.maturity)
        np.testing.assert_allclose(a @ np.asarray(spec_n2.p0), snap_n2.calibration_target(), rtol=1e-10)

    def test_uniform_one_percent_weights(self, snap_n2):
        spec = calibrate_mixture(snap_n2, SP500_N2.grid, [0.01] * 4)
        np.testing.assert_allclose(spec.p0, [0.35336, 0.17955, 0.21273, 0.25437], atol=1e-4)

    def test_cone_partition(self, spec_n2):
        np.testing.assert_allclose(spec_n2.cone_widths, [1.78334, 1.03560, 3.00440, 0.45986], atol=1e-3)
        assert spec_n2.cone_angles[0] == 0.0
        np.testing.assert_allclose(np.diff(spec_n2.cone_angles), spec_n2.cone_widths[:-1])
        assert sum(spec_n2.cone_widths) == pytest.approx(TWO_PI)

    def test_five_option_has_no_partition(self, snap_n5):
        sigma = max_uniform_sigma(snap_n5, SP500_N5.grid) / 2.0
        spec = calibrate_mixture(snap_n5, SP500_N5.grid, [sigma] * 7)
        assert not spec.has_partition
        np.testing.assert_allclose(spec.p0, N5_HALF_SIGMA_P0, atol=5e-4)

    def test_five_option_weights(self, snap_n5):
        spec = calibrate_mixture(snap_n5, SP500_N5.grid, SP500_N5.sigma)
        np.testing.assert_allclose(spec.p0, N5_P0, atol=5e-3)
        assert min(spec.p0) > 0
        assert sum(spec.p0) == pytest.approx(1.0, abs=1e-10)

    def test_just_above_sigma_star_is_out_of_range(self, snap_n5):
        sigma = max_uniform_sigma(snap_n5, SP500_N5.grid) + 1e-3
        with pytest.raises(OutOfRange) as err:
            calibrate_mixture(snap_n5, SP500_N5.grid, [sigma] * 7)
        assert err.value.components
        assert all(v < 0 for v in err.value.components.values())

    def test_interior_grid_must_match_strikes(self, snap_n2):
        with pytest.raises(DomainError):
            calibrate_mixture(snap_n2, [950.0, 1140.0, 1200.0, 1300.0], SP500_N2.sigma)

    def test_spec_rejects_mismatched_interior_grid(self):
        with pytest.raises(ValidationError):
            MixtureSpec(strikes=[1150.0, 1200.0], grid=[950.0, 1140.0, 1200.0, 1300.0],
                        sigma=[0.1] * 4, p0=[0.25] * 4)

    def test_wrong_grid_length(self, snap_n2):
        with pytest.raises(DomainError):
            calibrate_mixture(snap_n2, [950.0, 1150.0, 1200.0], [0.1] * 3)

    def test_generic_solver_agreement(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 9))
            strikes = 1000.0 + np.cumsum(rng.uniform(40.0, 80.0, n))
            x = mixture_grid(strikes, strikes[0] - rng.uniform(50.0, 200.0), strikes[-1] + rng.uniform(50.0, 200.0))
            sigma = rng.uniform(0.005, 0.05, n + 2)
            p_true = 0.9 * rng.dirichlet(np.ones(n + 2)) + 0.1 / (n + 2)
            a = build_extended_system(x, sigma, strikes, 1.0)
            b = a @ p_true
            snap = MarketSnapshot(tau=0.2, forward=b[1], strikes=strikes.tolist(), option_forwards=b[2:].tolist())

            spec = calibrate_mixture(snap, x, sigma, with_partition=False)
            np.testing.assert_allclose(spec.p0, np.linalg.solve(a, b), atol=1e-6)


class TestCalibrationChecks:
    def test_two_option_sigma_star(self, snap_n2):
        assert max_uniform_sigma(snap_n2, SP500_N2.grid) == pytest.approx(0.054206, abs=1e-5)

    def test_five_option_sigma_star(self, snap_n5):
        assert max_uniform_sigma(snap_n5, SP500_N5.grid) == pytest.approx(0.0276848, abs=1e-5)

    def test_sigma_star_is_feasible(self, snap_n2):
        sigma = max_uniform_sigma(snap_n2, SP500_N2.grid)
        spec = calibrate_mixture(snap_n2, SP500_N2.grid, [sigma] * 4)
        assert min(spec.p0) >= -1e-10

    def test_grid_outside_bounds_is_infeasible_at_floor(self, snap_n2):
        with pytest.raises(InfeasibleAtFloor):
            max_uniform_sigma(snap_n2, [1100.0, 1150.0, 1200.0, 1300.0])

    def test_price_range_membership(self, spec_n2, snap_n2):
        a = build_extended_system(spec_n2.grid, spec_n2.sigma, spec_n2.strikes, spec_n2.maturity)
        price_range = price_range_extremes(a)
        assert price_range.extreme_array().shape == (4, 3)
        inside, weights = price_range_contains(price_range, snap_n2.price_vector())
        assert inside
        np.testing.assert_allclose(weights, spec_n2.p0, atol=1e-10)

        outside, _ = price_range_contains(price_range, [2000.0, 49.615, 26.455])
        assert not outside

    def test_extremes_are_component_prices(self, spec_n2):
        a = build_extended_system(spec_n2.grid, spec_n2.sigma, spec_n2.strikes, spec_n2.maturity)
        extremes = price_range_extremes(a).extreme_array()
        np.testing.assert_allclose(extremes[:, 0], spec_n2.grid)

    def test_diagnostics(self, snap_n2):
        diag = calibration_diagnostics(snap_n2, SP500_N2.grid, SP500_N2.sigma)
        assert diag.bounds.x1_max == pytest.approx(1016.8126, abs=1e-3)
        assert diag.sigma_star == pytest.approx(0.054206, abs=1e-5)
        assert diag.repricing_residual < 1e-10
        assert diag.arbitrage.passed
        np.testing.assert_allclose(diag.comparison_weights, [0.35336, 0.17955, 0.21273, 0.25437], atol=1e-4)
        assert diag.notes == []

    def test_diagnostics_note_out_of_range_volatilities(self, snap_n5):
        sigma = max_uniform_sigma(snap_n5, SP500_N5.grid) + 1e-3
        diag = calibration_diagnostics(snap_n5, SP500_N5.grid, [sigma] * 7)
        assert any("outside the model range" in note for note in diag.notes)

    def test_five_option_diagnostics(self, snap_n5):
        diag = calibration_diagnostics(snap_n5, SP500_N5.grid, SP500_N5.sigma)
        assert not any("outside the model range" in note for note in diag.notes)
        assert diag.repricing_residual < 1e-8


class TestConePartition:
    def test_widths_proportional_to_weights(self):
        angles, widths = cone_partition_from_p0([0.25, 0.25, 0.25, 0.25])
        np.testing.assert_allclose(widths, [np.pi / 2] * 4)
        np.testing.assert_allclose(angles, [0.0, np.pi / 2, np.pi, 1.5 * np.pi])

    def test_only_four_components(self):
        with pytest.raises(DomainError):
            cone_partition_from_p0([0.2] * 5)

    def test_needs_probability_vector(self):
        with pytest.raises(DomainError):
            cone_partition_from_p0([0.5, 0.5, 0.5, -0.5])
