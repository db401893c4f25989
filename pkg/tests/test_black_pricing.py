import numpy as np
import pytest
from scipy import integrate

from engines.black_pricing import (
    black_forward_delta,
    black_forward_price,
    black_implied_density,
    discount_to_spot,
    fit_smile,
    forward_from_parity,
    implied_density_from_smile,
    implied_vol,
    implied_vol_array,
    smile_call_prices,
)
from models.market_models import DiscountContext
from utils.exceptions import DegenerateDesign, DomainError, NonPositiveSmile, NoSolution

TAU = 58 / 365
CTX = DiscountContext(rate=0.005, tau=TAU)


class TestBlackForwardPrice:
    def test_published_call_prices(self):
        assert black_forward_price(1128.12, 0.33082, 1150.0, TAU) == pytest.approx(49.5759, abs=5e-3)
        assert black_forward_price(1128.12, 0.29777, 1200.0, TAU) == pytest.approx(26.4347, abs=5e-3)

    def test_published_option_forwards(self):
        g1 = black_forward_price(1128.12, 0.33082, 1150.0, TAU) * CTX.growth_factor
        g2 = black_forward_price(1128.12, 0.29777, 1200.0, TAU) * CTX.growth_factor
        assert g1 == pytest.approx(49.615, abs=0.01)
        assert g2 == pytest.approx(26.455, abs=0.01)

    def test_zero_strike_is_forward(self):
        assert black_forward_price(100.0, 0.2, 0.0, 1.0) == pytest.approx(100.0)

    @pytest.mark.parametrize("sigma, tau", [(0.0, 1.0), (0.3, 0.0)])
    def test_degenerate_volatility_gives_intrinsic(self, sigma, tau):
        assert black_forward_price(110.0, sigma, 100.0, tau) == pytest.approx(10.0)
        assert black_forward_price(90.0, sigma, 100.0, tau) == 0.0

    def test_price_bounds(self, rng):
        x = rng.uniform(50, 150, 500)
        k = rng.uniform(0, 200, 500)
        s = rng.uniform(0, 1, 500)
        t = rng.uniform(0, 3, 500)
        price = black_forward_price(x, s, k, t)
        assert np.all(price >= np.maximum(x - k, 0.0))
        assert np.all(price <= x)

    def test_monotone_in_volatility(self):
        prices = black_forward_price(100.0, np.linspace(0.01, 1.0, 50), 105.0, 0.5)
        assert np.all(np.diff(prices) > 0)

    @pytest.mark.parametrize("args", [(-1.0, 0.2, 100.0, 1.0), (100.0, -0.2, 100.0, 1.0),
                                      (100.0, 0.2, -5.0, 1.0), (100.0, 0.2, 100.0, -1.0)])
    def test_domain_errors(self, args):
        with pytest.raises(DomainError):
            black_forward_price(*args)

    def test_delta_matches_finite_difference(self):
        h = 1e-4
        fd = (black_forward_price(100.0 + h, 0.25, 95.0, 0.7) - black_forward_price(100.0 - h, 0.25, 95.0, 0.7)) / (2 * h)
        assert black_forward_delta(100.0, 0.25, 95.0, 0.7) == pytest.approx(fd, rel=1e-7)


class TestDiscounting:
    def test_published_spot_prices(self):
        assert discount_to_spot(49.615, CTX) == pytest.approx(49.575, abs=5e-3)
        assert discount_to_spot(26.455, CTX) == pytest.approx(26.434, abs=5e-3)

    def test_zero_rate_is_identity(self):
        assert discount_to_spot(12.5, DiscountContext(rate=0.0, tau=2.0)) == 12.5

    def test_parity_forward_on_first_sample_date(self):
        assert forward_from_parity(49.5756, 71.4382, 1150.0, CTX) == pytest.approx(1128.12, abs=0.01)

    def test_parity_inverts_black_prices(self):
        forward, k = 1128.12, 1100.0
        call = discount_to_spot(black_forward_price(forward, 0.3, k, TAU), CTX)
        put = call - CTX.discount_factor * (forward - k)
        assert forward_from_parity(call, put, k, CTX) == pytest.approx(forward, rel=1e-12)


class TestImpliedVol:
    @pytest.mark.parametrize("k, sigma", [(1150.0, 0.33082), (1200.0, 0.29777), (1000.0, 0.45)])
    def test_round_trip(self, k, sigma):
        target = black_forward_price(1128.12, sigma, k, TAU)
        assert implied_vol(1128.12, k, TAU, target) == pytest.approx(sigma, abs=1e-9)

    @pytest.mark.parametrize("target", [1128.12, 1200.0, 0.0, -1.0])
    def test_targets_outside_bounds(self, target):
        with pytest.raises(NoSolution):
            implied_vol(1128.12, 1150.0, TAU, target)

    def test_below_intrinsic(self):
        with pytest.raises(NoSolution):
            implied_vol(1128.12, 1000.0, TAU, 120.0)

    def test_array_matches_scalar_and_marks_invalid(self):
        strikes = np.array([1100.0, 1150.0, 1200.0, 1250.0])
        vols = np.array([0.35, 0.33, 0.30, 0.28])
        targets = black_forward_price(1128.12, vols, strikes, TAU)
        targets[-1] = 2000.0
        result = implied_vol_array(1128.12, strikes, TAU, targets)
        np.testing.assert_allclose(result[:3], vols[:3], atol=1e-9)
        assert np.isnan(result[3])


class TestSmile:
    STRIKES = np.array([1100.0, 1150.0, 1200.0, 1250.0, 1300.0])

    def test_exact_quadratic_is_recovered(self):
        vols = 0.25 - 4e-4 * (self.STRIKES - 1200.0) + 1e-6 * (self.STRIKES - 1200.0) ** 2
        fit = fit_smile(self.STRIKES, vols)
        np.testing.assert_allclose(fit.coefficients, [2.17, -0.0028, 1e-6], rtol=1e-7)
        np.testing.assert_allclose(fit.volatility(self.STRIKES), vols, atol=1e-12)
        assert max(abs(r) for r in fit.residuals) < 1e-12
        assert (fit.strike_min, fit.strike_max) == (1100.0, 1300.0)

    def test_flat_extrapolation(self):
        vols = 0.25 - 4e-4 * (self.STRIKES - 1200.0)
        fit = fit_smile(self.STRIKES, vols)
        assert fit.volatility(900.0) == pytest.approx(fit.volatility(1100.0))
        assert fit.volatility(1500.0) == pytest.approx(fit.volatility(1300.0))

    @pytest.mark.parametrize("strikes", [[1100.0, 1200.0], [1150.0, 1150.0, 1150.0]])
    def test_degenerate_design(self, strikes):
        with pytest.raises(DegenerateDesign):
            fit_smile(strikes, [0.3] * len(strikes))

    def test_non_positive_smile(self):
        with pytest.raises(NonPositiveSmile):
            fit_smile([1000.0, 1100.0, 1200.0], [0.2, -0.01, 0.2])

    def test_smile_prices_match_black_for_flat_smile(self):
        fit = fit_smile(self.STRIKES, np.full(5, 0.3))
        grid = np.linspace(1000.0, 1300.0, 7)
        expected = CTX.discount_factor * black_forward_price(1128.12, 0.3, grid, TAU)
        np.testing.assert_allclose(smile_call_prices(fit, 1128.12, CTX, grid), expected, rtol=1e-10)

    def test_flat_smile_density_matches_black_density(self):
        fit = fit_smile(self.STRIKES, np.full(5, 0.3))
        grid = np.linspace(1000.0, 1250.0, 26)
        smile_density = implied_density_from_smile(fit, 1128.12, CTX, grid)
        black_density = black_implied_density(1128.12, 0.3, CTX, grid)
        assert np.max(np.abs(smile_density - black_density)) < 0.02 * black_density.max()

    def test_density_margin(self):
        fit = fit_smile(self.STRIKES, np.full(5, 0.3))
        with pytest.raises(DomainError):
            implied_density_from_smile(fit, 1128.12, CTX, [900.0, 1000.0], margin=50.0)

    def test_negative_density_is_reported(self, warnings_sink):
        # a steep smile turning up sharply produces a non-convex call curve
        fit = fit_smile([1100.0, 1110.0, 1120.0], [0.9, 0.1, 0.9])
        density = implied_density_from_smile(fit, 1128.12, CTX, np.linspace(1095.0, 1125.0, 31))
        if np.any(density < 0):
            assert any("negative" in m for m in warnings_sink.messages)


def test_black_density_normalized_with_forward_mean():
    grid = np.linspace(300.0, 3000.0, 20001)
    density = black_implied_density(1128.12, 0.3, CTX, grid)
    assert integrate.trapezoid(density, grid) == pytest.approx(1.0, abs=1e-6)
    assert integrate.trapezoid(grid * density, grid) == pytest.approx(1128.12, rel=1e-6)
