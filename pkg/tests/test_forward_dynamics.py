import numpy as np
import pytest
from scipy import integrate

from engines.black_pricing import black_forward_price
from engines.forward_dynamics import (
    ForwardDensityModel,
    MonteCarloWeights,
    clamp_time,
    cone_index,
    cone_probability,
    cone_probability_gradient,
    density_grid,
    density_volatility,
    forward_cdf,
    forward_density,
    initial_density,
    jacobian_det_scan,
    locate_singular_point,
    mixture_weights,
    price_jacobian,
    price_map,
    spot_factors,
)
from engines.static_calibration import calibrate_mixture, max_uniform_sigma
from models.dynamics_models import DriverState
from models.mixture_models import Cone
from presets.parameter_sets import SP500_N5
from utils.exceptions import DomainError
from utils.numeric_utils import relative_error

STEP = 1e-3


def five_point(fcn, x0, step=STEP):
    """Five-point central-difference Jacobian of fcn at x0, shape (p, m)."""
    x0 = np.asarray(x0, dtype=float)
    columns = []
    for i in range(x0.size):
        e = np.zeros_like(x0)
        e[i] = step
        columns.append(
            (np.asarray(fcn(x0 - 2 * e)) - 8 * np.asarray(fcn(x0 - e))
             + 8 * np.asarray(fcn(x0 + e)) - np.asarray(fcn(x0 + 2 * e))) / (12 * step)
        )
    return np.column_stack(columns)


def random_states(rng, count):
    radius = 2.0 * np.sqrt(rng.uniform(size=count))
    angle = rng.uniform(0.0, 2 * np.pi, count)
    w = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    b = rng.uniform(-2.0, 2.0, count)
    t = rng.uniform(0.0, 0.75, count)
    return [DriverState(w=tuple(wi), b=float(bi), t=float(ti)) for wi, bi, ti in zip(w, b, t)]


class TestWeights:
    def test_origin_weights_equal_initial_weights(self, spec_n2):
        weights = mixture_weights(spec_n2, DriverState.origin()).weights
        np.testing.assert_allclose(weights, spec_n2.p0, atol=1e-10)

    def test_weights_form_probability_vector(self, spec_n2, rng):
        model = ForwardDensityModel(spec_n2)
        for state in random_states(rng, 200):
            p = model.weights(state.w, state.t)[0]
            assert np.all(p >= 0)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_closed_form_matches_quadrature(self, spec_n2, rng):
        for state in random_states(rng, 50):
            closed = mixture_weights(spec_n2, state).weights
            quadrature = mixture_weights(spec_n2, state, method="quadrature").weights
            np.testing.assert_allclose(closed, quadrature, atol=1e-10)

    def test_gradient_matches_finite_differences(self, spec_n2, rng):
        model = ForwardDensityModel(spec_n2)
        for state in random_states(rng, 100):
            analytic = model.weight_gradients(state.w, state.t)[0]
            fd = five_point(lambda w: model.weights(w, state.t)[0], state.w)
            assert np.max(relative_error(analytic, fd, floor=1e-4)) < 1e-6

    def test_single_cone_gradient_matches_finite_differences(self):
        cone = Cone(phi=0.4, theta=2.5)
        w = np.array([0.3, -0.7])
        analytic = cone_probability_gradient(w, 0.2, 1.0, cone)
        fd = five_point(lambda v: [cone_probability(v, 0.2, 1.0, cone)], w)[0]
        np.testing.assert_allclose(analytic, fd, atol=1e-7)

    def test_weights_concentrate_near_maturity(self, spec_n2):
        model = ForwardDensityModel(spec_n2)
        w = np.array([[1.5, 0.4], [-0.797, 0.897], [-0.46, -1.11], [1.17, -0.27]])
        p = model.weights(w, 1.0 - 1e-4)
        indicator = np.eye(4)[cone_index(spec_n2, w)]
        np.testing.assert_allclose(p, indicator, atol=1e-6)

    def test_unknown_method(self, spec_n2):
        with pytest.raises(DomainError):
            mixture_weights(spec_n2, DriverState.origin(), method="exact")

    def test_monte_carlo_weights(self, spec_n2):
        mc = MonteCarloWeights(lambda pts: cone_index(spec_n2, pts), 4, n_samples=200_000, seed=7)
        p, se = mc.weights([0.2, -0.1], 0.3, 1.0)
        exact = ForwardDensityModel(spec_n2).weights([0.2, -0.1], 0.3)[0]
        assert np.all(np.abs(p - exact) < 5 * se)

    def test_single_component(self, single_component_spec, rng):
        model = ForwardDensityModel(single_component_spec)
        for state in random_states(rng, 20):
            np.testing.assert_allclose(model.weights(state.w, state.t)[0], [0, 0, 1, 0], atol=1e-12)


class TestPriceMap:
    def test_origin_reprices_the_snapshot(self, spec_n2, snap_n2):
        np.testing.assert_allclose(price_map(spec_n2, DriverState.origin()), snap_n2.price_vector(), rtol=1e-10)

    def test_spot_factors(self, spec_n2):
        state = DriverState(w=(0.0, 0.0), b=0.5, t=0.25)
        sigma = np.asarray(spec_n2.sigma)
        expected = np.asarray(spec_n2.grid) * np.exp(-0.5 * sigma ** 2 * 0.25 + 0.5 * sigma)
        factors = spot_factors(spec_n2, state)
        assert factors.shape == (4,)
        np.testing.assert_allclose(factors, expected)

    def test_single_component_prices(self, single_component_spec):
        state = DriverState(w=(0.4, -0.8), b=0.3, t=0.5)
        xt = 1200.0 * np.exp(-0.5 * 0.06 ** 2 * 0.5 + 0.06 * 0.3)
        expected = [xt, black_forward_price(xt, 0.06, 1150.0, 0.5), black_forward_price(xt, 0.06, 1200.0, 0.5)]
        np.testing.assert_allclose(price_map(single_component_spec, state), expected, rtol=1e-12)

    def test_single_component_jacobian_is_singular(self, single_component_spec):
        jac = price_jacobian(single_component_spec, DriverState(w=(0.4, -0.8), b=0.3, t=0.5))
        np.testing.assert_allclose(jac.matrix[:, :2], 0.0, atol=1e-12)
        assert jac.determinant == pytest.approx(0.0, abs=1e-9)

    def test_jacobian_matches_finite_differences(self, spec_n2, rng):
        for state in random_states(rng, 100):
            analytic = price_jacobian(spec_n2, state).matrix
            fd = five_point(lambda v: price_map(spec_n2, DriverState.from_vector(v, state.t)), state.vector)
            assert np.max(relative_error(analytic, fd, floor=1e-2)) < 1e-6

    def test_jacobian_determinant_and_condition(self, spec_n2):
        jac = price_jacobian(spec_n2, DriverState.origin())
        assert jac.determinant == pytest.approx(np.linalg.det(jac.matrix))
        assert jac.determinant != 0.0
        assert jac.condition >= 1.0

    def test_time_must_precede_maturity(self, spec_n2):
        with pytest.raises(DomainError):
            price_map(spec_n2, DriverState(w=(0.0, 0.0), b=0.0, t=1.0))
        with pytest.raises(DomainError):
            price_map(spec_n2, DriverState(w=(0.0, 0.0), b=0.0, t=-0.1))

    def test_clamp_time(self, warnings_sink):
        assert clamp_time(0.5, 1.0) == 0.5
        assert clamp_time(1.0, 1.0) == pytest.approx(1.0 - 1e-6)
        assert any("clamped" in m for m in warnings_sink.messages)

    def test_dynamics_need_two_option_partition(self, snap_n5):
        sigma = max_uniform_sigma(snap_n5, SP500_N5.grid) / 2.0
        spec = calibrate_mixture(snap_n5, SP500_N5.grid, [sigma] * 7)
        with pytest.raises(DomainError):
            ForwardDensityModel(spec)


class TestDensity:
    GRID = np.linspace(300.0, 3000.0, 27001)

    @pytest.mark.parametrize("state", [DriverState.origin(), DriverState(w=(0.7, -1.1), b=-0.4, t=0.6)])
    def test_density_integrates_to_one_with_model_prices(self, spec_n2, state):
        f = density_grid(spec_n2, state, self.GRID)
        prices = price_map(spec_n2, state)
        assert integrate.trapezoid(f, self.GRID) == pytest.approx(1.0, abs=1e-8)
        assert integrate.trapezoid(self.GRID * f, self.GRID) == pytest.approx(prices[0], rel=1e-8)
        call = integrate.trapezoid(np.maximum(self.GRID - 1150.0, 0.0) * f, self.GRID)
        assert call == pytest.approx(prices[1], rel=1e-5)

    def test_scalar_density(self, spec_n2):
        state = DriverState(w=(0.1, 0.2), b=0.0, t=0.3)
        assert forward_density(spec_n2, state, 1100.0) == pytest.approx(density_grid(spec_n2, state, [1100.0])[0])

    def test_density_domain(self, spec_n2):
        with pytest.raises(DomainError):
            forward_density(spec_n2, DriverState.origin(), [0.0, 100.0])

    def test_initial_density(self, spec_n2):
        grid = np.linspace(900.0, 1400.0, 51)
        np.testing.assert_allclose(initial_density(spec_n2, grid), density_grid(spec_n2, DriverState.origin(), grid),
                                   rtol=1e-9)

    @pytest.mark.parametrize("x", [1000.0, 1128.0, 1250.0])
    def test_cdf_quadrature_matches_closed_form(self, spec_n2, x):
        state = DriverState(w=(-0.5, 0.9), b=0.6, t=0.4)
        assert forward_cdf(spec_n2, state, x) == pytest.approx(forward_cdf(spec_n2, state, x, closed_form=True), abs=1e-8)

    def test_density_volatility_is_log_density_gradient(self, spec_n2, rng):
        x = np.array([1000.0, 1150.0, 1300.0])
        for state in random_states(rng, 20):
            vol = density_volatility(spec_n2, state, x)
            fd = five_point(lambda v: np.log(density_grid(spec_n2, DriverState.from_vector(v, state.t), x)),
                            state.vector)
            assert np.max(relative_error(vol, fd, floor=1e-3)) < 1e-6

    def test_scalar_density_volatility(self, spec_n2):
        state = DriverState(w=(0.3, 0.3), b=0.1, t=0.2)
        np.testing.assert_allclose(density_volatility(spec_n2, state, 1150.0),
                                   density_volatility(spec_n2, state, [1150.0])[0])


class TestDeterminantScan:
    def test_scan_matches_pointwise_determinants(self, spec_n2):
        w = np.linspace(-3.0, 3.0, 7)
        scan = jacobian_det_scan(spec_n2, 0.5, w, w)
        assert scan.det.shape == (7, 7)
        state = DriverState(w=(w[2], w[5]), b=0.0, t=0.5)
        assert scan.det[5, 2] == pytest.approx(price_jacobian(spec_n2, state).determinant, rel=1e-10)
        assert scan.sign_change.shape == (6, 6)
        assert len(scan.to_frame()) == 49

    def test_zero_cells_lie_inside_the_grid(self, spec_n2):
        w = np.linspace(-3.0, 3.0, 61)
        scan = jacobian_det_scan(spec_n2, 0.5, w, w)
        cells = scan.zero_cells()
        assert cells.shape == (int(scan.sign_change.sum()), 2)
        assert np.all(np.abs(cells) < 3.0)

    def test_locate_singular_point(self, spec_n2):
        w = np.linspace(-3.0, 3.0, 61)
        scan = jacobian_det_scan(spec_n2, 0.5, w, w)
        rows, cols = np.nonzero(scan.det[:, :-1] * scan.det[:, 1:] < 0)
        if rows.size == 0:
            pytest.skip("no determinant sign change on this grid")
        start = [w[cols[0]], w[rows[0]]]
        end = [w[cols[0] + 1], w[rows[0]]]
        point = locate_singular_point(spec_n2, 0.5, start, end)
        det = price_jacobian(spec_n2, DriverState(w=tuple(point), b=0.0, t=0.5)).determinant
        assert abs(det) < 1e-6 * np.max(np.abs(scan.det))

    def test_no_sign_change_gives_none(self, spec_n2):
        assert locate_singular_point(spec_n2, 0.5, [0.0, 0.0], [0.0, 0.0]) is None
