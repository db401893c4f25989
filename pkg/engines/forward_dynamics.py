"""
Forward Dynamics

Time-t evaluation of the calibrated mixture: cone probabilities of the planar
driver W, the price map h_t(w, b) and its Jacobian, the forward density f_t
and its volatility, and a numerical locator for the set where the Jacobian is
singular.

The driver plane is split into the cones of the n = 2 partition. Cones wider
than pi/2 are evaluated as unions of sub-cones of width at most pi/2. Bulk
evaluation goes through ForwardDensityModel, which uses a closed-form
bivariate-normal orthant probability per sub-cone; ``cone_probability`` is
the one-dimensional quadrature reference.
"""

from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import integrate, optimize, stats

from engines.black_pricing import black_forward_delta, black_forward_price
from models.dynamics_models import DeterminantScan, DriverState, JacobianMatrix, MixtureWeights
from models.mixture_models import TWO_PI, Cone, MixtureSpec
from utils.exceptions import DomainError
from utils.numeric_utils import bivariate_normal_cdf, norm_cdf, norm_pdf, rotation_matrix

QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-12
MATURITY_CLAMP = 1e-6


def _residual_scale(t: float, T: float) -> float:
    if not t < T:
        raise DomainError(f"evaluation time {t} must be strictly before maturity {T}")
    if t < 0:
        raise DomainError(f"evaluation time {t} must be non-negative")
    return float(np.sqrt(T - t))


def clamp_time(t: float, T: float) -> float:
    """Pull an evaluation time at or past maturity back to T - 1e-6."""
    if t >= T:
        logger.warning(f"Evaluation time {t} clamped to {T - MATURITY_CLAMP} (maturity {T})")
        return T - MATURITY_CLAMP
    return t


def _angular_density(alpha, wx, wy, s):
    """Radial integral of the Gaussian density along the ray at angle alpha."""
    a = (wx * np.cos(alpha) + wy * np.sin(alpha)) / s
    c = (-wx * np.sin(alpha) + wy * np.cos(alpha)) / s
    r2 = (wx * wx + wy * wy) / (s * s)
    return np.exp(-0.5 * r2) / TWO_PI + a * norm_pdf(c) * norm_cdf(a)


def cone_probability(w: Sequence[float], t: float, T: float, cone: Cone) -> float:
    """
    P(w + sqrt(T - t) Z in cone) by adaptive quadrature over the cone's angle.

    w is first rotated by O_phi so that the cone starts at angle 0.
    """
    s = _residual_scale(t, T)
    wx, wy = rotation_matrix(cone.phi) @ np.asarray(w, dtype=float)
    total = 0.0
    for piece in Cone(phi=0.0, theta=cone.theta).split():
        lo, hi = piece.phi, piece.phi + piece.theta
        value, _ = integrate.quad(
            _angular_density, lo, hi, args=(wx, wy, s),
            epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200,
        )
        total += value
    return float(total)


def _sector_probability(wx, wy, s, theta):
    """Closed-form P(w + sZ in {angle in [0, theta]}) for theta <= pi/2."""
    h = wy / s
    k = (wx * np.sin(theta) - wy * np.cos(theta)) / s
    return bivariate_normal_cdf(h, k, -np.cos(theta))


def _sector_gradient(wx, wy, s, theta):
    """Gradient of the base-sector probability in the rotated coordinates."""
    edge0 = norm_pdf(wy / s) * norm_cdf(wx / s) / s
    along = (wx * np.cos(theta) + wy * np.sin(theta)) / s
    across = (-wx * np.sin(theta) + wy * np.cos(theta)) / s
    edge_theta = norm_pdf(across) * norm_cdf(along) / s
    return np.sin(theta) * edge_theta, edge0 - np.cos(theta) * edge_theta


def cone_probability_gradient(w: Sequence[float], t: float, T: float, cone: Cone) -> np.ndarray:
    """
    (dP/dw_x, dP/dw_y) for P(w + sqrt(T - t) Z in cone).

    The closed forms hold for the base cone [0, theta] with theta <= pi/2 and
    are mapped back through the rotation: d/dw_x = cos(phi) d/dw~_x - sin(phi) d/dw~_y,
    d/dw_y = sin(phi) d/dw~_x + cos(phi) d/dw~_y.
    """
    s = _residual_scale(t, T)
    w = np.asarray(w, dtype=float)
    grad = np.zeros(2)
    for piece in cone.split():
        wx, wy = rotation_matrix(piece.phi) @ w
        gx, gy = _sector_gradient(wx, wy, s, piece.theta)
        c, sn = np.cos(piece.phi), np.sin(piece.phi)
        grad += np.array([c * gx - sn * gy, sn * gx + c * gy])
    return grad


def cone_index(spec: MixtureSpec, w) -> np.ndarray:
    """Index (0-based) of the cone containing each point of w, shape (..., 2)."""
    w = np.asarray(w, dtype=float)
    angle = np.mod(np.arctan2(w[..., 1], w[..., 0]), TWO_PI)
    edges = np.cumsum(spec.cone_widths)[:-1]
    return np.searchsorted(edges, angle, side="right")


def lognormal_factors(x, sigma, t: float, b) -> np.ndarray:
    """x_k exp(-sigma_k^2 t / 2 + sigma_k b), broadcast over b of shape (N,)."""
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    b = np.asarray(b, dtype=float)[..., None]
    return x * np.exp(-0.5 * sigma ** 2 * t + sigma * b)


def initial_density(spec: MixtureSpec, grid) -> np.ndarray:
    """t = 0 mixture density sum_k p0_k LN(x; x_k, sigma_k^2 T); needs no cone partition."""
    arrays = spec.arrays()
    x = np.atleast_1d(np.asarray(grid, dtype=float))
    sd = arrays["sigma"] * np.sqrt(spec.maturity)
    scale = arrays["grid"] * np.exp(-0.5 * sd ** 2)
    return stats.lognorm.pdf(x[:, None], s=sd, scale=scale) @ arrays["p0"]


class ForwardDensityModel:
    """
    Vectorized evaluator of the n = 2 dynamic model.

    States are arrays of shape (N, 3) holding (w_1, w_2, b); all methods take
    one scalar time t < T.
    """

    def __init__(self, spec: MixtureSpec):
        if spec.n != 2 or not spec.has_partition:
            raise DomainError("dynamics need an n = 2 spec with a cone partition")
        self.spec = spec
        arrays = spec.arrays()
        self.strikes = arrays["strikes"]
        self.grid = arrays["grid"]
        self.sigma = arrays["sigma"]
        self.p0 = arrays["p0"]
        self.T = spec.maturity
        self.n = spec.n
        self.m = spec.n + 2

        phis, thetas, owners = [], [], []
        for k, cone in enumerate(spec.cones()):
            for piece in cone.split():
                phis.append(piece.phi)
                thetas.append(piece.theta)
                owners.append(k)
        self._phi = np.array(phis)
        self._theta = np.array(thetas)
        self._owner = np.array(owners)
        self._cos = np.cos(self._phi)
        self._sin = np.sin(self._phi)

    @staticmethod
    def _states(states) -> np.ndarray:
        return np.atleast_2d(np.asarray(states, dtype=float))

    def _rotated(self, w):
        # (N, sub-cones) rotated coordinates
        wx = w[:, 0:1] * self._cos + w[:, 1:2] * self._sin
        wy = -w[:, 0:1] * self._sin + w[:, 1:2] * self._cos
        return wx, wy

    def _scatter(self, sub_values) -> np.ndarray:
        out = np.zeros(sub_values.shape[:1] + (self.m,) + sub_values.shape[2:])
        for j, k in enumerate(self._owner):
            out[:, k] += sub_values[:, j]
        return out

    def weights(self, w, t: float) -> np.ndarray:
        """p_t^k(w), shape (N, n+2)."""
        s = _residual_scale(t, self.T)
        w = np.atleast_2d(np.asarray(w, dtype=float))[:, :2]
        wx, wy = self._rotated(w)
        return self._scatter(_sector_probability(wx, wy, s, self._theta))

    def weight_gradients(self, w, t: float) -> np.ndarray:
        """dp_t^k/dw_i, shape (N, n+2, 2)."""
        s = _residual_scale(t, self.T)
        w = np.atleast_2d(np.asarray(w, dtype=float))[:, :2]
        wx, wy = self._rotated(w)
        gx, gy = _sector_gradient(wx, wy, s, self._theta)
        dx = self._cos * gx - self._sin * gy
        dy = self._sin * gx + self._cos * gy
        return self._scatter(np.stack([dx, dy], axis=-1))

    def spot_factors(self, b, t: float) -> np.ndarray:
        """x_t^k, shape (N, n+2)."""
        return lognormal_factors(self.grid, self.sigma, t, np.atleast_1d(b))

    def _component_calls(self, xt, t: float) -> np.ndarray:
        # (N, n, n+2)
        return black_forward_price(xt[:, None, :], self.sigma, self.strikes[:, None], self.T - t)

    def prices(self, states, t: float) -> np.ndarray:
        """h_t(w, b) = (G0, G1, ..., Gn), shape (N, n+1)."""
        states = self._states(states)
        p = self.weights(states[:, :2], t)
        xt = self.spot_factors(states[:, 2], t)
        forward = np.sum(p * xt, axis=1)
        calls = np.einsum("nk,njk->nj", p, self._component_calls(xt, t))
        return np.column_stack([forward, calls])

    def jacobian(self, states, t: float) -> np.ndarray:
        """Partials of h_t, shape (N, n+1, n+1); columns (w_1, w_2, b)."""
        states = self._states(states)
        p = self.weights(states[:, :2], t)
        dp = self.weight_gradients(states[:, :2], t)
        xt = self.spot_factors(states[:, 2], t)
        calls = self._component_calls(xt, t)
        deltas = black_forward_delta(xt[:, None, :], self.sigma, self.strikes[:, None], self.T - t)

        payoffs = np.concatenate([xt[:, None, :], calls], axis=1)  # (N, n+1, n+2)
        d_w = np.einsum("njk,nki->nji", payoffs, dp)
        sx = self.sigma * xt
        d_b0 = np.sum(p * sx, axis=1)
        d_bj = np.einsum("nk,njk->nj", p * sx, deltas)
        d_b = np.column_stack([d_b0, d_bj])
        return np.concatenate([d_w, d_b[:, :, None]], axis=2)

    def _component_moments(self, b, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Log-mean and log-sd of each lognormal component of S_T given the state."""
        tau = self.T - t
        xt = self.spot_factors(b, t)
        log_sd = self.sigma * np.sqrt(tau)
        return np.log(xt) - 0.5 * log_sd ** 2, np.broadcast_to(log_sd, xt.shape)

    def _component_densities(self, states, t: float, x) -> np.ndarray:
        # (N, G, n+2)
        mu, sd = self._component_moments(states[:, 2], t)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return stats.lognorm.pdf(x[None, :, None], s=sd[:, None, :], scale=np.exp(mu)[:, None, :])

    def density(self, states, t: float, x) -> np.ndarray:
        """f_t(x), shape (N, len(x))."""
        states = self._states(states)
        p = self.weights(states[:, :2], t)
        return np.einsum("ngk,nk->ng", self._component_densities(states, t, x), p)

    def cdf(self, states, t: float, x) -> np.ndarray:
        """Closed-form mixture distribution function, shape (N, len(x))."""
        states = self._states(states)
        p = self.weights(states[:, :2], t)
        mu, sd = self._component_moments(states[:, 2], t)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = (np.log(x)[None, :, None] - mu[:, None, :]) / sd[:, None, :]
        return np.einsum("ngk,nk->ng", norm_cdf(z), p)

    def density_volatility(self, states, t: float, x) -> np.ndarray:
        """
        Volatility vector of f_t(x) as a stochastic exponential, shape (N, len(x), n+1).

        Components i <= n: sum_k (dp_k/dw_i) f_k / f. Component n+1:
        sum_k p_k f_k (log(x / x_k) + sigma_k^2 T / 2 - sigma_k b) / (sigma_k (T - t)) / f.
        """
        states = self._states(states)
        p = self.weights(states[:, :2], t)
        dp = self.weight_gradients(states[:, :2], t)
        fk = self._component_densities(states, t, x)
        f = np.einsum("ngk,nk->ng", fk, p)

        vol_w = np.einsum("ngk,nki->ngi", fk, dp)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        score = (
            np.log(x)[None, :, None] - np.log(self.grid)
            + 0.5 * self.sigma ** 2 * self.T
            - self.sigma * states[:, 2][:, None, None]
        ) / (self.sigma * (self.T - t))
        vol_b = np.einsum("ngk,nk->ng", fk * score, p)
        return np.concatenate([vol_w, vol_b[:, :, None]], axis=2) / f[:, :, None]


def _model(spec: MixtureSpec) -> ForwardDensityModel:
    return ForwardDensityModel(spec)


def mixture_weights(spec: MixtureSpec, state: DriverState, method: str = "closed_form") -> MixtureWeights:
    """
    Time-t mixture weights and their w-gradients.

    ``method="quadrature"`` evaluates each weight with ``cone_probability``.
    """
    model = _model(spec)
    w = np.asarray(state.w, dtype=float)
    gradients = model.weight_gradients(w, state.t)[0]
    if method == "quadrature":
        weights = np.array([cone_probability(w, state.t, spec.maturity, cone) for cone in spec.cones()])
    elif method == "closed_form":
        weights = model.weights(w, state.t)[0]
    else:
        raise DomainError(f"unknown weight method {method!r}")
    return MixtureWeights(weights=weights, gradients=gradients)


def spot_factors(spec: MixtureSpec, state: DriverState) -> np.ndarray:
    """x_t^k = x_k exp(-sigma_k^2 t / 2 + sigma_k b), shape (n+2,)."""
    return lognormal_factors(spec.grid, spec.sigma, state.t, state.b)


def price_map(spec: MixtureSpec, state: DriverState) -> np.ndarray:
    """Model forward prices (G0, G1, ..., Gn) at the driver state."""
    return _model(spec).prices(state.vector, state.t)[0]


def price_jacobian(spec: MixtureSpec, state: DriverState) -> JacobianMatrix:
    """Analytic Jacobian of the price map with its determinant and condition number."""
    matrix = _model(spec).jacobian(state.vector, state.t)[0]
    return JacobianMatrix(
        matrix=matrix,
        determinant=float(np.linalg.det(matrix)),
        condition=float(np.linalg.cond(matrix)),
    )


def forward_density(spec: MixtureSpec, state: DriverState, x) -> np.ndarray:
    """f_t(x) for scalar or array x."""
    if np.any(np.asarray(x) <= 0):
        raise DomainError("density is defined for x > 0")
    values = _model(spec).density(state.vector, state.t, x)[0]
    return float(values[0]) if np.ndim(x) == 0 else values


def density_grid(spec: MixtureSpec, state: DriverState, grid) -> np.ndarray:
    """f_t on a grid of asset levels."""
    return _model(spec).density(state.vector, state.t, grid)[0]


def forward_cdf(spec: MixtureSpec, state: DriverState, x: float, closed_form: bool = False) -> float:
    """
    P(S_T <= x | state), by quadrature of f_t or in closed form.
    """
    model = _model(spec)
    if closed_form:
        return float(model.cdf(state.vector, state.t, x)[0, 0])
    if x <= 0:
        return 0.0
    mu, _ = model._component_moments(np.array([state.b]), state.t)
    medians = np.exp(mu[0])
    breaks = sorted(m for m in medians if m < x)
    value, _ = integrate.quad(
        lambda y: model.density(state.vector, state.t, y)[0, 0],
        0.0, x, points=breaks or None, epsabs=1e-12, epsrel=1e-10, limit=400,
    )
    return float(value)


def density_volatility(spec: MixtureSpec, state: DriverState, x) -> np.ndarray:
    """sigma^f(x) of length n+1 for scalar x, shape (len(x), n+1) otherwise."""
    values = _model(spec).density_volatility(state.vector, state.t, x)[0]
    return values[0] if np.ndim(x) == 0 else values


def jacobian_det_scan(spec: MixtureSpec, t: float, w1: Sequence[float], w2: Sequence[float], b: float = 0.0) -> DeterminantScan:
    """
    det h_t' on the grid w1 x w2 at fixed b, with the cells whose corners change sign.
    """
    model = _model(spec)
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    gx, gy = np.meshgrid(w1, w2)
    states = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, b)])
    det = np.linalg.det(model.jacobian(states, t)).reshape(gx.shape)

    corners = np.stack([det[:-1, :-1], det[:-1, 1:], det[1:, :-1], det[1:, 1:]])
    sign_change = (corners.min(axis=0) <= 0) & (corners.max(axis=0) >= 0)
    logger.info(f"Determinant scan at t={t}: {int(sign_change.sum())} sign-change cells on a {gx.shape} grid")
    return DeterminantScan(t=t, b=b, w1=w1, w2=w2, det=det, sign_change=sign_change)


def locate_singular_point(spec: MixtureSpec, t: float, start: Sequence[float], end: Sequence[float],
                          b: float = 0.0) -> Optional[np.ndarray]:
    """
    Point on the segment [start, end] of the w-plane where det h_t' vanishes.

    Returns None if the determinant has the same sign at both ends.
    """
    model = _model(spec)
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)

    def det_at(u):
        w = start + u * (end - start)
        return float(np.linalg.det(model.jacobian([w[0], w[1], b], t)[0]))

    if det_at(0.0) * det_at(1.0) > 0:
        return None
    u = optimize.brentq(det_at, 0.0, 1.0, xtol=1e-12)
    return start + u * (end - start)


class MonteCarloWeights:
    """
    Mixture weights for an arbitrary partition of the driver space by simulation.

    The classifier maps points of shape (N, d) to component indices. Only the
    weights are available; there are no gradient closed forms.
    """

    def __init__(self, classifier: Callable[[np.ndarray], np.ndarray], n_components: int,
                 dimension: int = 2, n_samples: int = 100_000, seed: int = 0):
        self.classifier = classifier
        self.n_components = n_components
        self.dimension = dimension
        self.n_samples = n_samples
        self.seed = seed

    def weights(self, w: Sequence[float], t: float, T: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Returns:
            tuple: (weights, standard errors)
        """
        s = _residual_scale(t, T)
        rng = np.random.default_rng(self.seed)
        points = np.asarray(w, dtype=float) + s * rng.standard_normal((self.n_samples, self.dimension))
        labels = np.asarray(self.classifier(points))
        p = np.bincount(labels, minlength=self.n_components)[: self.n_components] / self.n_samples
        return p, np.sqrt(p * (1.0 - p) / self.n_samples)
