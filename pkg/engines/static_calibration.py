# static_calibration.py - Static no-arbitrage checks and initial calibration of the mixture

from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import optimize

from engines.black_pricing import black_forward_price
from models.market_models import MarketSnapshot
from models.mixture_models import (
    TWO_PI,
    ArbitrageCondition,
    ArbitrageReport,
    CalibrationDiagnostics,
    GridBounds,
    MixtureSpec,
    PriceRange,
)
from utils.exceptions import (
    DivisionDegenerate,
    DomainError,
    InfeasibleAtFloor,
    InfeasiblePrices,
    OutOfRange,
    SingularSystem,
)
from utils.numeric_utils import condition_number, solve_with_condition

NEGATIVE_TOLERANCE = 1e-10
DISCRETE_TOLERANCE = 1e-12
SIGMA_BRACKET = (1e-4, 1.0)
SIGMA_XTOL = 1e-7


def _extended_strikes(snap: MarketSnapshot) -> Tuple[np.ndarray, np.ndarray]:
    """Strikes and prices with the forward prepended as the zero-strike call."""
    return np.concatenate(([0.0], snap.strike_array())), snap.price_vector()


def check_static_no_arbitrage(snap: MarketSnapshot) -> ArbitrageReport:
    """
    Evaluate the vertical-spread and butterfly inequalities on a snapshot.

    Vertical spreads: (G_{j-1} - G_j) / (K_j - K_{j-1}) in [0, 1] for j >= 1 with
    K_0 = 0 and G_0 the forward. Butterflies: the convexity combination of
    (G_{j-1}, G_j, G_{j+1}) is non-negative for 1 <= j <= n - 1.
    """
    k, g = _extended_strikes(snap)
    conditions = []
    for j in range(1, len(k)):
        ratio = (g[j - 1] - g[j]) / (k[j] - k[j - 1])
        conditions.append(ArbitrageCondition(kind="vertical_lower", index=j, slack=float(ratio)))
        conditions.append(ArbitrageCondition(kind="vertical_upper", index=j, slack=float(1.0 - ratio)))
    for j in range(1, len(k) - 1):
        slack = (
            g[j - 1]
            - (k[j + 1] - k[j - 1]) / (k[j + 1] - k[j]) * g[j]
            + (k[j] - k[j - 1]) / (k[j + 1] - k[j]) * g[j + 1]
        )
        conditions.append(ArbitrageCondition(kind="butterfly", index=j, slack=float(slack)))

    report = ArbitrageReport(conditions=conditions)
    for failure in report.failures:
        logger.warning(f"Static arbitrage: {failure.kind} violated at j={failure.index} (slack {failure.slack:.6g})")
    return report


def grid_bounds(snap: MarketSnapshot) -> GridBounds:
    """
    Largest admissible x_1 and smallest admissible x_{n+2}.

    Raises:
        DomainError: fewer than two strikes
        DivisionDegenerate: a denominator vanishes, the bound is unbounded
    """
    if snap.n < 2:
        raise DomainError("grid bounds need at least two strikes")
    k = snap.strike_array()
    g0, g = snap.forward, np.asarray(snap.option_forwards, dtype=float)

    den_low = (k[1] - k[0]) - (g[0] - g[1])
    if den_low == 0.0:
        raise DivisionDegenerate("x_1 bound denominator (K_2 - K_1) - (G_1 - G_2) vanishes", {"bound": "x1_max"})
    x1_max = (g0 * (k[1] - k[0]) + g[1] * k[0] - g[0] * k[1]) / den_low

    den_top = g[-2] - g[-1]
    if den_top == 0.0:
        raise DivisionDegenerate("G_{n-1} = G_n, the upper grid bound is unbounded", {"bound": "x_top_min"})
    x_top_min = (g[-2] * k[-1] - g[-1] * k[-2]) / den_top

    return GridBounds(x1_max=float(x1_max), x_top_min=float(x_top_min))


def mixture_grid(strikes: Sequence[float], x1: float, x_top: float) -> np.ndarray:
    """Grid (x_1, K_1, ..., K_n, x_{n+2})."""
    return np.concatenate(([x1], np.asarray(strikes, dtype=float), [x_top]))


def solve_discrete_probabilities(snap: MarketSnapshot, x1: float, x_top: float) -> np.ndarray:
    """
    Closed-form probabilities of the discrete model on (x_1, K_1, ..., K_n, x_{n+2}).

    Raises:
        DomainError: fewer than two strikes, or x_1 >= K_1, or x_{n+2} <= K_n
        InfeasiblePrices: a probability below -1e-12
    """
    n = snap.n
    if n < 2:
        raise DomainError("the closed-form solution needs at least two strikes")
    k = snap.strike_array()
    if not x1 < k[0] or not x_top > k[-1]:
        raise DomainError("need x_1 < K_1 and x_{n+2} > K_n", {"x1": x1, "x_top": x_top})

    g0 = snap.forward
    # g[j] is G^j for j = 1..n; g[0] unused.
    g = np.concatenate(([g0], np.asarray(snap.option_forwards, dtype=float)))
    kk = np.concatenate(([0.0], k))
    p = np.empty(n + 2)

    p[0] = (kk[1] + g[1] - g0) / (kk[1] - x1)
    p[1] = (
        x1 * (g[1] - g[2] - (kk[2] - kk[1])) + g0 * (kk[2] - kk[1]) - g[1] * kk[2] + g[2] * kk[1]
    ) / ((kk[1] - x1) * (kk[2] - kk[1]))
    for m in range(3, n + 1):
        p[m - 1] = (
            g[m - 2] / (kk[m - 1] - kk[m - 2])
            - g[m - 1] * (kk[m] - kk[m - 2]) / ((kk[m - 1] - kk[m - 2]) * (kk[m] - kk[m - 1]))
            + g[m] / (kk[m] - kk[m - 1])
        )
    p[n] = g[n - 1] / (kk[n] - kk[n - 1]) - g[n] * (x_top - kk[n - 1]) / ((kk[n] - kk[n - 1]) * (x_top - kk[n]))
    p[n + 1] = g[n] / (x_top - kk[n])

    negative = {i + 1: float(v) for i, v in enumerate(p) if v < -DISCRETE_TOLERANCE}
    if negative:
        raise InfeasiblePrices(
            f"discrete calibration gives negative probabilities {negative}",
            {"p": p.tolist(), "x1": x1, "x_top": x_top},
        )
    return p


def discrete_payoff_matrix(x: Sequence[float], strikes: Sequence[float]) -> np.ndarray:
    """Rows (1, x_k, (x_k - K_1)_+, ..., (x_k - K_n)_+) of the discrete model."""
    x = np.asarray(x, dtype=float)
    k = np.asarray(strikes, dtype=float)
    payoffs = np.maximum(x[None, :] - k[:, None], 0.0)
    return np.vstack([np.ones_like(x), x, payoffs])


def build_extended_system(x: Sequence[float], sigma: Sequence[float], strikes: Sequence[float], T: float) -> np.ndarray:
    """
    Calibration matrix of the lognormal mixture.

    Row 1 is all ones, row 2 the component forwards x_k, and row j + 2 holds
    G^B(x_k, sigma_k, K_j, T).
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(sigma, dtype=float)
    k = np.asarray(strikes, dtype=float)
    if x.shape != s.shape:
        raise DomainError("grid and sigma must have the same length")
    calls = black_forward_price(x[None, :], s[None, :], k[:, None], T)
    return np.vstack([np.ones_like(x), x, np.atleast_2d(calls)])


def cone_partition_from_p0(p0: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Contiguous cones starting at angle 0 with widths 2 pi p0_k.

    Returns:
        tuple: (base angles, widths)
    """
    p = np.asarray(p0, dtype=float)
    if p.size != 4:
        raise DomainError("the cone partition is defined for n = 2 only", {"components": int(p.size)})
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DomainError("cone widths need a probability vector", {"p0": p.tolist()})
    widths = TWO_PI * p / p.sum()
    angles = np.concatenate(([0.0], np.cumsum(widths)[:-1]))
    return angles, widths


def _solve_weights(snap: MarketSnapshot, x, sigma, maturity: float) -> Tuple[np.ndarray, np.ndarray, float]:
    matrix = build_extended_system(x, sigma, snap.strikes, maturity)
    p, cond = solve_with_condition(matrix, snap.calibration_target())
    return matrix, p, cond


def calibrate_mixture(snap: MarketSnapshot, x: Sequence[float], sigma: Sequence[float], maturity: float = 1.0,
                      origin: Optional[str] = None, with_partition: bool = True) -> MixtureSpec:
    """
    Solve A p = b for the initial mixture weights.

    Args:
        snap (MarketSnapshot): Prices to reproduce
        x (sequence): Full grid x_1..x_{n+2}
        sigma (sequence): Component volatilities
        maturity (float): Model horizon T used in the calibration matrix
        origin (str): Provenance note copied into the spec
        with_partition (bool): Attach the cone partition when n = 2

    Returns:
        MixtureSpec: calibrated model

    Raises:
        SingularSystem: A is numerically singular
        OutOfRange: b lies outside the reachable price range
    """
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if x.size != snap.n + 2:
        raise DomainError(f"grid must have n + 2 = {snap.n + 2} points, got {x.size}")
    if not np.allclose(x[1:-1], snap.strike_array(), rtol=0.0, atol=1e-9):
        raise DomainError("interior grid points must equal the strikes")

    _, p, cond = _solve_weights(snap, x, sigma, maturity)
    negative = {i + 1: float(v) for i, v in enumerate(p) if v < -NEGATIVE_TOLERANCE}
    if negative:
        raise OutOfRange(
            "the price vector is outside the range of the model",
            negative,
            {"p": p.tolist(), "condition_number": cond},
        )
    logger.info(f"Calibrated {snap.n + 2}-component mixture, condition number {cond:.3e}")
    logger.debug(f"p0 = {p.tolist()}")

    angles = widths = None
    if with_partition and snap.n == 2:
        if np.all(p > 0):
            angles, widths = cone_partition_from_p0(p)
        else:
            logger.warning("A weight is zero; no cone partition attached")

    return MixtureSpec(
        strikes=list(snap.strikes),
        grid=x.tolist(),
        sigma=sigma.tolist(),
        p0=p.tolist(),
        maturity=maturity,
        cone_angles=None if angles is None else angles.tolist(),
        cone_widths=None if widths is None else widths.tolist(),
        condition_number=cond,
        origin=origin,
    )


def _min_weight(snap: MarketSnapshot, x, level: float, maturity: float) -> float:
    try:
        _, p, _ = _solve_weights(snap, x, np.full(len(x), level), maturity)
    except SingularSystem:
        return -1.0
    return float(p.min()) + NEGATIVE_TOLERANCE


def max_uniform_sigma(snap: MarketSnapshot, x: Sequence[float], maturity: float = 1.0,
                      bracket: Tuple[float, float] = SIGMA_BRACKET) -> float:
    """
    Largest uniform volatility for which the calibrated weights stay non-negative.

    Raises:
        InfeasibleAtFloor: calibration already fails at the bottom of the bracket
    """
    x = np.asarray(x, dtype=float)
    lo, hi = bracket
    f_lo = _min_weight(snap, x, lo, maturity)
    if f_lo < 0:
        raise InfeasibleAtFloor(
            f"calibration is infeasible already at sigma = {lo}",
            {"min_weight": f_lo - NEGATIVE_TOLERANCE},
        )
    if _min_weight(snap, x, hi, maturity) >= 0:
        logger.warning(f"Calibration stays feasible up to sigma = {hi}; returning the bracket end")
        return hi

    def feasible_margin(level):
        # bisect needs a sign change; feasible levels map to non-negative values
        return _min_weight(snap, x, level, maturity)

    root = optimize.bisect(feasible_margin, lo, hi, xtol=SIGMA_XTOL, maxiter=200)
    # step back onto the feasible side of the boundary
    sigma_star = root if feasible_margin(root) >= 0 else root - SIGMA_XTOL
    logger.info(f"Maximal uniform volatility {sigma_star:.6f}")
    return float(sigma_star)


def price_range_extremes(matrix: np.ndarray) -> PriceRange:
    """Extreme price vectors b_k = A e_k with the probability row dropped."""
    a = np.asarray(matrix, dtype=float)
    return PriceRange(extremes=a[1:, :].T.tolist(), system_matrix=a.tolist())


def price_range_contains(price_range: PriceRange, prices: Sequence[float],
                         tolerance: float = NEGATIVE_TOLERANCE) -> Tuple[bool, np.ndarray]:
    """
    Membership of a price vector in the convex hull of the extremes.

    Returns:
        tuple: (is_member, barycentric weights A^{-1} (1, b))
    """
    b = np.concatenate(([1.0], np.asarray(prices, dtype=float)))
    p, _ = solve_with_condition(np.asarray(price_range.system_matrix), b)
    return bool(np.all(p >= -tolerance)), p


def calibration_diagnostics(snap: MarketSnapshot, x: Sequence[float], sigma: Sequence[float], maturity: float = 1.0,
                            comparison_sigma: Optional[float] = 0.01) -> CalibrationDiagnostics:
    """
    Bounds, maximal uniform volatility, conditioning and repricing error of a calibration.

    Failures of the individual parts are recorded as notes.
    """
    x = np.asarray(x, dtype=float)
    notes = []

    try:
        bounds = grid_bounds(snap)
    except DivisionDegenerate as exc:
        notes.append(exc.message)
        bounds = GridBounds(x1_max=float("nan"), x_top_min=float("inf"))

    try:
        sigma_star = max_uniform_sigma(snap, x, maturity)
    except InfeasibleAtFloor as exc:
        notes.append(exc.message)
        sigma_star = None

    matrix = build_extended_system(x, sigma, snap.strikes, maturity)
    cond = condition_number(matrix)
    target = snap.calibration_target()
    try:
        p, _ = solve_with_condition(matrix, target)
        residual = float(np.max(np.abs(matrix @ p - target) / np.abs(target)))
        if np.any(p < -NEGATIVE_TOLERANCE):
            notes.append("configured volatilities put the prices outside the model range")
    except SingularSystem as exc:
        notes.append(exc.message)
        residual = float("nan")

    comparison = None
    if comparison_sigma is not None:
        try:
            _, comparison_p, _ = _solve_weights(snap, x, np.full(x.size, comparison_sigma), maturity)
            comparison = comparison_p.tolist()
        except SingularSystem as exc:
            notes.append(exc.message)

    return CalibrationDiagnostics(
        bounds=bounds,
        sigma_star=sigma_star,
        condition_number=cond,
        repricing_residual=residual,
        arbitrage=check_static_no_arbitrage(snap),
        comparison_weights=comparison,
        comparison_sigma=comparison_sigma,
        notes=notes,
    )
