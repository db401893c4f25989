# black_pricing.py - Black-76 forward pricing, implied volatility, parity forwards and smiles

"""
Black-76 toolkit.

Everything here works on forward (undiscounted) prices unless the name says
otherwise. Functions accept scalars or numpy arrays and broadcast; scalar
inputs give float results.
"""

from typing import Optional, Sequence

import numpy as np
from loguru import logger
from scipy import optimize, stats
from scipy.special import ndtr

from models.market_models import DiscountContext, SmileFit
from utils.exceptions import DegenerateDesign, DomainError, NoSolution, NonPositiveSmile

IMPLIED_VOL_LOWER = 1e-6
IMPLIED_VOL_UPPER = 5.0
IMPLIED_VOL_XTOL = 1e-14
DENSITY_STEP = 1e-2


def _as_result(value: np.ndarray, *inputs):
    if all(np.ndim(a) == 0 for a in inputs):
        return float(value)
    return value


def _broadcast(*args):
    return np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in args))


def _d1_d2(x, sigma, K, tau):
    vol = sigma * np.sqrt(tau)
    regular = (vol > 0) & (K > 0)
    safe_vol = np.where(regular, vol, 1.0)
    safe_k = np.where(regular, K, 1.0)
    d1 = (np.log(x / safe_k) + 0.5 * safe_vol ** 2) / safe_vol
    return d1, d1 - safe_vol, regular


def black_forward_price(x, sigma, K, tau):
    """
    Forward price of a call under Black's model.

    Args:
        x: Forward price of the underlying, > 0
        sigma: Volatility, >= 0
        K: Strike, >= 0
        tau: Time to maturity in years, >= 0

    Returns:
        x Phi(d1) - K Phi(d2), or (x - K)_+ when sigma sqrt(tau) = 0

    Raises:
        DomainError: on inputs outside the domain
    """
    xa, sa, ka, ta = _broadcast(x, sigma, K, tau)
    if np.any(~(xa > 0)) or np.any(sa < 0) or np.any(ka < 0) or np.any(ta < 0):
        raise DomainError("black_forward_price needs x > 0 and non-negative sigma, K, tau")

    d1, d2, regular = _d1_d2(xa, sa, ka, ta)
    intrinsic = np.maximum(xa - ka, 0.0)
    price = np.where(regular, xa * ndtr(d1) - ka * ndtr(d2), np.where(ka == 0.0, xa, intrinsic))
    return _as_result(np.clip(price, intrinsic, xa), x, sigma, K, tau)


def black_forward_delta(x, sigma, K, tau):
    """Phi(d1), the derivative of the forward call price in x."""
    xa, sa, ka, ta = _broadcast(x, sigma, K, tau)
    d1, _, regular = _d1_d2(xa, sa, ka, ta)
    degenerate = np.where(xa > ka, 1.0, np.where(xa == ka, 0.5, 0.0))
    return _as_result(np.where(regular, ndtr(d1), degenerate), x, sigma, K, tau)


def discount_to_spot(forward_price, ctx: DiscountContext):
    """Spot price = forward price e^{-r tau}."""
    return _as_result(np.asarray(forward_price, dtype=float) * ctx.discount_factor, forward_price)


def forward_from_parity(call, put, K, ctx: DiscountContext):
    """Forward of the underlying from a put/call pair: K + e^{r tau} (C - P)."""
    value = np.asarray(K, dtype=float) + ctx.growth_factor * (np.asarray(call, dtype=float) - np.asarray(put, dtype=float))
    return _as_result(value, call, put, K)


def implied_vol(forward: float, K: float, tau: float, target: float) -> float:
    """
    Black volatility reproducing a forward call price.

    Bisection on [1e-6, 5]; the price is strictly increasing in sigma.

    Raises:
        NoSolution: if target is outside ((forward - K)_+, forward) or the bracket
    """
    lower = max(forward - K, 0.0)
    if not (lower < target < forward) or tau <= 0:
        raise NoSolution(
            f"target {target!r} outside the arbitrage bounds ({lower!r}, {forward!r})",
            {"forward": forward, "strike": K, "tau": tau, "target": target},
        )

    def excess(s):
        return black_forward_price(forward, s, K, tau) - target

    try:
        return float(optimize.bisect(excess, IMPLIED_VOL_LOWER, IMPLIED_VOL_UPPER, xtol=IMPLIED_VOL_XTOL, maxiter=200))
    except ValueError as exc:
        raise NoSolution(
            f"target {target!r} not bracketed by volatilities in [{IMPLIED_VOL_LOWER}, {IMPLIED_VOL_UPPER}]",
            {"forward": forward, "strike": K, "tau": tau, "target": target},
        ) from exc


def implied_vol_array(forward, K, tau, target, max_iter: int = 100) -> np.ndarray:
    """
    Vectorized bisection over broadcast inputs; NaN where no volatility exists.
    """
    fa, ka, ta, ga = _broadcast(forward, K, tau, target)
    lower = np.maximum(fa - ka, 0.0)
    valid = (fa > 0) & (ta > 0) & (ga > lower) & (ga < fa)
    fa_safe = np.where(valid, fa, 1.0)
    ka_safe = np.where(valid, ka, 0.0)
    ga_safe = np.where(valid, ga, 0.5)
    ta_safe = np.where(valid, ta, 1.0)

    low = np.full(fa.shape, IMPLIED_VOL_LOWER)
    high = np.full(fa.shape, IMPLIED_VOL_UPPER)
    valid &= (black_forward_price(fa_safe, low, ka_safe, ta_safe) <= ga_safe) & (
        black_forward_price(fa_safe, high, ka_safe, ta_safe) >= ga_safe
    )

    for _ in range(max_iter):
        mid = 0.5 * (low + high)
        above = black_forward_price(fa_safe, mid, ka_safe, ta_safe) > ga_safe
        high = np.where(above, mid, high)
        low = np.where(above, low, mid)
        if np.all(high - low <= IMPLIED_VOL_XTOL):
            break

    return np.where(valid, 0.5 * (low + high), np.nan)


def fit_smile(strikes: Sequence[float], vols: Sequence[float]) -> SmileFit:
    """
    Least-squares quadratic smile through (strike, volatility) points.

    The design is built on centred and scaled strikes and converted back to
    raw coefficients.

    Raises:
        DegenerateDesign: fewer than three distinct strikes
        NonPositiveSmile: fitted volatility not positive over the strike range
    """
    k = np.asarray(strikes, dtype=float)
    v = np.asarray(vols, dtype=float)
    if k.shape != v.shape or k.ndim != 1:
        raise DomainError("strikes and vols must be 1-d arrays of equal length")

    centre = k.mean() if k.size else 0.0
    scale = 0.5 * (k.max() - k.min()) if k.size else 0.0
    if scale <= 0:
        raise DegenerateDesign("smile fit needs at least three distinct strikes", {"strikes": k.tolist()})

    u = (k - centre) / scale
    design = np.column_stack([np.ones_like(u), u, u * u])
    beta, _, rank, _ = np.linalg.lstsq(design, v, rcond=None)
    if rank < 3:
        raise DegenerateDesign("smile fit needs at least three distinct strikes", {"strikes": k.tolist()})

    b0, b1, b2 = beta
    a2 = b2 / scale ** 2
    a1 = b1 / scale - 2.0 * b2 * centre / scale ** 2
    a0 = b0 - b1 * centre / scale + b2 * centre ** 2 / scale ** 2
    fitted = design @ beta

    fit = SmileFit(
        a0=float(a0), a1=float(a1), a2=float(a2),
        strike_min=float(k.min()), strike_max=float(k.max()),
        residuals=[float(r) for r in fitted - v],
    )

    candidates = [fit.strike_min, fit.strike_max]
    if a2 != 0.0:
        vertex = -a1 / (2.0 * a2)
        if fit.strike_min < vertex < fit.strike_max:
            candidates.append(vertex)
    lowest = float(np.min(fit.volatility(candidates)))
    if lowest <= 0:
        raise NonPositiveSmile(f"fitted smile reaches {lowest:.6g} inside the strike range", fit.model_dump())

    logger.debug(f"Smile fitted on {k.size} strikes, max residual {np.max(np.abs(fitted - v)):.3e}")
    return fit


def smile_call_prices(fit: SmileFit, forward: float, ctx: DiscountContext, grid):
    """Discounted call prices C^B_0(K) priced off the smile."""
    k = np.asarray(grid, dtype=float)
    return discount_to_spot(black_forward_price(forward, fit.volatility(k), k, ctx.tau), ctx)


def implied_density_from_smile(fit: SmileFit, forward: float, ctx: DiscountContext, grid,
                               margin: Optional[float] = None) -> np.ndarray:
    """
    Smile-implied density e^{r tau} d^2 C / dK^2 by central differences.

    Uses step h = 1e-2 K. Negative values are kept and reported.

    Args:
        fit (SmileFit): Fitted smile
        forward (float): Forward of the underlying
        ctx (DiscountContext): Rate and time to maturity
        grid (array_like): Strikes at which to evaluate
        margin (float): Allowed distance beyond the fitted strikes, unlimited if None

    Returns:
        numpy.ndarray: density values on the grid
    """
    k = np.asarray(grid, dtype=float)
    if np.any(k <= 0):
        raise DomainError("density grid must be positive")
    if margin is not None and (k.min() < fit.strike_min - margin or k.max() > fit.strike_max + margin):
        raise DomainError(
            f"density grid [{k.min()}, {k.max()}] exceeds the fitted range by more than {margin}",
            {"strike_min": fit.strike_min, "strike_max": fit.strike_max},
        )

    h = DENSITY_STEP * k
    up = smile_call_prices(fit, forward, ctx, k + h)
    mid = smile_call_prices(fit, forward, ctx, k)
    down = smile_call_prices(fit, forward, ctx, k - h)
    density = ctx.growth_factor * (up - 2.0 * mid + down) / (h * h)

    negative = int(np.count_nonzero(density < 0))
    if negative:
        logger.warning(f"Smile-implied density is negative at {negative} of {k.size} grid points")
    return density


def black_implied_density(forward: float, sigma: float, ctx: DiscountContext, grid) -> np.ndarray:
    """Lognormal density of S_T under Black's model with mean ``forward``."""
    k = np.asarray(grid, dtype=float)
    total_vol = sigma * np.sqrt(ctx.tau)
    if total_vol <= 0:
        raise DomainError("Black density needs sigma * sqrt(tau) > 0")
    dist = stats.lognorm(s=total_vol, scale=forward * np.exp(-0.5 * total_vol ** 2))
    return dist.pdf(k)
