# simulation.py - Driver simulation, model price paths and stylized-fact statistics

from typing import Dict, List, Optional, Sequence

import numpy as np
from loguru import logger
from tqdm import tqdm

from engines.black_pricing import implied_vol_array
from engines.forward_dynamics import ForwardDensityModel, clamp_time
from models.market_models import MarketSnapshot
from models.mixture_models import MixtureSpec
from models.tracking_models import MartingaleReport, PricePath, PricePaths, StylizedStats
from utils.exceptions import DomainError
from utils.rng_utils import SeedStreams

HISTOGRAM_BINS = 50
FLAT_VOL_CHANGE = 1e-10


def simulate_driver(n_paths: int, n_steps: int, dt: float, seed: int, dimension: int = 3,
                    horizon: Optional[float] = None) -> np.ndarray:
    """
    Gaussian random-walk paths of the driver started at the origin.

    Path i draws from its own stream keyed by (seed, i), so a path does not
    depend on how many others are simulated alongside it.

    Returns:
        numpy.ndarray: shape (n_paths, n_steps + 1, dimension)
    """
    if n_paths < 1 or n_steps < 1 or dt < 0:
        raise DomainError("need n_paths >= 1, n_steps >= 1 and dt >= 0")
    if horizon is not None and n_steps * dt > horizon * (1.0 + 1e-12):
        raise DomainError(f"{n_steps} steps of {dt} run past the horizon {horizon}")

    streams = SeedStreams(seed)
    paths = np.zeros((n_paths, n_steps + 1, dimension))
    scale = np.sqrt(dt)
    for i in range(n_paths):
        rng = streams.generator(SeedStreams.DRIVER, i)
        paths[i, 1:] = np.cumsum(scale * rng.standard_normal((n_steps, dimension)), axis=0)
    return paths


def simulate_prices(spec: MixtureSpec, driver_paths: np.ndarray, dt: float, progress: bool = False) -> PricePaths:
    """Apply the price map along each driver path on the grid t_i = i dt."""
    driver_paths = np.asarray(driver_paths, dtype=float)
    if driver_paths.ndim == 2:
        driver_paths = driver_paths[None]
    if driver_paths.shape[-1] != spec.n + 1:
        raise DomainError(f"driver dimension {driver_paths.shape[-1]} does not match n + 1 = {spec.n + 1}")

    model = ForwardDensityModel(spec)
    n_paths, m, _ = driver_paths.shape
    times = np.arange(m) * dt
    prices = np.empty((n_paths, m, spec.n + 1))
    for i in tqdm(range(m), desc="pricing steps", disable=not progress):
        prices[:, i, :] = model.prices(driver_paths[:, i, :], clamp_time(times[i], spec.maturity))
    logger.info(f"Priced {n_paths} paths over {m} time points")
    return PricePaths(times=times, prices=prices, drivers=driver_paths)


def _pearson(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Pearson correlation; NaN where either row is flat."""
    ac = a - a.mean(axis=-1, keepdims=True)
    bc = b - b.mean(axis=-1, keepdims=True)
    sa = np.sqrt(np.sum(ac * ac, axis=-1))
    sb = np.sqrt(np.sum(bc * bc, axis=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.sum(ac * bc, axis=-1) / (sa * sb)
    return np.where((sa > 0) & (sb > 0), np.clip(rho, -1.0, 1.0), np.nan)


def _implied_vol_paths(spec: MixtureSpec, paths: PricePaths) -> np.ndarray:
    # (paths, m, n) against the pathwise forward
    tau = spec.maturity - np.minimum(paths.times, spec.maturity - 1e-6)
    forward = paths.prices[:, :, :1]
    strikes = np.asarray(spec.strikes, dtype=float)
    return implied_vol_array(forward, strikes, tau[None, :, None], paths.prices[:, :, 1:])


def stylized_correlations(spec: MixtureSpec, paths: PricePaths, bins: int = HISTOGRAM_BINS) -> StylizedStats:
    """
    Per-path correlation of forward log-returns with implied-vol changes, per strike.

    Paths with an implied volatility that cannot be inverted at some step, or
    with implied volatilities that do not move, are dropped and counted.
    """
    if spec.n < 2:
        raise DomainError("correlation study needs at least two options")
    vols = _implied_vol_paths(spec, paths)
    returns = np.diff(np.log(paths.prices[:, :, 0]), axis=1)
    vol_changes = np.diff(vols, axis=1)

    rho = np.stack([_pearson(returns, vol_changes[:, :, j]) for j in range(spec.n)], axis=1)
    flat = np.any(np.std(vol_changes, axis=1) < FLAT_VOL_CHANGE, axis=1)
    keep = np.all(np.isfinite(vols), axis=(1, 2)) & ~flat & np.all(np.isfinite(rho), axis=1)
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        logger.warning(f"Dropped {dropped} of {paths.n_paths} paths with undefined implied-volatility changes")

    kept = rho[keep]
    edges = np.linspace(-1.0, 1.0, bins + 1)
    histograms = np.array([np.histogram(kept[:, j], bins=edges)[0] for j in range(spec.n)])
    stats = StylizedStats(strikes=list(spec.strikes), correlations=kept, dropped=dropped,
                          bin_edges=edges, histograms=histograms)
    logger.info(f"Mean correlations {np.round(stats.means, 4).tolist()} over {kept.shape[0]} paths")
    return stats


def martingale_check(spec: MixtureSpec, t: float, n_samples: int, seed: int) -> MartingaleReport:
    """
    Monte-Carlo mean of prices and weights at time t against their t = 0 values.
    """
    if not 0 < t < spec.maturity:
        raise DomainError(f"martingale check needs 0 < t < T, got t={t}")
    model = ForwardDensityModel(spec)
    rng = SeedStreams(seed).generator(SeedStreams.MARTINGALE)
    states = np.sqrt(t) * rng.standard_normal((n_samples, spec.n + 1))

    prices = model.prices(states, t)
    weights = model.weights(states[:, :2], t)
    initial = model.prices(np.zeros(spec.n + 1), 0.0)[0]
    root_n = np.sqrt(n_samples)
    return MartingaleReport(
        t=t,
        n_samples=n_samples,
        initial=initial,
        mc_mean=prices.mean(axis=0),
        standard_error=prices.std(axis=0, ddof=1) / root_n,
        weight_initial=model.p0,
        weight_mean=weights.mean(axis=0),
        weight_standard_error=weights.std(axis=0, ddof=1) / root_n,
    )


def observed_correlations(snapshots: Sequence[MarketSnapshot], strikes: Sequence[float]) -> Dict[float, float]:
    """
    Correlation between daily forward log-returns and implied-vol changes in a quote series.

    Implied volatilities are taken against each day's parity forward.
    """
    if len(snapshots) < 3:
        raise DomainError("need at least three snapshots for a correlation")
    forwards = np.array([s.forward for s in snapshots])
    taus = np.array([s.tau for s in snapshots])
    vols = np.empty((len(snapshots), len(strikes)))
    for i, snap in enumerate(snapshots):
        lookup = dict(zip(snap.strikes, snap.option_forwards))
        missing = [k for k in strikes if k not in lookup]
        if missing:
            raise DomainError(f"snapshot {snap.valuation_date} lacks strikes {missing}")
        vols[i] = implied_vol_array(forwards[i], np.asarray(strikes, dtype=float), taus[i],
                                    np.array([lookup[k] for k in strikes]))

    returns = np.diff(np.log(forwards))
    result = {}
    for j, k in enumerate(strikes):
        changes = np.diff(vols[:, j])
        ok = np.isfinite(changes)
        if np.count_nonzero(~ok):
            logger.warning(f"Strike {k}: {np.count_nonzero(~ok)} days without an implied volatility")
        result[float(k)] = float(_pearson(returns[ok], changes[ok]))
    return result


def density_evolution(spec: MixtureSpec, path: PricePath, times: Sequence[float], grid) -> np.ndarray:
    """
    Forward densities along one simulated driver path.

    Returns:
        numpy.ndarray: shape (len(times), len(grid))
    """
    if path.driver is None:
        raise DomainError("density evolution needs the driver path")
    model = ForwardDensityModel(spec)
    rows: List[np.ndarray] = []
    for t in times:
        i = int(np.argmin(np.abs(path.times - t)))
        if not np.isclose(path.times[i], t, rtol=0.0, atol=1e-9):
            raise DomainError(f"time {t} is not on the path grid")
        rows.append(model.density(path.driver[i], clamp_time(path.times[i], spec.maturity), grid)[0])
    return np.vstack(rows)
