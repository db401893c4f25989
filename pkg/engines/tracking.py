"""
Tracking

Recovers the hidden driver (W, B) from a discretely observed series of model
price vectors, either by iterating the local linear inverse of the price map
or with a two-stage auxiliary particle filter.

Particle weights are handled in log space throughout; a step where no
weight survives raises WeightCollapse instead of silently resetting.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import stats
from scipy.special import logsumexp
from tqdm import tqdm

from engines.black_pricing import black_forward_price, implied_vol
from engines.forward_dynamics import ForwardDensityModel, clamp_time
from models.mixture_models import MixtureSpec
from models.tracking_models import ParticleCloud, SmileSnapshot, TrackingErrors, TrackResult
from utils.exceptions import DomainError, NoSolution, SingularJacobian, WeightCollapse
from utils.rng_utils import SeedStreams

CONDITION_LIMIT = 1e12
RESAMPLING_SCHEMES = ("multinomial", "systematic")
RELATIVE_FLOOR = 1e-6


def observation_times(m: int, dt: float, times=None) -> np.ndarray:
    """
    Model times of m observations: the given times, or the uniform grid k dt.

    Given times must start at 0 and increase strictly.
    """
    if times is None:
        if dt <= 0:
            raise DomainError("dt must be positive")
        return np.arange(m) * dt
    t = np.asarray(times, dtype=float)
    if t.shape != (m,):
        raise DomainError(f"need {m} observation times, got shape {t.shape}")
    if t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise DomainError("observation times must start at 0 and increase strictly")
    return t


def increment_covariance(prices) -> np.ndarray:
    """Sample covariance of one-step price increments."""
    prices = np.asarray(prices, dtype=float)
    if prices.ndim != 2 or prices.shape[0] < 3:
        raise DomainError("need at least two increments of a vector price series")
    return np.atleast_2d(np.cov(np.diff(prices, axis=0), rowvar=False))


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def resample_indices(weights, rng: np.random.Generator, scheme: str = "multinomial") -> np.ndarray:
    """
    Draw len(weights) indices with replacement according to the weights.

    Args:
        weights (array_like): Normalized weights
        rng (numpy.random.Generator): Random stream
        scheme (str): 'multinomial' or 'systematic'

    Returns:
        numpy.ndarray: particle indices
    """
    w = np.asarray(weights, dtype=float)
    size = w.size
    if scheme == "multinomial":
        return rng.choice(size, size=size, p=w)
    if scheme == "systematic":
        cumulative = np.cumsum(w)
        cumulative[-1] = 1.0
        positions = (rng.uniform() + np.arange(size)) / size
        return np.searchsorted(cumulative, positions, side="right")
    raise DomainError(f"unknown resampling scheme {scheme!r}; expected one of {RESAMPLING_SCHEMES}")


def _normalize_log(log_w: np.ndarray, stage: str, t: float) -> np.ndarray:
    finite = np.isfinite(log_w)
    if not np.any(finite):
        raise WeightCollapse(f"all {stage} weights vanished at t={t}", {"t": t, "stage": stage})
    log_w = np.where(finite, log_w, -np.inf)
    return np.exp(log_w - logsumexp(log_w))


def _gaussian(cov):
    return stats.multivariate_normal(mean=None, cov=np.asarray(cov, dtype=float))


def _first_stage(model: ForwardDensityModel, cloud: ParticleCloud, y_next, t_next: float, lik1):
    log_lik1 = np.atleast_1d(lik1.logpdf(np.asarray(y_next, dtype=float) - model.prices(cloud.particles, t_next)))
    with np.errstate(divide="ignore"):
        log_lambda = log_lik1 + np.log(cloud.normalized_weights())
    return log_lik1, _normalize_log(log_lambda, "first-stage", t_next)


def first_stage_weights(spec: MixtureSpec, cloud: ParticleCloud, y_next, t_next: float, sigma1) -> np.ndarray:
    """Look-ahead weights lambda_j proportional to N(y_next; h_t(alpha_j), sigma1)."""
    model = ForwardDensityModel(spec)
    return _first_stage(model, cloud, y_next, clamp_time(t_next, spec.maturity), _gaussian(sigma1))[1]


def _propagate(model: ForwardDensityModel, cloud: ParticleCloud, y_next, t_next: float, lik1, lik2,
               rng: np.random.Generator, scheme: str) -> Tuple[np.ndarray, np.ndarray]:
    """Steps two to five: first-stage weights, resampling, diffusion, second-stage weights."""
    y_next = np.asarray(y_next, dtype=float)
    dt = t_next - cloud.t
    if dt <= 0:
        raise DomainError(f"observation time {t_next} must follow the cloud time {cloud.t}")

    log_lik1, lam = _first_stage(model, cloud, y_next, t_next, lik1)

    parents = resample_indices(lam, rng, scheme)
    moved = cloud.particles[parents] + np.sqrt(dt) * rng.standard_normal(cloud.particles.shape)

    log_w = np.atleast_1d(lik2.logpdf(y_next - model.prices(moved, t_next))) - log_lik1[parents]
    return moved, _normalize_log(log_w, "second-stage", t_next)


def apf_step(spec: MixtureSpec, cloud: ParticleCloud, y_next, t_next: float, sigma1, sigma2,
             rng: np.random.Generator, scheme: str = "multinomial") -> ParticleCloud:
    """
    One auxiliary particle filter step from cloud.t to t_next.

    First-stage Gaussian weights with covariance sigma1 at the parents, a
    resampling of parents, a diffusion by sqrt(dt) Z, second-stage weights
    (sigma2 likelihood at the moved particle over the sigma1 likelihood at its
    parent) and a final resampling.

    Raises:
        WeightCollapse: no finite weight at either stage
    """
    model = ForwardDensityModel(spec)
    t_next = clamp_time(t_next, spec.maturity)
    moved, pi = _propagate(model, cloud, y_next, t_next, _gaussian(sigma1), _gaussian(sigma2), rng, scheme)
    survivors = resample_indices(pi, rng, scheme)
    return ParticleCloud(t=t_next, particles=moved[survivors], stream_id=cloud.stream_id + 1,
                         ess=effective_sample_size(pi))


def filtered_prices(spec: MixtureSpec, cloud: ParticleCloud) -> np.ndarray:
    """Weighted average of the price map over the particles."""
    model = ForwardDensityModel(spec)
    return cloud.normalized_weights() @ model.prices(cloud.particles, cloud.t)


def filtered_smile(spec: MixtureSpec, cloud: ParticleCloud, strikes: Sequence[float],
                   year_fraction: Optional[float] = None) -> SmileSnapshot:
    """
    Implied volatilities of the particle-averaged model call prices.

    Args:
        spec (MixtureSpec): Calibrated model
        cloud (ParticleCloud): Filter cloud at time t < T
        strikes (sequence): Strike grid
        year_fraction (float): Calendar years per unit of model time; vols are quoted
            per model time unit when omitted

    Returns:
        SmileSnapshot: vols per strike, NaN and listed as failures where inversion fails
    """
    model = ForwardDensityModel(spec)
    strikes = np.asarray(strikes, dtype=float)
    if np.any(strikes <= 0):
        raise DomainError("smile strikes must be positive")
    t = cloud.t
    w = cloud.normalized_weights()

    p = model.weights(cloud.particles[:, :2], t)
    xt = model.spot_factors(cloud.particles[:, 2], t)
    forward = float(w @ np.sum(p * xt, axis=1))
    tau_model = spec.maturity - t

    component_calls = black_forward_price(xt[:, None, :], model.sigma, strikes[:, None], tau_model)
    calls = w @ np.einsum("rk,rsk->rs", p, component_calls)

    tau = tau_model * (year_fraction if year_fraction is not None else 1.0)
    vols = np.full(strikes.size, np.nan)
    failures: List[float] = []
    for i, (k, c) in enumerate(zip(strikes, calls)):
        try:
            vols[i] = implied_vol(forward, float(k), tau, float(c))
        except NoSolution:
            failures.append(float(k))
    if failures:
        logger.warning(f"Smile at t={t}: no implied volatility at strikes {failures}")
    return SmileSnapshot(t=t, forward=forward, strikes=strikes, vols=vols, failures=failures)


def linearized_track(spec: MixtureSpec, prices, dt: float, condition_limit: float = CONDITION_LIMIT,
                     strict: bool = False, times=None) -> TrackResult:
    """
    Driver estimates from the local linear inverse of the price map.

    x_{k+1} = x_k + [h'_{t_{k+1}}(x_k)]^{-1} (y_{k+1} - y_k) with x_0 = 0. Steps
    whose Jacobian condition number exceeds ``condition_limit`` are flagged and
    carry the previous estimate forward. Observations sit at ``times`` when
    given and on the grid k dt otherwise.

    Raises:
        SingularJacobian: on the first singular step when ``strict`` is set
    """
    model = ForwardDensityModel(spec)
    y = np.asarray(prices, dtype=float)
    m, dim = y.shape
    times = observation_times(m, dt, times)

    initial = model.prices(np.zeros(dim), 0.0)[0]
    gap = np.max(np.abs(y[0] - initial) / np.abs(initial))
    if gap > 1e-6:
        logger.warning(f"Series starts {gap:.2e} (relative) away from the model's t=0 prices")

    estimates = np.zeros((m, dim))
    conditions = np.empty(m)
    flags = np.zeros(m, dtype=bool)
    conditions[0] = np.linalg.cond(model.jacobian(np.zeros(dim), 0.0)[0])

    for k in range(m - 1):
        t_next = clamp_time(times[k + 1], spec.maturity)
        jac = model.jacobian(estimates[k], t_next)[0]
        cond = float(np.linalg.cond(jac))
        conditions[k + 1] = cond
        if not np.isfinite(cond) or cond > condition_limit:
            flags[k + 1] = True
            estimates[k + 1] = estimates[k]
            error = SingularJacobian(f"Jacobian condition {cond:.3e} at t={t_next}", {"t": t_next, "condition": cond})
            if strict:
                raise error
            logger.warning(f"{error.message}; estimate carried forward")
            continue
        estimates[k + 1] = estimates[k] + np.linalg.solve(jac, y[k + 1] - y[k])

    reconstructed = np.vstack([
        model.prices(estimates[k], clamp_time(times[k], spec.maturity))[0] for k in range(m)
    ])
    logger.info(f"Linearization tracked {m} observations, {int(flags.sum())} singular steps")
    return TrackResult(method="linear", times=times, estimates=estimates, prices=reconstructed,
                       diagnostic_name="condition_number", diagnostics=conditions, flags=flags)


def apf_run(spec: MixtureSpec, prices, dt: float, n_particles: int, sigma1, sigma2=None, seed: int = 0,
            scheme: str = "multinomial", progress: bool = False,
            times=None) -> Tuple[List[ParticleCloud], TrackResult]:
    """
    Run the auxiliary particle filter over an observation series.

    Particles start at the origin. Step k draws from the stream (seed, k), so a
    run is reproducible for fixed (seed, n_particles, series). Observation
    times default to the grid k dt.

    Returns:
        tuple: (per-step weighted clouds before final resampling, TrackResult)
    """
    if n_particles < 1:
        raise DomainError("the filter needs at least one particle")
    model = ForwardDensityModel(spec)
    y = np.asarray(prices, dtype=float)
    m, dim = y.shape
    times = observation_times(m, dt, times)
    lik1 = _gaussian(sigma1)
    lik2 = _gaussian(sigma1 if sigma2 is None else sigma2)
    streams = SeedStreams(seed)

    cloud = ParticleCloud(t=0.0, particles=np.zeros((n_particles, dim)), ess=float(n_particles))
    history = [cloud]
    estimates = np.zeros((m, dim))
    filtered = np.zeros((m, dim))
    ess = np.empty(m)
    driver_sd = np.zeros((m, dim))
    price_sd = np.zeros((m, dim))

    filtered[0] = model.prices(np.zeros(dim), 0.0)[0]
    ess[0] = n_particles

    for k in tqdm(range(1, m), desc="filter steps", disable=not progress):
        rng = streams.generator(SeedStreams.FILTER, k)
        t_next = clamp_time(times[k], spec.maturity)
        moved, pi = _propagate(model, cloud, y[k], t_next, lik1, lik2, rng, scheme)
        weighted = ParticleCloud(t=t_next, particles=moved, weights=pi, stream_id=k,
                                 ess=effective_sample_size(pi))
        history.append(weighted)

        particle_prices = model.prices(moved, t_next)
        estimates[k] = weighted.mean()
        driver_sd[k] = weighted.std()
        filtered[k] = pi @ particle_prices
        price_sd[k] = np.sqrt(pi @ (particle_prices - filtered[k]) ** 2)
        ess[k] = weighted.ess
        logger.debug(f"step {k}: ESS {ess[k]:.1f}")

        survivors = resample_indices(pi, rng, scheme)
        cloud = ParticleCloud(t=t_next, particles=moved[survivors], stream_id=k, ess=weighted.ess)

    logger.info(f"Particle filter ran {m - 1} steps with R={n_particles}, min ESS {ess.min():.1f}")
    result = TrackResult(
        method="filter", times=times, estimates=estimates, prices=filtered,
        diagnostic_name="ess", diagnostics=ess,
        bands={"driver_sd": driver_sd, "price_sd": price_sd},
    )
    return history, result


def tracking_errors(reconstructed, truth) -> TrackingErrors:
    """Per-contract accuracy of reconstructed prices."""
    f = np.asarray(reconstructed, dtype=float)
    y = np.asarray(truth, dtype=float)
    if f.shape != y.shape:
        raise DomainError("reconstructed and true series must have the same shape")
    err = f - y
    mae = np.mean(np.abs(err), axis=0)
    # relative errors skip prices below RELATIVE_FLOOR of the contract's largest price
    scale = np.max(np.abs(y), axis=0)
    kept = np.abs(y) > RELATIVE_FLOOR * scale
    with np.errstate(invalid="ignore", divide="ignore"):
        relative = np.where(kept, err / y, np.nan)
    counts = np.count_nonzero(kept, axis=0)
    relative_rmse = np.sqrt(np.nansum(relative ** 2, axis=0) / np.maximum(counts, 1))
    relative_rmse = np.where(counts > 0, relative_rmse, np.nan)
    return TrackingErrors(
        mae=mae,
        rmse=np.sqrt(np.mean(err ** 2, axis=0)),
        normalized_mae=mae / np.mean(np.abs(y), axis=0),
        relative_rmse=relative_rmse,
        increment_relative_mae=mae / np.mean(np.abs(np.diff(y, axis=0)), axis=0),
    )
