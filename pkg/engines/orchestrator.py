# orchestrator.py - Runs one command end to end and records it in a manifest

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from engines.black_pricing import (
    black_forward_price,
    black_implied_density,
    fit_smile,
    implied_density_from_smile,
    implied_vol,
    implied_vol_array,
)
from engines.forward_dynamics import initial_density, jacobian_det_scan
from engines.simulation import (
    density_evolution,
    martingale_check,
    observed_correlations,
    simulate_driver,
    simulate_prices,
    stylized_correlations,
)
from engines.static_calibration import (
    build_extended_system,
    calibrate_mixture,
    calibration_diagnostics,
    price_range_contains,
    price_range_extremes,
)
from engines.tracking import apf_run, filtered_smile, increment_covariance, linearized_track, tracking_errors
from models.config_models import RunConfig
from models.market_models import MarketSnapshot
from models.mixture_models import MixtureSpec
from models.tracking_models import price_columns
from utils.data_utils import ingest_quotes, restrict_snapshot
from utils.exceptions import DomainError, ForwardDensityError, MissingPair
from utils.io_utils import write_frame, write_json
from utils.logging_utils import WarningCollector
from utils.market_conventions import MarketConventions

COMMANDS = ("calibrate", "range", "simulate", "track", "smile", "density", "detscan", "correlations")
MANIFEST_NAME = "manifest.json"


@dataclass
class RunState:
    command: str
    status: str = "initialized"
    current_stage: str = "setup"
    seed: Optional[int] = None
    config: Dict = field(default_factory=dict)
    options: Dict = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    summary: Dict = field(default_factory=dict)
    warnings: List[Dict] = field(default_factory=list)
    errors: List[Dict] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


class RunOrchestrator:
    """
    Executes the commands of the toolkit against one RunConfig.

    Every run writes its artifacts and a manifest.json (config echo, seed,
    artifact list, collected warnings, errors) into the output directory.
    The manifest holds no timestamps, so identical inputs give identical files.
    """

    def __init__(self, config: RunConfig, output_dir=None):
        self.config = config
        self.output_dir = Path(output_dir or config.output.directory)
        self.state: Optional[RunState] = None
        self._snapshots: Optional[List[MarketSnapshot]] = None
        self._spec: Optional[MixtureSpec] = None
        logger.info(f"Orchestrator initialized with output directory {self.output_dir}")

    def _save_state(self):
        write_json(self.output_dir / MANIFEST_NAME, self.state.to_dict())
        logger.debug(f"Manifest saved for command {self.state.command}")

    def _stage(self, name: str):
        self.state.current_stage = name
        logger.info(f"Stage: {name}")

    def _write_frame(self, name: str, frame: pd.DataFrame):
        write_frame(self.output_dir / name, frame)
        self.state.artifacts.append(name)

    def _write_json(self, name: str, payload: Dict[str, Any]):
        write_json(self.output_dir / name, payload)
        self.state.artifacts.append(name)

    def run(self, command: str, method: Optional[str] = None, seed: Optional[int] = None,
            times: Optional[List[float]] = None) -> Dict:
        """
        Run one command.

        Args:
            command (str): One of COMMANDS
            method (str): Tracking method for 'track'
            seed (int): Overrides the configured seed of the command
            times (list): Smile days, density times or the scan time

        Returns:
            dict: the final run state
        """
        if command not in COMMANDS:
            raise DomainError(f"unknown command {command!r}")
        options = {"method": method, "seed": seed, "times": times}
        self.state = RunState(command=command, config=self.config.model_dump(mode="json"),
                              options={k: v for k, v in options.items() if v is not None})
        collector = WarningCollector()
        handler = logger.add(collector, level="WARNING", format="{message}")
        self.output_dir.mkdir(parents=True, exist_ok=True)
        try:
            self.state.status = "running"
            handler_fn = getattr(self, f"_run_{command}")
            self.state.summary = handler_fn(method=method, seed=seed, times=times)
            self.state.status = "completed"
            self.state.current_stage = "complete"
            logger.info(f"Command {command} completed with {len(self.state.artifacts)} artifacts")
        except Exception as e:
            logger.opt(exception=e).error(f"Command {command} failed during {self.state.current_stage}: {e}")
            self.state.status = "failed"
            if isinstance(e, ForwardDensityError):
                self.state.errors.append(e.to_dict())
            else:
                self.state.errors.append({"error": type(e).__name__, "message": str(e), "details": {}})
            raise
        finally:
            logger.remove(handler)
            self.state.warnings = list(collector.records)
            self.state.artifacts = sorted(set(self.state.artifacts))
            self._save_state()
        # warnings are filled in by the finally block
        return self.state.to_dict()

    # market data

    def snapshots(self) -> List[MarketSnapshot]:
        """All usable snapshots of the configured market, in date order."""
        if self._snapshots is None:
            market = self.config.market
            if market.uses_quotes:
                self._snapshots = ingest_quotes(market.quotes_path, market)
            else:
                tau = MarketConventions.year_fraction(market.valuation_date, market.maturity_date)
                self._snapshots = [MarketSnapshot(
                    tau=tau, rate=market.rate, forward=market.forward, strikes=list(market.strikes),
                    option_forwards=list(market.option_forwards), valuation_date=market.valuation_date,
                    source="config",
                )]
        return self._snapshots

    def _valuation_index(self) -> int:
        snaps = self.snapshots()
        target = self.config.market.valuation_date
        if target is None:
            return 0
        for i, snap in enumerate(snaps):
            if snap.valuation_date == target:
                return i
        raise MissingPair(f"no usable quotes on the valuation date {target}", {"date": str(target)})

    def _smile_fit(self, snap: MarketSnapshot):
        strikes = snap.strike_array()
        vols = implied_vol_array(snap.forward, strikes, snap.tau, np.asarray(snap.option_forwards))
        ok = np.isfinite(vols)
        if np.count_nonzero(~ok):
            logger.warning(f"No implied volatility at strikes {strikes[~ok].tolist()} on {snap.valuation_date}")
        return fit_smile(strikes[ok], vols[ok])

    def calibration_snapshot(self) -> MarketSnapshot:
        """Valuation-date snapshot at the calibration strikes, priced from quotes or from the smile."""
        market = self.config.market
        snap = self.snapshots()[self._valuation_index()]
        if market.calibration_source == "smile":
            fit = self._smile_fit(snap)
            k = np.asarray(market.strikes, dtype=float)
            prices = black_forward_price(snap.forward, fit.volatility(k), k, snap.tau)
            return snap.model_copy(update={"strikes": k.tolist(), "option_forwards": np.atleast_1d(prices).tolist(),
                                           "source": "smile"})
        return restrict_snapshot(snap, market.strikes)

    def observed_series(self) -> Tuple[List[MarketSnapshot], np.ndarray]:
        """Snapshots from the valuation date on, restricted to the calibration strikes."""
        kept = []
        for snap in self.snapshots()[self._valuation_index():]:
            try:
                kept.append(restrict_snapshot(snap, self.config.market.strikes))
            except MissingPair as e:
                logger.warning(f"Dropping {snap.valuation_date} from the series: {e.message}")
        if len(kept) < 3:
            raise MissingPair("fewer than three usable dates in the observed series")
        return kept, np.vstack([s.price_vector() for s in kept])

    def day_step(self) -> float:
        """One calendar day on the model clock."""
        snap = self.snapshots()[self._valuation_index()]
        days = MarketConventions.days_between(snap.valuation_date, self.config.market.maturity_date)
        return MarketConventions.model_time_step(self.config.model.model_maturity, days)

    def observation_times(self, snapshots: List[MarketSnapshot]) -> np.ndarray:
        """Model times of the series: calendar days since its first date times day_step()."""
        first = snapshots[0].valuation_date
        if first is None or any(s.valuation_date is None for s in snapshots):
            raise MissingPair("the observed series needs a valuation date on every snapshot")
        days = np.array([MarketConventions.days_between(first, s.valuation_date) for s in snapshots], dtype=float)
        return days * self.day_step()

    def spec(self) -> MixtureSpec:
        if self._spec is None:
            model = self.config.model
            self._spec = calibrate_mixture(self.calibration_snapshot(), self.config.grid, model.sigma,
                                           model.model_maturity, origin=model.origin)
        return self._spec

    def _dynamic_spec(self) -> MixtureSpec:
        spec = self.spec()
        if not spec.has_partition:
            raise DomainError("this command needs the two-option model with a cone partition")
        return spec

    # commands

    def _run_calibrate(self, **_) -> Dict:
        self._stage("calibration")
        model = self.config.model
        snap = self.calibration_snapshot()
        diagnostics = calibration_diagnostics(snap, self.config.grid, model.sigma, model.model_maturity,
                                              model.comparison_sigma)
        self._write_json("diagnostics.json", {"diagnostics": diagnostics, "snapshot": snap})
        spec = self.spec()
        self._write_json("mixture_spec.json", {"spec": spec, "snapshot": snap})
        return {
            "p0": spec.p0,
            "condition_number": spec.condition_number,
            "sigma_star": diagnostics.sigma_star,
            "arbitrage_passed": diagnostics.arbitrage.passed,
        }

    def _run_range(self, **_) -> Dict:
        self._stage("price_range")
        model = self.config.model
        snap = self.calibration_snapshot()
        matrix = build_extended_system(self.config.grid, model.sigma, snap.strikes, model.model_maturity)
        price_range = price_range_extremes(matrix)
        frame = pd.DataFrame(price_range.extreme_array(), columns=price_columns(snap.n))
        frame.insert(0, "sigma", model.sigma)
        frame.insert(0, "x", self.config.grid)
        frame.insert(0, "component", np.arange(1, snap.n + 3))
        self._write_frame("price_range.csv", frame)
        inside, weights = price_range_contains(price_range, snap.price_vector())
        if not inside:
            logger.warning("Snapshot prices lie outside the model price range")
        return {"contains_snapshot": inside, "barycentric_weights": weights.tolist()}

    def _run_simulate(self, seed: Optional[int] = None, **_) -> Dict:
        sim = self.config.simulation
        spec = self._dynamic_spec()
        seed = sim.seed if seed is None else seed
        self.state.seed = seed
        dt = sim.dt or self.day_step()

        self._stage("simulation")
        drivers = simulate_driver(sim.n_paths, sim.n_steps, dt, seed, dimension=spec.n + 1, horizon=spec.maturity)
        paths = simulate_prices(spec, drivers, dt, progress=self.config.output.progress)
        for i in range(min(self.config.output.saved_paths, paths.n_paths)):
            self._write_frame(f"paths/path_{i:04d}.csv", paths.path(i).to_frame())

        self._stage("stylized_facts")
        facts = stylized_correlations(spec, paths, bins=sim.histogram_bins)
        self._write_frame("correlations.csv", facts.to_frame())
        self._write_frame("correlation_histograms.csv", facts.histogram_frame())

        self._stage("martingale_check")
        report = martingale_check(spec, sim.martingale_time * spec.maturity, sim.martingale_samples, seed)
        self._write_json("martingale.json", {
            "t": report.t,
            "n_samples": report.n_samples,
            "initial": report.initial,
            "mc_mean": report.mc_mean,
            "standard_error": report.standard_error,
            "z_scores": report.z_scores,
            "weight_initial": report.weight_initial,
            "weight_mean": report.weight_mean,
            "weight_z_scores": report.weight_z_scores,
        })
        return {
            "dt": dt,
            "mean_correlations": facts.means.tolist(),
            "negative_fraction": facts.negative_fraction.tolist(),
            "dropped_paths": facts.dropped,
            "max_abs_z": float(np.max(np.abs(np.concatenate([report.z_scores, report.weight_z_scores])))),
        }

    def _truth(self, spec: MixtureSpec) -> Tuple[np.ndarray, float, np.ndarray, Optional[np.ndarray]]:
        """(observations, dt, observation times, true driver or None) for the configured tracking target."""
        settings = self.config.filter
        if settings.truth == "quotes":
            snapshots, prices = self.observed_series()
            return prices, self.day_step(), self.observation_times(snapshots), None
        dt = settings.simulated_dt
        drivers = simulate_driver(1, settings.simulated_steps, dt, settings.seed, spec.n + 1, horizon=spec.maturity)
        path = simulate_prices(spec, drivers, dt).path(0)
        return path.prices, dt, path.times, path.driver

    def _covariance(self, policy: str, spec: MixtureSpec, prices: np.ndarray, dt: float) -> np.ndarray:
        if policy == "observed-increments":
            return increment_covariance(prices)
        # an independent model path of the same length; path 0 of this seed is the simulated truth
        drivers = simulate_driver(2, prices.shape[0] - 1, dt, self.config.filter.seed, spec.n + 1,
                                  horizon=spec.maturity)
        return increment_covariance(simulate_prices(spec, drivers[1:], dt).prices[0])

    def _filter(self, spec: MixtureSpec, prices: np.ndarray, dt: float, times: np.ndarray, seed: int):
        settings = self.config.filter
        sigma1 = self._covariance(settings.sigma1_policy, spec, prices, dt)
        sigma2 = sigma1 if settings.sigma2_policy == "same" else self._covariance(settings.sigma2_policy, spec, prices, dt)
        return apf_run(spec, prices, dt, settings.n_particles, sigma1, sigma2, seed=seed,
                       scheme=settings.scheme, progress=self.config.output.progress, times=times)

    def _run_track(self, method: Optional[str] = None, seed: Optional[int] = None, **_) -> Dict:
        settings = self.config.filter
        method = method or settings.method
        seed = settings.seed if seed is None else seed
        self.state.seed = seed
        spec = self._dynamic_spec()

        self._stage("observations")
        prices, dt, times, true_driver = self._truth(spec)

        self._stage(f"tracking_{method}")
        if method == "linear":
            result = linearized_track(spec, prices, dt, condition_limit=settings.condition_limit, times=times)
        elif method == "filter":
            _, result = self._filter(spec, prices, dt, times, seed)
        else:
            raise DomainError(f"unknown tracking method {method!r}")

        frame = result.to_frame()
        for name, col in zip(price_columns(spec.n), prices.T):
            frame[f"observed_{name}"] = col
        self._write_frame(f"track_{method}.csv", frame)

        errors = tracking_errors(result.prices, prices)
        summary = {
            "method": method,
            "seed": seed,
            "dt": dt,
            "steps": int(prices.shape[0] - 1),
            "last_time": float(times[-1]),
            "n_particles": settings.n_particles if method == "filter" else None,
            "errors": errors.to_dict(),
            "flagged_steps": int(np.count_nonzero(result.flags)),
        }
        if true_driver is not None:
            summary["driver_rmse"] = np.sqrt(np.mean((result.estimates - true_driver) ** 2, axis=0)).tolist()
        self._write_json(f"track_{method}.json", summary)
        return summary

    def _run_smile(self, seed: Optional[int] = None, times: Optional[List[float]] = None, **_) -> Dict:
        settings = self.config.filter
        seed = settings.seed if seed is None else seed
        self.state.seed = seed
        spec = self._dynamic_spec()
        days = [int(d) for d in (times if times is not None else self.config.output.smile_days)]

        self._stage("filter")
        prices, dt, times, _ = self._truth(spec)
        history, _ = self._filter(spec, prices, dt, times, seed)

        self._stage("smiles")
        snap = self.calibration_snapshot()
        year_fraction = snap.tau / spec.maturity
        day_step = self.day_step()
        last_day = times[-1] / day_step
        failures, matched = {}, {}
        for day in days:
            if day < 0 or day > last_day + 1e-9:
                logger.warning(f"Smile day {day} is outside the filtered series ending on day {last_day:g}")
                continue
            # the latest observation on or before the requested calendar day
            index = int(np.searchsorted(times, day * day_step * (1.0 + 1e-9), side="right")) - 1
            observed_day = times[index] / day_step
            if not np.isclose(observed_day, day):
                logger.info(f"Smile day {day} has no observation; using day {observed_day:g}")
            smile = filtered_smile(spec, history[index], self.config.output.smile_strikes, year_fraction=year_fraction)
            self._write_frame(f"smiles/smile_day{day:03d}.csv", smile.to_frame())
            failures[str(day)] = smile.failures
            matched[str(day)] = float(observed_day)
        return {"seed": seed, "days": days, "observed_days": matched, "failures": failures}

    def _run_density(self, times: Optional[List[float]] = None, **_) -> Dict:
        out = self.config.output
        grid = np.linspace(out.density_low, out.density_high, out.density_points)
        spec = self.spec()
        snap = self.calibration_snapshot()
        frame = pd.DataFrame({"level": grid})

        self._stage("model_density")
        times = list(times if times is not None else out.density_times)
        if spec.has_partition:
            sim = self.config.simulation
            dt = sim.dt or self.day_step()
            steps = [int(round(t / dt)) for t in times]
            drivers = simulate_driver(1, max(max(steps), 1), dt, sim.seed, spec.n + 1, horizon=spec.maturity)
            path = simulate_prices(spec, drivers, dt).path(0)
            densities = density_evolution(spec, path, [path.times[s] for s in steps], grid)
            for s, row in zip(steps, densities):
                frame[f"model_t{path.times[s]:.6f}"] = row
        else:
            if any(t != 0 for t in times):
                logger.warning("Only the t = 0 density is available without a cone partition")
            frame["model_t0.000000"] = initial_density(spec, grid)

        self._stage("comparison_densities")
        atm = int(np.argmin(np.abs(snap.strike_array() - snap.forward)))
        atm_vol = implied_vol(snap.forward, snap.strikes[atm], snap.tau, snap.option_forwards[atm])
        frame["black"] = black_implied_density(snap.forward, atm_vol, snap.discount, grid)
        full = self.snapshots()[self._valuation_index()]
        try:
            fit = self._smile_fit(full)
            frame["smile"] = implied_density_from_smile(fit, full.forward, full.discount, grid)
        except ForwardDensityError as e:
            logger.warning(f"No smile-implied density: {e.message}")
            frame["smile"] = np.nan
        self._write_frame("density.csv", frame)
        return {"times": times, "black_volatility": atm_vol}

    def _run_detscan(self, times: Optional[List[float]] = None, **_) -> Dict:
        out = self.config.output
        spec = self._dynamic_spec()
        t = float(times[0]) if times else out.detscan_time
        axis = np.linspace(-out.detscan_range, out.detscan_range, out.detscan_points)

        self._stage("determinant_scan")
        scan = jacobian_det_scan(spec, t, axis, axis, b=0.0)
        self._write_frame("detscan.csv", scan.to_frame())
        cells = scan.zero_cells()
        return {"t": t, "sign_change_cells": int(len(cells))}

    def _run_correlations(self, **_) -> Dict:
        self._stage("observed_correlations")
        snapshots, _ = self.observed_series()
        result = observed_correlations(snapshots, self.config.market.strikes)
        payload = {"correlations": {f"{k:g}": v for k, v in result.items()}, "dates": len(snapshots)}
        self._write_json("observed_correlations.json", payload)
        return payload
