"""Shared fixtures: the published index setups, a calibrated two-option model and log capture."""

import json
from pathlib import Path

import numpy as np
import pytest
from loguru import logger

from engines.static_calibration import calibrate_mixture
from models.config_models import RunConfig
from models.mixture_models import TWO_PI, MixtureSpec
from presets.parameter_sets import SP500_N2, SP500_N5
from utils.logging_utils import WarningCollector

ROOT = Path(__file__).resolve().parents[1]
SAMPLE_QUOTES = ROOT / "data" / "sample_quotes.csv"
CONFIG_DIR = ROOT / "config"

# exact weights of the two-option setup on a unit model horizon
P0_N2 = np.array([0.28383, 0.16482, 0.47816, 0.07319])


@pytest.fixture
def snap_n2():
    return SP500_N2.snapshot()


@pytest.fixture
def snap_n5():
    return SP500_N5.snapshot()


@pytest.fixture(scope="session")
def spec_n2() -> MixtureSpec:
    return calibrate_mixture(SP500_N2.snapshot(), SP500_N2.grid, SP500_N2.sigma, SP500_N2.model_maturity)


@pytest.fixture
def single_component_spec() -> MixtureSpec:
    """All mass on the component at 1200; its cone is the whole plane."""
    return MixtureSpec(
        strikes=[1150.0, 1200.0],
        grid=[950.0, 1150.0, 1200.0, 1300.0],
        sigma=[0.18, 0.08, 0.06, 0.03],
        p0=[0.0, 0.0, 1.0, 0.0],
        maturity=1.0,
        cone_angles=[0.0, 0.0, 0.0, TWO_PI],
        cone_widths=[0.0, 0.0, TWO_PI, 0.0],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20111122)


@pytest.fixture
def warnings_sink():
    """Collects loguru WARNING records emitted during a test."""
    collector = WarningCollector()
    handler = logger.add(collector, level="WARNING", format="{message}")
    yield collector
    logger.remove(handler)


@pytest.fixture
def n2_config(tmp_path) -> RunConfig:
    raw = json.loads((CONFIG_DIR / "sp500_n2.json").read_text())
    raw["market"]["quotes_path"] = str(SAMPLE_QUOTES)
    raw["output"]["directory"] = str(tmp_path / "out")
    return RunConfig.model_validate(raw)


@pytest.fixture
def write_config(tmp_path):
    """Writes a config dict to a file and returns the path."""
    def _write(raw, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(raw))
        return path
    return _write
