"""Pytest configuration and fixtures for tdfit tests."""
import numpy as np
import pytest
from click.testing import CliRunner

from tdfit.frontend import NoiseModel, ProbeConfig, simulate_snapshots
from tdfit.model import BandPlan, MultipathChannel

# 20 MHz bands of 16 subcarriers: T_s = 50 ns, N*T_s = 800 ns
BANDWIDTH = 20e6
T_S = 1.0 / BANDWIDTH

SMALL_SCENARIO = """\
schema: 1
name: small
delays_ns: [100.0, 275.0]
band_centers_mhz: [100, 120, 150]
bandwidth_mhz: 20
subcarriers: 16
cp_fraction: 0.5
axis: snr
snr_db: [10, 20]
snapshots: 4
trials: 3
estimators: [proposed, esprit, mresprit, mimusic]
master_seed: 7
"""


@pytest.fixture
def runner():
    """Provide a Click CLI test runner."""
    return CliRunner()


@pytest.fixture
def tdfit_dir(monkeypatch, tmp_path):
    """Create a temporary TDFIT_DIR for testing."""
    path = tmp_path / ".tdfit"
    path.mkdir()
    monkeypatch.setenv("TDFIT_DIR", str(path))
    return path


@pytest.fixture
def small_plan():
    """Three bands, offsets 0, 16 and 40."""
    return BandPlan(f0=100e6, bandwidth=BANDWIDTH, n_subcarriers=16, band_offsets=[0, 16, 40])


@pytest.fixture
def single_band_plan():
    return BandPlan(f0=100e6, bandwidth=BANDWIDTH, n_subcarriers=16, band_offsets=[0])


@pytest.fixture
def desk_plan():
    """K=3 / N=64 / L=3 contiguous-plus-gap plan."""
    return BandPlan(f0=100e6, bandwidth=BANDWIDTH, n_subcarriers=64, band_offsets=[0, 64, 192])


@pytest.fixture
def two_paths():
    """Delays 2.0 and 5.5 T_s."""
    return MultipathChannel(
        gains=[1.0 + 0.0j, 0.6 * np.exp(0.7j)], delays=[2.0 * T_S, 5.5 * T_S]
    )


@pytest.fixture
def one_path():
    return MultipathChannel(gains=[0.8 * np.exp(-0.3j)], delays=[3.3 * T_S])


@pytest.fixture
def make_estimates():
    """Factory for simulated snapshots with flat RF chains."""

    def make(ch, plan, sigmas=None, snapshots=1, seed=0):
        probe = ProbeConfig.default(plan, cp_fraction=1.0)
        noise = NoiseModel.noiseless(plan) if sigmas is None else NoiseModel(sigmas)
        return simulate_snapshots(ch, plan, probe, noise, seed, snapshots)

    return make


@pytest.fixture
def scenario_file(tmp_path):
    """A small benchmark scenario on disk."""
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_SCENARIO, encoding="utf-8")
    return path
