import numpy as np
import pytest

from pktm import (
    GridSpec,
    KernelParams,
    MigrationJob,
    OffsetBinning,
    RickerWavelet,
    Scatterer,
    Survey,
    VelocityModel,
    WeightMode,
    make_acquisition,
    synth_survey,
)


@pytest.fixture
def spill_dir(tmp_path):
    d = tmp_path / "spill"
    d.mkdir()
    return str(d)


@pytest.fixture(scope="session")
def small_binning():
    return OffsetBinning((0.0, 400.0, 800.0, 1600.0))


@pytest.fixture(scope="session")
def small_grid(small_binning):
    return GridSpec(x_min=0.0, dx=20.0, nx=51, tau_min=0.0, dtau=0.004,
                    ntau=201, n_offset_bins=small_binning.n_bins)


@pytest.fixture(scope="session")
def small_job(small_grid, small_binning):
    return MigrationJob(
        small_grid,
        VelocityModel.constant(2000.0),
        KernelParams(aperture=400.0, weight_mode=WeightMode.OBLIQUITY),
        small_binning,
    )


@pytest.fixture(scope="session")
def small_survey(small_binning):
    """8 x 8 split-spread survey over one diffractor at (450 m, 0.5 s)."""
    headers = make_acquisition(8, 50.0, 100.0, 8, 100.0, 100.0,
                               0.0, 0.004, 301)
    return synth_survey(headers, [Scatterer(450.0, 0.5, 1.0)],
                        VelocityModel.constant(2000.0), RickerWavelet(25.0),
                        small_binning)


@pytest.fixture
def rng():
    return np.random.default_rng(1729)


def random_survey(rng, binning, n_traces=20, n_samples=160):
    """Incoherent random data for operator tests."""
    from pktm import Trace, TraceHeader

    traces = []
    for i in range(n_traces):
        sx = float(rng.uniform(0.0, 1000.0))
        rx = sx + float(rng.uniform(5.0, 1500.0))
        header = TraceHeader(i, sx, rx, 0.0, 0.004, n_samples)
        traces.append(Trace(header, rng.standard_normal(n_samples)))
    return Survey(traces, binning)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance criterion verdicts after the test summary."""
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
