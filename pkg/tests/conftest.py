import numpy as np
import pytest

from tlfno.grid import SoundSpeedField, Scenario, SynthConfig, build_grid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    return build_grid(32, 24, 2000.0, 600.0)


@pytest.fixture
def homogeneous(small_grid):
    g = small_grid
    ssf = SoundSpeedField(g, np.full(g.shape, 1500.0), np.full(g.n_range, 600.0))
    return Scenario(ssf, source_depth=50.0, source_freq=200.0)


@pytest.fixture
def synth_cfg():
    return SynthConfig(seed=3, n_samples=6, grid=build_grid(32, 24, 3000.0, 800.0))


# ----------------------------------------------------------- acceptance lines

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one result line per acceptance criterion."""
    def record(number, title, ok, detail):
        line = f"criterion {number:2d} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
        _ACCEPTANCE[number] = line
        print(line, flush=True)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])
