import numpy as np
import pytest

from spectrolab.grid import ConstantCoefficients, SmoothPeriodicCoefficients, build_torus, sample_coefficients
from spectrolab.operator import assemble, eigendecompose
from spectrolab.sets import SetSpec, generate_set


def make_dec(dim, L, N, spec=None):
    grid = build_torus(dim, L, N)
    coeffs = sample_coefficients(spec or ConstantCoefficients(), grid)
    return eigendecompose(assemble(grid, coeffs))


@pytest.fixture(scope="session")
def dec_flat():
    """1-D, kappa = 1, g = 1, L = 2 pi, N = 64."""
    return make_dec(1, 2 * np.pi, 64)


@pytest.fixture(scope="session")
def dec_var():
    """1-D variable coefficients on L = 4, N = 64."""
    return make_dec(1, 4.0, 64, SmoothPeriodicCoefficients(kappa_mean=2.0, kappa_amp=0.5, metric_amp=0.3))


@pytest.fixture(scope="session")
def dec_2d():
    return make_dec(2, 2.0, 12, SmoothPeriodicCoefficients(kappa_mean=2.0, kappa_amp=0.5, metric_amp=0.2, metric_off=0.1))


@pytest.fixture(scope="session")
def half_flat(dec_flat):
    return generate_set(SetSpec("interval"), dec_flat.grid)


@pytest.fixture(scope="session")
def sparse_var(dec_var):
    g = dec_var.grid
    return generate_set(SetSpec("random-density", {"delta": 0.3 * g.ball_measure(0.5), "R": 0.5, "seed": 2,
                                                   "blob_radius": 0.05}), g)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
