import math
from dataclasses import dataclass

import numpy as np
import pytest

from stochwri.covariance import (
    DataCovariance,
    SourceCovarianceSpec,
    calibrate_sigma_d,
    variance_fields,
)
from stochwri.grid_model import (
    GaussianLensSpec,
    Grid2D,
    build_gaussian_lens,
    build_transmission_acquisition,
    homogeneous_model,
    velocity_to_slowness_sq,
)
from stochwri.helmholtz import Sponge, assemble, factorize, forward, point_sources


@dataclass
class SmallProblem:
    grid: object
    sponge: object
    acq: object
    m_true: object
    m0: object
    omega: float
    q: np.ndarray
    d: np.ndarray
    fields: object
    sigma_d: DataCovariance


def make_small_problem(n=21, n_s=3, n_r=11, width=4, freq=15.0, alpha=1.0):
    grid = Grid2D(n, n, 10.0, 10.0)
    sponge = Sponge(width, 2.0)
    acq = build_transmission_acquisition(grid, n_s, n_r, inset=width)
    m_true = velocity_to_slowness_sq(build_gaussian_lens(
        GaussianLensSpec(2000.0, -300.0, None, 40.0), grid))
    m0 = velocity_to_slowness_sq(homogeneous_model(grid, 2000.0))
    omega = 2 * math.pi * freq
    q = point_sources(acq)
    d = forward(m_true, omega, q, acq, sponge)
    fields = variance_fields(SourceCovarianceSpec(delta=10.0, alpha=alpha), acq, sponge)
    sigma_d = calibrate_sigma_d(factorize(assemble(m0, omega, sponge)), acq, fields)
    return SmallProblem(grid, sponge, acq, m_true, m0, omega, q, d, fields, sigma_d)


@pytest.fixture(scope="session")
def small():
    return make_small_problem()


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def report_criterion(number: int, passed: bool, detail: str):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
