import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochwri.grid_model import (
    Acquisition,
    GaussianLensSpec,
    Grid2D,
    SlownessSqModel,
    VelocityModel,
    build_gaussian_lens,
    build_transmission_acquisition,
    model_relative_error,
    slowness_sq_to_velocity,
    velocity_to_slowness_sq,
)


@pytest.fixture
def grid():
    return Grid2D(101, 101, 10.0, 10.0)


def test_grid_invariants():
    with pytest.raises(ValueError):
        Grid2D(2, 5, 1.0, 1.0)
    with pytest.raises(ValueError):
        Grid2D(5, 5, 0.0, 1.0)


def test_lens_zero_amplitude_is_uniform(grid):
    vm = build_gaussian_lens(GaussianLensSpec(1800.0, 0.0, None, 100.0), grid)
    assert np.all(vm.v == 1800.0)


def test_lens_center_value(grid):
    vm = build_gaussian_lens(GaussianLensSpec(2000.0, -400.0, None, 150.0), grid)
    assert vm.v[50, 50] == 2000.0 - 400.0


def test_lens_at_one_radius(grid):
    spec = GaussianLensSpec(2000.0, -400.0, (500.0, 500.0), 150.0)
    vm = build_gaussian_lens(spec, grid)
    # node (65, 50) sits exactly 150 m from the center
    expected = 2000.0 + (-400.0) * math.exp(-0.5)
    assert vm.v[65, 50] == pytest.approx(expected, rel=1e-15)


def test_lens_mirror_symmetry(grid):
    vm = build_gaussian_lens(GaussianLensSpec(2000.0, -400.0, None, 150.0), grid)
    np.testing.assert_array_equal(vm.v, vm.v[::-1, :])
    np.testing.assert_array_equal(vm.v, vm.v[:, ::-1])


def test_lens_rejects_nonpositive_velocity():
    with pytest.raises(ValueError):
        GaussianLensSpec(1000.0, -1000.0, None, 50.0)


def test_slowness_scalar_values(grid):
    for v, m in [(1000.0, 1e-6), (2000.0, 2.5e-7)]:
        sm = velocity_to_slowness_sq(VelocityModel(grid, np.full(grid.shape, v)))
        np.testing.assert_allclose(sm.m, m, rtol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 5), elements=st.floats(100.0, 1e4)))
def test_slowness_round_trip(v):
    g = Grid2D(4, 5, 1.0, 1.0)
    back = slowness_sq_to_velocity(velocity_to_slowness_sq(VelocityModel(g, v)))
    np.testing.assert_allclose(back.v, v, rtol=1e-14)


def test_models_are_immutable(grid):
    sm = SlownessSqModel(grid, np.ones(grid.shape))
    with pytest.raises(ValueError):
        sm.m[0, 0] = 2.0


def test_experiment_acquisition_counts(grid):
    acq = build_transmission_acquisition(grid, 50, 201, inset=20)
    assert (acq.n_s, acq.n_r) == (50, 201)
    # sources on the left interior edge, receivers on the right one
    assert np.all(acq.sources[:, 0] == 210.0)
    assert np.all(acq.receivers[:, 0] == 790.0)


def test_single_pair_at_midpoints(grid):
    acq = build_transmission_acquisition(grid, 1, 1)
    assert acq.sources[0, 1] == 500.0 and acq.receivers[0, 1] == 500.0


def test_two_sources_rows_1_and_99(grid):
    acq = build_transmission_acquisition(grid, 2, 3)
    # band runs from node 1 to node 99; endpoints are used for n = 2
    np.testing.assert_array_equal(acq.sources[:, 1] / grid.dz, [1, 99])


def test_positions_on_nodes(grid):
    acq = build_transmission_acquisition(grid, 7, 13, inset=5)
    for pts in (acq.sources, acq.receivers):
        assert np.all(np.mod(pts / grid.dx, 1.0) == 0.0)


def test_acquisition_too_small():
    with pytest.raises(ValueError):
        build_transmission_acquisition(Grid2D(5, 5, 1.0, 1.0), 2, 2, inset=2)
    with pytest.raises(ValueError):
        Acquisition(Grid2D(5, 5, 1.0, 1.0), np.array([[10.0, 1.0]]), np.array([[1.0, 1.0]]))


def test_relative_error(grid, rng):
    mt = SlownessSqModel(grid, 1.0 + rng.random(grid.shape))
    assert model_relative_error(mt, mt) == 0.0
    assert model_relative_error(SlownessSqModel(grid, 2 * mt.m), mt) == pytest.approx(1.0)
    pert = SlownessSqModel(grid, mt.m * (1 + 0.1 * rng.random(grid.shape)))
    num = sum((a - b) ** 2 for a, b in zip(pert.m.ravel(), mt.m.ravel()))
    den = sum(b ** 2 for b in mt.m.ravel())
    assert model_relative_error(pert, mt) == pytest.approx(math.sqrt(num / den), rel=1e-12)
    with pytest.raises(ValueError):
        model_relative_error(mt, SlownessSqModel(Grid2D(4, 4, 1.0, 1.0), np.ones((4, 4))))
