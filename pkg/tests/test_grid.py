import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semigroup_lab.core.errors import GridMismatchError
from semigroup_lab.core.grid import (
    Grid,
    GridFunction,
    NormKind,
    gradient,
    lp_norm,
    modulus_and_gradient,
    ouhabaz_projection,
    pairing,
    positive_negative_parts,
)

GRID = Grid.from_box([(-1.0, 1.0)], 8)
GRID_2D = Grid.from_box([(0.0, 1.0), (0.0, 2.0)], (4, 5))

values_1d = arrays(np.float64, (8, 2), elements=st.floats(-10, 10, allow_nan=False, allow_infinity=False))


def test_spacing_and_points():
    grid = Grid.from_box([(-4.0, 4.0)], 7)
    assert grid.spacing[0] == pytest.approx(1.0)
    assert np.allclose(grid.points()[:, 0], np.arange(-3.0, 4.0))
    assert grid.cell_volume == pytest.approx(1.0)
    assert grid.unknowns(3) == 21


def test_last_axis_runs_fastest():
    points = GRID_2D.points()
    assert points.shape == (20, 2)
    assert points[0, 0] == points[1, 0]
    assert points[1, 1] > points[0, 1]
    assert points[5, 0] > points[4, 0]


def test_refined_grid_contains_old_nodes():
    fine = GRID_2D.refined()
    assert fine.n == (9, 11)
    old = {tuple(np.round(p, 12)) for p in GRID_2D.points()}
    new = {tuple(np.round(p, 12)) for p in fine.points()}
    assert old <= new


@pytest.mark.parametrize('kwargs', [
    dict(box=[(0.0, 1.0)], n=2),
    dict(box=[(1.0, 0.0)], n=5),
    dict(box=[(0.0, 1.0)] * 3, n=5),
])
def test_invalid_grids(kwargs):
    with pytest.raises(ValueError):
        Grid.from_box(kwargs['box'], kwargs['n'])


def test_norms_of_constant():
    f = GridFunction(GRID, np.ones((8, 1)))
    h = GRID.spacing[0]
    assert lp_norm(f, np.inf) == 1.0
    assert lp_norm(f, 2) == pytest.approx(np.sqrt(8 * h))
    assert lp_norm(f, NormKind(2.0)) == pytest.approx(np.sqrt(8 * h))


def test_norm_kind_dual():
    assert NormKind(2.0).dual == pytest.approx(2.0)
    assert NormKind(4.0).dual == pytest.approx(4.0 / 3.0)
    assert NormKind(np.inf).dual == 1.0
    with pytest.raises(ValueError):
        NormKind(1.0)


@seed(7)
@settings(max_examples=50, deadline=None)
@given(values_1d, st.sampled_from([2.0, 3.0, 4.0, 8.0]))
def test_sup_norm_bounded_by_scaled_lp_norm(values, p):
    f = GridFunction(GRID, values)
    bound = GRID.cell_volume ** (-1.0 / p) * lp_norm(f, p)
    assert lp_norm(f, np.inf) <= bound * (1 + 1e-12) + 1e-300


@seed(7)
@settings(max_examples=50, deadline=None)
@given(values_1d, values_1d)
def test_pairing_is_symmetric(a, b):
    f, g = GridFunction(GRID, a), GridFunction(GRID, b)
    assert pairing(f, g) == pairing(g, f)


@seed(7)
@settings(max_examples=50, deadline=None)
@given(values_1d)
def test_projection_onto_unit_ball(values):
    f = GridFunction(GRID, values)
    projected = np.linalg.norm(ouhabaz_projection(f).values, axis=1)
    modulus = np.linalg.norm(values, axis=1)
    alive = modulus > 1e-14
    assert np.allclose(projected[alive], np.minimum(1.0, modulus[alive]), rtol=1e-12, atol=0)
    assert np.all(projected[~alive] == 0)


@seed(7)
@settings(max_examples=50, deadline=None)
@given(values_1d)
def test_lattice_parts(values):
    f = GridFunction(GRID, values)
    plus, minus = positive_negative_parts(f)
    assert np.all(plus.values * minus.values == 0)
    assert np.all(plus.values >= 0) and np.all(minus.values <= 0)
    assert np.array_equal(plus.values + minus.values, values)


def test_projection_fixes_small_functions():
    f = GridFunction(GRID, 0.5 * np.ones((8, 2)) / np.sqrt(2))
    assert np.allclose(ouhabaz_projection(f).values, f.values)


def test_gradient_of_linear_function_in_interior():
    f = GridFunction.from_callable(GRID_2D, lambda p: np.stack([2 * p[:, 0] - p[:, 1], p[:, 1]], axis=1))
    grad = gradient(f).reshape(4, 5, 2, 2)
    interior = grad[1:-1, 1:-1]
    assert np.allclose(interior[..., 0, 0], 2.0)
    assert np.allclose(interior[..., 0, 1], -1.0)
    assert np.allclose(interior[..., 1, 1], 1.0)


def test_modulus_gradient_is_zero_where_f_vanishes():
    values = np.zeros((8, 2))
    values[3] = [3.0, 4.0]
    modulus, grad = modulus_and_gradient(GridFunction(GRID, values))
    assert modulus.values[3, 0] == 5.0
    assert np.all(grad[[0, 1, 5, 6, 7]] == 0)


@pytest.mark.parametrize('n', [31, 63])
def test_rotating_pair_has_unit_modulus_and_flat_gradient(n):
    grid = Grid.from_box([(0.0, 1.0)], n)
    f = GridFunction.from_callable(grid, lambda p: np.hstack([np.sin(np.pi * p), np.cos(np.pi * p)]))
    modulus, grad = modulus_and_gradient(f)
    assert np.allclose(modulus.values, 1.0, rtol=0, atol=1e-14)
    assert np.abs(grad[1:-1]).max() < 1e-9


def test_grid_functions_on_different_grids():
    f = GridFunction.zeros(GRID, 2)
    g = GridFunction.zeros(Grid.from_box([(-1.0, 1.0)], 9), 2)
    with pytest.raises(GridMismatchError):
        pairing(f, g)
    with pytest.raises(GridMismatchError):
        f + GridFunction.zeros(GRID, 1)


def test_grid_function_is_read_only():
    f = GridFunction.zeros(GRID, 1)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    assert np.array_equal((2 * (f + f) - f).values, f.values)
