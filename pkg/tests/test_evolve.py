import numpy as np
import pytest

from semigroup_lab.core.assembly import assemble_L
from semigroup_lab.core.errors import (
    ConfigError,
    NonCommensurateTimesError,
    SingularSystemError,
    SizeExceededError,
)
from semigroup_lab.core.evolve import (
    EvolutionConfig,
    Propagator,
    Resolvent,
    Scheme,
    convergence_order,
    dense_exponential_oracle,
    evolve,
    resolvent_solve,
    semigroup_law_check,
)
from semigroup_lab.core.grid import Grid, GridFunction, lp_norm
from semigroup_lab.core.presets import get_preset


@pytest.fixture
def heat():
    grid = Grid.from_box([(-4.0, 4.0)], 31)
    L = assemble_L(get_preset('identity'), grid)
    f0 = GridFunction.from_callable(grid, lambda p: np.exp(-p ** 2))
    return L, f0


@pytest.fixture
def coupled():
    grid = Grid.from_box([(-4.0, 4.0)], 24)
    L = assemble_L(get_preset('coupling-negative'), grid)
    f0 = GridFunction.from_callable(grid, lambda p: np.hstack([np.exp(-p ** 2), -0.5 * np.exp(-(p - 1) ** 2)]))
    return L, f0


def test_config_validation():
    with pytest.raises(ConfigError):
        EvolutionConfig(dt=-1.0)
    with pytest.raises(ConfigError):
        EvolutionConfig(dt=2.0, T=1.0)
    config = EvolutionConfig(scheme='crank-nicolson', dt=0.1, T=1.0)
    assert config.scheme is Scheme.CRANK_NICOLSON
    assert config.steps(0.3) == 3
    with pytest.raises(NonCommensurateTimesError):
        config.steps(0.35)


def test_scheme_stepping_flag():
    assert Scheme.IMPLICIT_EULER.stepping and Scheme.CRANK_NICOLSON.stepping
    assert not Scheme.DENSE_EXPONENTIAL.stepping


@pytest.mark.parametrize('scheme, low, high', [
    ('implicit-euler', 0.8, 1.2),
    ('crank-nicolson', 1.7, 2.3),
])
def test_convergence_orders(heat, scheme, low, high):
    L, f0 = heat
    result = convergence_order(f0, 0.5, L, scheme)
    assert not result.exact
    assert low < result.order < high
    assert np.all(np.diff(result.errors) < 0)


@pytest.mark.parametrize('scheme', ['implicit-euler', 'crank-nicolson', 'dense-exponential'])
def test_semigroup_law(coupled, scheme):
    L, f0 = coupled
    result = semigroup_law_check(f0, 0.3, 0.2, EvolutionConfig(scheme=scheme, dt=0.05, T=1.0), L)
    assert result.passed, result
    assert result.name == f'semigroup-law[{scheme}]'


def test_semigroup_law_rejects_negative_times(coupled):
    L, f0 = coupled
    with pytest.raises(ValueError):
        semigroup_law_check(f0, -0.1, 0.2, EvolutionConfig(), L)


def test_dense_oracle_matches_fine_crank_nicolson(coupled):
    L, f0 = coupled
    exact = dense_exponential_oracle(f0, 0.2, L)
    stepped = Propagator(L, Scheme.CRANK_NICOLSON, 0.2 / 200).advance(f0.flat, 200)
    assert np.allclose(stepped, exact.flat, atol=1e-5)
    assert dense_exponential_oracle(f0, 0.0, L) is f0


def test_dense_limits(coupled):
    L, f0 = coupled
    with pytest.raises(SizeExceededError):
        dense_exponential_oracle(f0, 0.1, L, limit=10)
    with pytest.raises(SizeExceededError):
        Propagator(L, Scheme.DENSE_EXPONENTIAL, 0.1, dense_limit=10)


def test_evolve_records_norms_and_snapshots(heat):
    L, f0 = heat
    config = EvolutionConfig(dt=0.05, T=0.5)
    result = evolve(f0, config, L, times=[0.0, 0.25, 0.5])
    assert result.times == [0.0, 0.25, 0.5]
    assert result.snapshot(0.0) is f0
    assert len(result.l2_norms) == 11
    assert np.all(np.diff(result.l2_norms) <= 1e-14)
    assert np.all(np.diff(result.linf_norms) <= 1e-14)
    assert lp_norm(result.snapshot(0.5), 2) == pytest.approx(result.l2_norms[-1])
    assert result.wall_clock >= 0
    with pytest.raises(KeyError):
        result.snapshot(0.3)


def test_evolve_dense_scheme(heat):
    L, f0 = heat
    result = evolve(f0, EvolutionConfig(scheme='dense-exponential', dt=0.1, T=0.4), L, times=[0.2, 0.4])
    assert len(result.snapshots) == 2
    assert np.allclose(result.step_times, [0.2, 0.4])
    assert result.l2_norms[1] < result.l2_norms[0] < lp_norm(f0, 2)


def test_evolve_rejects_non_commensurate_times(heat):
    L, f0 = heat
    with pytest.raises(NonCommensurateTimesError):
        evolve(f0, EvolutionConfig(dt=0.1, T=1.0), L, times=[0.25])


def test_resolvent_solve(coupled):
    L, f0 = coupled
    f = resolvent_solve(3.0, f0, L, omega=1.0)
    assert isinstance(f, GridFunction)
    residual = 3.0 * f.flat - L.matrix @ f.flat - f0.flat
    assert np.abs(residual).max() < 1e-10
    assert lp_norm(f, 2) <= lp_norm(f0, 2) / (3.0 - 1.0)
    zero = resolvent_solve(3.0, GridFunction.zeros(f0.grid, 2), L)
    assert not np.any(zero.values)


def test_resolvent_solve_keeps_quiet_within_the_bound(coupled, caplog):
    L, f0 = coupled
    with caplog.at_level('WARNING', logger='semigroup_lab.core.evolve'):
        resolvent_solve(3.0, f0, L, omega=1.0)
    assert not caplog.records


def test_resolvent_solve_warns_when_the_bound_fails(caplog):
    g = np.array([1.0, -2.0, 0.5, 3.0])
    with caplog.at_level('WARNING', logger='semigroup_lab.core.evolve'):
        f = resolvent_solve(3.0, g, np.zeros((4, 4)), omega=-5.0)
    assert np.allclose(f, g / 3.0)
    assert 'resolvent bound exceeded' in caplog.text


def test_resolvent_errors(coupled):
    L, f0 = coupled
    with pytest.raises(ValueError):
        resolvent_solve(0.5, f0, L, omega=1.0)
    with pytest.raises(SingularSystemError):
        Resolvent(np.zeros((3, 3)), 0.0)
