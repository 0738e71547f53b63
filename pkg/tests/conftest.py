import numpy as np
import pytest

from semigroup_lab.core.coeffs import hypothesis_report
from semigroup_lab.core.grid import Grid
from semigroup_lab.core.presets import get_preset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid_1d():
    return Grid.from_box([(-4.0, 4.0)], 64)


@pytest.fixture
def grid_2d():
    return Grid.from_box([(-1.0, 1.0), (-1.0, 1.0)], 12)


@pytest.fixture
def trig():
    return get_preset('trig-2d')


@pytest.fixture
def trig_report(trig):
    return hypothesis_report(trig, samples=2000, sector_points=500)


@pytest.fixture
def preset():
    def build(name, **kwargs):
        return get_preset(name, **kwargs)
    return build


@pytest.fixture
def report_for():
    def build(coeffs):
        return hypothesis_report(coeffs, samples=2000, sector_points=500)
    return build
