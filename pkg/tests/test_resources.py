import numpy as np
import pytest

from semigroup_lab.utils.resources import ResourceMeter, ResourceUsage


def test_meter_measures_block():
    with ResourceMeter() as meter:
        np.linalg.eigvalsh(np.eye(50))
    usage = meter.usage
    assert usage.wall_seconds >= 0
    assert usage.cpu_seconds >= 0
    assert usage.rss_mb > 0


def test_usage_addition_keeps_peak_memory():
    total = ResourceUsage(1.0, 0.5, 100.0) + ResourceUsage(2.0, 1.0, 80.0)
    assert total == ResourceUsage(3.0, 1.5, 100.0)


def test_describe():
    assert ResourceUsage(1.25, 0.5, 64.0).describe() == '1.250 s wall, 0.500 s CPU, 64.0 MB RSS'


def test_meter_does_not_swallow_errors():
    meter = ResourceMeter()
    with pytest.raises(KeyError):
        with meter:
            raise KeyError('boom')
    assert meter.usage.wall_seconds >= 0
