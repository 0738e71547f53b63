"""
Named coefficient sets and smooth test functions.

Coefficient presets are registered by name so that scenario configs can refer
to them as strings. Test-function presets return callables mapping points of
shape (n, d) to values of shape (n, m).
"""

import logging
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .coeffs import Box, CoefficientSet, DiffusionField, DriftField, PotentialField
from .errors import ConfigError, UnknownPresetError

logger = logging.getLogger(__name__)

_PRESETS: Dict[str, Callable[..., CoefficientSet]] = {}


def register(name: str):
    def decorator(builder):
        _PRESETS[name] = builder
        return builder
    return decorator


def preset_names():
    return sorted(_PRESETS)


def get_preset(name: str, d: Optional[int] = None, box: Optional[Box] = None) -> CoefficientSet:
    """
    Build the named preset, optionally on another dimension or box.

    Raises:
        UnknownPresetError: name is not registered
        ConfigError: the preset does not exist in the requested dimension
    """
    try:
        builder = _PRESETS[name]
    except KeyError:
        raise UnknownPresetError(f"unknown preset '{name}'; known: {', '.join(preset_names())}") from None
    if box is not None and d is None:
        d = len(box)
    coeffs = builder(d=d, box=box)
    logger.info('preset %s: d=%d m=%d box=%s', name, coeffs.d, coeffs.m, coeffs.box)
    return coeffs


def _box(d: int, box: Optional[Box], half: float = 4.0) -> Box:
    if box is None:
        return tuple((-half, half) for _ in range(d))
    if len(box) != d:
        raise ConfigError(f'box has {len(box)} axes but d={d}')
    return tuple(tuple(axis) for axis in box)


def _axis_vector(d: int, k: int, values: np.ndarray) -> np.ndarray:
    """(n, d) array whose k-th column is values and the rest zero."""
    out = np.zeros((len(values), d))
    out[:, k] = values
    return out


def _assemble(name, d, box, V, F=None, C=None, Q=None) -> CoefficientSet:
    m = V.m
    return CoefficientSet(
        Q=Q if Q is not None else DiffusionField.constant(np.eye(d)),
        F=F if F is not None else DriftField.zero(m, d),
        C=C if C is not None else DriftField.zero(m, d),
        V=V, box=box, name=name)


@register('identity')
def identity(d=None, box=None):
    d = d or 1
    return _assemble('identity', d, _box(d, box), PotentialField.constant(np.zeros((1, 1)), d))


@register('confining-quadratic')
def confining_quadratic(d=None, box=None):
    d = d or 1
    V = PotentialField(1, d, lambda p: np.sum(p ** 2, axis=1)[:, None, None])
    return _assemble('confining-quadratic', d, _box(d, box), V)


@register('trig-2d')
def trig_2d(d=None, box=None):
    if d not in (None, 2):
        raise ConfigError('preset trig-2d is two-dimensional')
    d = 2

    def q(p):
        s = np.sin(p[:, 0])
        out = np.empty((len(p), 2, 2))
        out[:, 0, 0] = 2.0 + s
        out[:, 1, 1] = 2.0 - s
        out[:, 0, 1] = out[:, 1, 0] = 0.5
        return out

    def dq(p):
        c = np.cos(p[:, 0])
        out = np.zeros((len(p), 2, 2, 2))
        out[:, 0, 0, 0] = c
        out[:, 1, 1, 0] = -c
        return out

    F = DriftField.from_entries(2, d, {
        (0, 0): (lambda p: _axis_vector(d, 0, np.sin(p[:, 0])), lambda p: np.cos(p[:, 0])),
        (1, 1): (lambda p: _axis_vector(d, 1, 0.5 * np.cos(p[:, 0])), lambda p: np.zeros(len(p))),
        (0, 1): (lambda p: _axis_vector(d, 0, np.full(len(p), 0.25)), lambda p: np.zeros(len(p))),
    })
    C = DriftField.constant(np.array([[[0.0, 0.0], [0.25, 0.0]],
                                      [[0.0, 0.0], [0.0, 0.0]]]))
    base = np.array([[1.0, 0.5], [-0.5, 1.0]])
    V = PotentialField(2, d, lambda p: (1.0 + 0.5 * np.sin(p[:, 1]))[:, None, None] * base)
    return _assemble('trig-2d', d, _box(d, box, 1.0), V, F=F, C=C, Q=DiffusionField(d, q, dq))


@register('nonsymmetric-sectorial')
def nonsymmetric_sectorial(d=None, box=None):
    d = d or 1
    return _assemble('nonsymmetric-sectorial', d, _box(d, box),
                     PotentialField.constant([[1.0, 1.0], [-1.0, 1.0]], d))


@register('coupling-negative')
def coupling_negative(d=None, box=None):
    d = d or 1
    F = DriftField.from_entries(2, d, {
        (0, 0): (lambda p: _axis_vector(d, 0, 0.5 * np.sin(p[:, 0])), lambda p: 0.5 * np.cos(p[:, 0])),
    })
    return _assemble('coupling-negative', d, _box(d, box),
                     PotentialField.constant([[1.0, -1.0], [-1.0, 1.0]], d), F=F)


@register('coupling-positive-v12')
def coupling_positive_v12(d=None, box=None):
    d = d or 1
    return _assemble('coupling-positive-v12', d, _box(d, box),
                     PotentialField.constant([[1.0, 1.0], [1.0, 1.0]], d))


@register('coupling-positive-strong')
def coupling_positive_strong(d=None, box=None):
    d = d or 1
    return _assemble('coupling-positive-strong', d, _box(d, box),
                     PotentialField.constant([[5.0, 5.0], [5.0, 5.0]], d))


@register('coupling-F12')
def coupling_f12(d=None, box=None):
    d = d or 1
    F = DriftField.from_entries(2, d, {
        (0, 1): (lambda p: _axis_vector(d, 0, np.ones(len(p))), lambda p: np.zeros(len(p))),
    })
    return _assemble('coupling-F12', d, _box(d, box), PotentialField.constant(np.zeros((2, 2)), d), F=F)


@register('drift-coupled')
def drift_coupled(d=None, box=None):
    d = d or 1
    F = DriftField.from_entries(2, d, {
        (0, 1): (lambda p: _axis_vector(d, 0, np.sin(p[:, 0])), lambda p: np.cos(p[:, 0])),
        (1, 0): (lambda p: _axis_vector(d, 0, np.cos(p[:, 0])), lambda p: -np.sin(p[:, 0])),
    })
    return _assemble('drift-coupled', d, _box(d, box), PotentialField.constant(np.zeros((2, 2)), d), F=F)


@register('strong-drift')
def strong_drift(d=None, box=None):
    d = d or 1
    F = DriftField.from_entries(2, d, {
        (0, 1): (lambda p: _axis_vector(d, 0, np.full(len(p), 10.0)), lambda p: np.zeros(len(p))),
    })
    return _assemble('strong-drift', d, _box(d, box), PotentialField.constant(np.zeros((2, 2)), d), F=F)


@register('c-transport')
def c_transport(d=None, box=None):
    d = d or 1
    C = DriftField.from_entries(2, d, {
        (0, 0): (lambda p: _axis_vector(d, 0, 0.5 * np.tanh(p[:, 0])), lambda p: 0.5 / np.cosh(p[:, 0]) ** 2),
        (1, 0): (lambda p: _axis_vector(d, 0, 0.25 * np.sin(p[:, 0])), lambda p: 0.25 * np.cos(p[:, 0])),
    })
    F = DriftField.from_entries(2, d, {
        (0, 0): (lambda p: _axis_vector(d, 0, np.full(len(p), 0.25)), lambda p: np.zeros(len(p))),
    })
    return _assemble('c-transport', d, _box(d, box),
                     PotentialField.constant([[1.0, 0.5], [-0.5, 1.0]], d), F=F, C=C)


@register('div-heavy')
def div_heavy(d=None, box=None):
    d = d or 1
    F = DriftField.from_entries(1, d, {
        (0, 0): (lambda p: _axis_vector(d, 0, 3.0 * np.tanh(p[:, 0])), lambda p: 3.0 / np.cosh(p[:, 0]) ** 2),
    })
    return _assemble('div-heavy', d, _box(d, box), PotentialField.constant(np.zeros((1, 1)), d), F=F)


def with_confinement(coeffs: CoefficientSet, scale: float = 1.0) -> CoefficientSet:
    """Same set with V replaced by V + scale*|x|^2 I."""
    return coeffs.replace(V=coeffs.V.shifted(lambda p: scale * np.sum(p ** 2, axis=1)),
                          name=f'{coeffs.name}+confining')


# Test functions

def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity transition from 0 (t <= 0) to 1 (t >= 1)."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide='ignore'):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def bump(center: Sequence[float], radius: float, m: int = 1, component: int = 0, height: float = 1.0):
    """Smooth compactly supported bump height*exp(1 - 1/(1 - r^2/R^2)) in one component."""
    center = np.asarray(center, dtype=float)

    def func(points):
        r2 = np.sum((points - center) ** 2, axis=1) / radius ** 2
        inside = r2 < 1.0
        values = np.zeros(len(points))
        values[inside] = height * np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        out = np.zeros((len(points), m))
        out[:, component] = values
        return out

    return func


def cutoff(box: Box, width: float, m: int = 1, component: int = 0, height: float = 1.0):
    """Plateau equal to height on the box shrunk by 2*width, zero within width of its boundary."""

    def func(points):
        values = np.full(len(points), height)
        for k, (a, b) in enumerate(box):
            x = points[:, k]
            values *= _smooth_step((x - a - width) / width) * _smooth_step((b - width - x) / width)
        out = np.zeros((len(points), m))
        out[:, component] = values
        return out

    return func


def polar_field(m: int = 2):
    """r(x)(cos x_1, sin x_1) with r = 1 + exp(-|x|^2)/2, so |f| = r never vanishes."""
    if m < 2:
        raise ValueError('polar field needs m >= 2')

    def func(points):
        r = 1.0 + 0.5 * np.exp(-np.sum(points ** 2, axis=1))
        out = np.zeros((len(points), m))
        out[:, 0] = r * np.cos(points[:, 0])
        out[:, 1] = r * np.sin(points[:, 0])
        return out

    return func


def positive_scalar():
    def func(points):
        return (1.0 + 0.5 * np.exp(-np.sum(points ** 2, axis=1)))[:, None]
    return func


def constant(value: Sequence[float]):
    value = np.asarray(value, dtype=float)

    def func(points):
        return np.broadcast_to(value, (len(points), len(value))).copy()

    return func


def named_function(name: str, coeffs: CoefficientSet):
    """Test function used by the Kato and smoothness checks for this preset."""
    if name == 'polar':
        return polar_field(coeffs.m)
    if name == 'positive':
        return positive_scalar()
    if name == 'bump':
        center = [0.5 * (a + b) for a, b in coeffs.box]
        radius = 0.25 * min(b - a for a, b in coeffs.box)
        return bump(center, radius, coeffs.m)
    raise UnknownPresetError(f"unknown test function '{name}'")
