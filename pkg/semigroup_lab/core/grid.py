"""
Truncated-box tensor grids and discrete vector-valued functions.

Unknowns are ordered node-major, component-minor: the value of component j at
node a sits at flat index a*m + j. Nodes are enumerated lexicographically with
the last axis running fastest. Boundary nodes are not stored; they carry the
homogeneous Dirichlet value 0.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np

from .errors import GridMismatchError

logger = logging.getLogger(__name__)

# chi_{f != 0} cutoff for the modulus and the sign projection
ZERO_CUTOFF = 1e-14


@dataclass(frozen=True)
class Grid:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    n: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'lower', tuple(float(a) for a in self.lower))
        object.__setattr__(self, 'upper', tuple(float(b) for b in self.upper))
        object.__setattr__(self, 'n', tuple(int(k) for k in self.n))
        if not (len(self.lower) == len(self.upper) == len(self.n)):
            raise ValueError('lower, upper and n must have the same length')
        if self.d not in (1, 2):
            raise ValueError(f'only d in {{1, 2}} is supported, got d={self.d}')
        for a, b, k in zip(self.lower, self.upper, self.n):
            if not b > a:
                raise ValueError(f'empty axis [{a}, {b}]')
            if k < 3:
                raise ValueError(f'each axis needs at least 3 interior nodes, got {k}')

    @classmethod
    def from_box(cls, box: Sequence[Sequence[float]], n: Union[int, Sequence[int]]) -> 'Grid':
        box = [tuple(axis) for axis in box]
        if isinstance(n, (int, np.integer)):
            n = [int(n)] * len(box)
        return cls(tuple(a for a, _ in box), tuple(b for _, b in box), tuple(n))

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def box(self) -> Tuple[Tuple[float, float], ...]:
        return tuple(zip(self.lower, self.upper))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.n))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / (k + 1) for a, b, k in zip(self.lower, self.upper, self.n)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def unknowns(self, m: int) -> int:
        return m * self.n_nodes

    def axes(self) -> List[np.ndarray]:
        """Interior node coordinates along each axis."""
        h = self.spacing
        return [a + h[k] * np.arange(1, nk + 1) for k, (a, nk) in enumerate(zip(self.lower, self.n))]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing='ij')
        return np.stack([c.ravel() for c in mesh], axis=-1)

    def face_points(self, axis: int) -> np.ndarray:
        """Midpoints between consecutive nodes (boundary included) along one axis."""
        h = self.spacing
        coords = self.axes()
        coords[axis] = self.lower[axis] + h[axis] * (np.arange(self.n[axis] + 1) + 0.5)
        mesh = np.meshgrid(*coords, indexing='ij')
        return np.stack([c.ravel() for c in mesh], axis=-1)

    def cell_points(self) -> np.ndarray:
        """Centres of the cells spanned by neighbouring nodes (corners of the dual mesh)."""
        h = self.spacing
        coords = [a + h[k] * (np.arange(nk + 1) + 0.5) for k, (a, nk) in enumerate(zip(self.lower, self.n))]
        mesh = np.meshgrid(*coords, indexing='ij')
        return np.stack([c.ravel() for c in mesh], axis=-1)

    def refined(self) -> 'Grid':
        """Nested grid with half the spacing; every old node is a new node."""
        return Grid(self.lower, self.upper, tuple(2 * k + 1 for k in self.n))

    def with_n(self, n: Union[int, Sequence[int]]) -> 'Grid':
        return Grid.from_box(self.box, n)


@dataclass(frozen=True)
class NormKind:
    p: float

    def __post_init__(self):
        if not (self.p > 1):
            raise ValueError(f'p must lie in (1, inf], got {self.p}')

    @property
    def dual(self) -> float:
        if np.isinf(self.p):
            return 1.0
        return self.p / (self.p - 1.0)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != self.grid.n_nodes:
            raise ValueError(f'expected values of shape ({self.grid.n_nodes}, m), got {values.shape}')
        if not np.all(np.isfinite(values)):
            raise ValueError('grid function holds non-finite values')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def zeros(cls, grid: Grid, m: int) -> 'GridFunction':
        return cls(grid, np.zeros((grid.n_nodes, m)))

    @classmethod
    def from_flat(cls, grid: Grid, vec: np.ndarray, m: int) -> 'GridFunction':
        return cls(grid, np.asarray(vec, dtype=float).reshape(grid.n_nodes, m))

    @classmethod
    def from_callable(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray]) -> 'GridFunction':
        return cls(grid, func(grid.points()))

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def on_grid(self) -> np.ndarray:
        return self.values.reshape(*self.grid.n, self.m)

    def _check(self, other: 'GridFunction'):
        if other.grid != self.grid or other.m != self.m:
            raise GridMismatchError(f'grid functions live on different grids or have m={self.m} vs m={other.m}')

    def __add__(self, other: 'GridFunction') -> 'GridFunction':
        self._check(other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: 'GridFunction') -> 'GridFunction':
        self._check(other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> 'GridFunction':
        return GridFunction(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> 'GridFunction':
        return GridFunction(self.grid, -self.values)


def lp_norm(f: GridFunction, p: Union[float, NormKind]) -> float:
    p = p.p if isinstance(p, NormKind) else float(p)
    modulus = np.linalg.norm(f.values, axis=1)
    if np.isinf(p):
        return float(modulus.max(initial=0.0))
    return float((f.grid.cell_volume * np.sum(modulus ** p)) ** (1.0 / p))


def pairing(f: GridFunction, g: GridFunction) -> float:
    f._check(g)
    return float(f.grid.cell_volume * np.sum(f.values * g.values))


def gradient(f: GridFunction) -> np.ndarray:
    """Central-difference gradient of every component, shape (n_nodes, m, d)."""
    grid = f.grid
    vals = f.on_grid()
    h = grid.spacing
    parts = []
    for k in range(grid.d):
        pad = [(0, 0)] * vals.ndim
        pad[k] = (1, 1)
        padded = np.pad(vals, pad)
        upper = np.take(padded, np.arange(2, grid.n[k] + 2), axis=k)
        lower = np.take(padded, np.arange(0, grid.n[k]), axis=k)
        parts.append(((upper - lower) / (2.0 * h[k])).reshape(grid.n_nodes, f.m))
    return np.stack(parts, axis=-1)


def modulus_and_gradient(f: GridFunction, cutoff: float = ZERO_CUTOFF) -> Tuple[GridFunction, np.ndarray]:
    """
    Pointwise Euclidean modulus |f| and the chain-rule gradient
    sum_j f_j grad f_j / |f|, zeroed where |f| <= cutoff.
    """
    modulus = np.linalg.norm(f.values, axis=1)
    grad = gradient(f)
    alive = modulus > cutoff
    grad_mod = np.zeros((f.grid.n_nodes, f.grid.d))
    grad_mod[alive] = np.einsum('aj,ajk->ak', f.values[alive], grad[alive]) / modulus[alive, None]
    return GridFunction(f.grid, modulus), grad_mod


def ouhabaz_projection(f: GridFunction, cutoff: float = ZERO_CUTOFF) -> GridFunction:
    """Projection onto the pointwise unit ball: min(1, |f|) f/|f|, and 0 where f vanishes."""
    modulus = np.linalg.norm(f.values, axis=1)
    alive = modulus > cutoff
    scale = np.zeros_like(modulus)
    scale[alive] = np.minimum(1.0, modulus[alive]) / modulus[alive]
    return GridFunction(f.grid, f.values * scale[:, None])


def positive_negative_parts(f: GridFunction) -> Tuple[GridFunction, GridFunction]:
    plus = np.maximum(f.values, 0.0)
    return GridFunction(f.grid, plus), GridFunction(f.grid, f.values - plus)
