"""
Time stepping for du/dt = L_h u: resolvent solves, implicit Euler and
Crank-Nicolson marches with a factorization reused across steps, and a dense
matrix-exponential oracle.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..utils.resources import ResourceMeter, ResourceUsage
from .assembly import SparseOperator
from .errors import ConfigError, NonCommensurateTimesError, SingularSystemError, SizeExceededError
from .grid import GridFunction, lp_norm
from .results import CheckResult

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2000
RESIDUAL_TOL = 1e-10
RESOLVENT_BOUND_SLACK = 1e-8

Operator = Union[SparseOperator, sp.spmatrix, np.ndarray]
Vector = Union[GridFunction, np.ndarray]


class Scheme(str, Enum):
    IMPLICIT_EULER = 'implicit-euler'
    CRANK_NICOLSON = 'crank-nicolson'
    DENSE_EXPONENTIAL = 'dense-exponential'

    @property
    def stepping(self) -> bool:
        return self is not Scheme.DENSE_EXPONENTIAL


@dataclass(frozen=True)
class EvolutionConfig:
    scheme: Scheme = Scheme.IMPLICIT_EULER
    dt: float = 0.01
    T: float = 1.0
    tol: float = 1e-12
    dense_limit: int = DENSE_LIMIT

    def __post_init__(self):
        object.__setattr__(self, 'scheme', Scheme(self.scheme))
        if not self.dt > 0 or not self.T > 0:
            raise ConfigError(f'dt and T must be positive, got dt={self.dt}, T={self.T}')
        if self.dt > self.T:
            raise ConfigError(f'dt={self.dt} exceeds T={self.T}')

    def steps(self, t: float) -> int:
        """Number of steps reaching t; t must be a multiple of dt."""
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise NonCommensurateTimesError(f't={t} is not a multiple of dt={self.dt}')
        return k


@dataclass
class EvolutionResult:
    times: List[float]
    snapshots: List[GridFunction]
    step_times: np.ndarray
    l2_norms: np.ndarray
    linf_norms: np.ndarray
    scheme: Scheme
    dt: float
    usage: ResourceUsage = field(default_factory=ResourceUsage)

    @property
    def wall_clock(self) -> float:
        return self.usage.wall_seconds

    def snapshot(self, t: float) -> GridFunction:
        for time, snap in zip(self.times, self.snapshots):
            if np.isclose(time, t):
                return snap
        raise KeyError(t)


def _matrix(L: Operator) -> sp.csr_matrix:
    if isinstance(L, SparseOperator):
        return L.matrix
    return sp.csr_matrix(L)


def _vector(f: Vector) -> np.ndarray:
    return f.flat if isinstance(f, GridFunction) else np.asarray(f, dtype=float)


def _like(template: Vector, vec: np.ndarray) -> Vector:
    if isinstance(template, GridFunction):
        return GridFunction.from_flat(template.grid, vec, template.m)
    return vec


def _factorize(A: sp.spmatrix):
    try:
        lu = splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        logger.error('sparse factorization failed: %s', exc)
        raise SingularSystemError(f'factorization failed: {exc}') from exc
    if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
        raise SingularSystemError('factorization produced a singular upper factor')
    return lu


class Resolvent:
    """Factorized (lambda I - L_h)^{-1}."""

    def __init__(self, L: Operator, lam: float):
        self.A = (lam * sp.identity(_matrix(L).shape[0], format='csr') - _matrix(L)).tocsr()
        self.lam = lam
        self._lu = _factorize(self.A)

    def solve(self, g: np.ndarray) -> np.ndarray:
        f = self._lu.solve(np.asarray(g, dtype=float))
        residual = np.linalg.norm(self.A @ f - g)
        if not np.all(np.isfinite(f)) or residual > RESIDUAL_TOL * max(np.linalg.norm(g), 1e-300):
            raise SingularSystemError(f'resolvent residual {residual:.3e} at lambda={self.lam}')
        return f


def resolvent_solve(lam: float, g: Vector, L_h: Operator, omega: Optional[float] = None) -> Vector:
    """
    Solve (lambda I - L_h) f = g.

    Raises:
        ValueError: lambda does not exceed the given accretivity shift
        SingularSystemError: factorization failed or the residual is too large
    """
    if omega is not None and not lam > omega:
        raise ValueError(f'lambda={lam} must exceed omega={omega}')
    vec = _vector(g)
    if not np.any(vec):
        return _like(g, np.zeros_like(vec))
    f = Resolvent(L_h, lam).solve(vec)
    if omega is not None:
        ratio = float(np.linalg.norm(f) * (lam - omega) / np.linalg.norm(vec))
        if ratio > 1.0 + RESOLVENT_BOUND_SLACK:
            logger.warning('resolvent bound exceeded at lambda=%g: |f|(lambda - omega)/|g| = %.12g',
                           lam, ratio)
    return _like(g, f)


class Propagator:
    """One-step map of a scheme; the step matrix is factorized once."""

    def __init__(self, L: Operator, scheme: Union[Scheme, str], dt: float, dense_limit: int = DENSE_LIMIT):
        self.scheme = Scheme(scheme)
        self.dt = dt
        A = _matrix(L)
        N = A.shape[0]
        eye = sp.identity(N, format='csr')
        self._explicit = None
        if self.scheme is Scheme.IMPLICIT_EULER:
            self._lu = _factorize(eye - dt * A)
        elif self.scheme is Scheme.CRANK_NICOLSON:
            self._lu = _factorize(eye - 0.5 * dt * A)
            self._explicit = (eye + 0.5 * dt * A).tocsr()
        else:
            if N > dense_limit:
                raise SizeExceededError(f'N={N} exceeds the dense limit {dense_limit}')
            self._lu = None
            self._explicit = scipy.linalg.expm(dt * A.toarray())

    def step(self, X: np.ndarray) -> np.ndarray:
        """Advance one step; X may hold a batch of vectors as columns."""
        if self._lu is None:
            return self._explicit @ X
        rhs = X if self._explicit is None else self._explicit @ X
        return self._lu.solve(np.asarray(rhs, dtype=float))

    def advance(self, X: np.ndarray, n_steps: int) -> np.ndarray:
        for _ in range(n_steps):
            X = self.step(X)
        return X


def dense_exponential_oracle(f0: Vector, t: float, L_h: Operator, limit: int = DENSE_LIMIT) -> Vector:
    """exp(t L_h) f0 by dense scaling and squaring."""
    if isinstance(L_h, np.ndarray):
        A = np.asarray(L_h, dtype=float)
    else:
        M = _matrix(L_h)
        if M.shape[0] > limit:
            raise SizeExceededError(f'N={M.shape[0]} exceeds the dense limit {limit}')
        A = M.toarray()
    if A.shape[0] > limit:
        raise SizeExceededError(f'N={A.shape[0]} exceeds the dense limit {limit}')
    if t == 0:
        return f0
    return _like(f0, scipy.linalg.expm(t * A) @ _vector(f0))


def evolve(f0: GridFunction, config: EvolutionConfig, L_h: SparseOperator,
           times: Optional[Sequence[float]] = None) -> EvolutionResult:
    """
    March f0 and keep snapshots at the requested times (default: T).

    Per-step L2 and Linf norms are recorded for the stepping schemes; the
    dense scheme evaluates exp(t L_h) f0 directly at each requested time.
    """
    times = [config.T] if times is None else [float(t) for t in times]
    with ResourceMeter() as meter:
        if config.scheme.stepping:
            counts = [config.steps(t) for t in times]
            prop = Propagator(L_h, config.scheme, config.dt)
            total = max(counts, default=0)
            X = f0.flat.copy()
            wanted: Dict[int, GridFunction] = {0: f0} if 0 in counts else {}
            l2 = [lp_norm(f0, 2)]
            linf = [lp_norm(f0, np.inf)]
            for k in range(1, total + 1):
                X = prop.step(X)
                snap = GridFunction.from_flat(f0.grid, X, f0.m)
                l2.append(lp_norm(snap, 2))
                linf.append(lp_norm(snap, np.inf))
                if k in counts:
                    wanted[k] = snap
            snapshots = [wanted[k] for k in counts]
            step_times = config.dt * np.arange(total + 1)
        else:
            snapshots = [dense_exponential_oracle(f0, t, L_h, config.dense_limit) for t in times]
            l2 = [lp_norm(s, 2) for s in snapshots]
            linf = [lp_norm(s, np.inf) for s in snapshots]
            step_times = np.asarray(times)
    result = EvolutionResult(times, snapshots, step_times, np.asarray(l2), np.asarray(linf),
                             config.scheme, config.dt, meter.usage)
    logger.debug('evolved N=%d with %s to t=%s in %s', L_h.N, config.scheme.value, times, meter.usage.describe())
    return result


def _norm(vec: np.ndarray, template: Vector) -> float:
    if isinstance(template, GridFunction):
        return float(np.sqrt(template.grid.cell_volume) * np.linalg.norm(vec))
    return float(np.linalg.norm(vec))


def semigroup_law_check(f0: Vector, t: float, s: float, config: EvolutionConfig, L_h: Operator) -> CheckResult:
    """|| S(t+s) f0 - S(t) S(s) f0 ||_2 against the scheme's tolerance."""
    if t < 0 or s < 0:
        raise ValueError('t and s must be nonnegative')
    vec = _vector(f0)
    scale = _norm(vec, f0)
    if config.scheme.stepping:
        n_t, n_s = config.steps(t), config.steps(s)
        prop = Propagator(L_h, config.scheme, config.dt)
        joint = prop.advance(vec, n_t + n_s)
        split = prop.advance(prop.advance(vec, n_s), n_t)
        tolerance = config.tol * scale
    else:
        joint = _vector(dense_exponential_oracle(vec, t + s, L_h, config.dense_limit))
        split = _vector(dense_exponential_oracle(
            _vector(dense_exponential_oracle(vec, s, L_h, config.dense_limit)), t, L_h, config.dense_limit))
        tolerance = 1e-10 * scale
    error = _norm(joint - split, f0)
    return CheckResult.compare(f'semigroup-law[{config.scheme.value}]', error, 0.0, tolerance,
                               note=f't={t:g}, s={s:g}')


@dataclass
class ConvergenceResult:
    scheme: Scheme
    dts: np.ndarray
    errors: np.ndarray
    order: float
    exact: bool = False


def convergence_order(f0: Vector, T: float, L_h: Operator, scheme: Union[Scheme, str],
                      divisors: Sequence[int] = (8, 16, 32, 64), limit: int = DENSE_LIMIT) -> ConvergenceResult:
    """
    Errors of the scheme at T against the dense oracle for dt = T/k, and the
    least-squares slope of log error against log dt.
    """
    scheme = Scheme(scheme)
    vec = _vector(f0)
    reference = _vector(dense_exponential_oracle(vec, T, L_h, limit))
    dts = np.array([T / k for k in divisors])
    errors = []
    for k, dt in zip(divisors, dts):
        approx = Propagator(L_h, scheme, dt, limit).advance(vec, k)
        errors.append(_norm(approx - reference, f0))
    errors = np.asarray(errors)
    if np.all(errors <= 1e-13 * max(_norm(vec, f0), 1.0)):
        logger.info('%s is exact on this data', scheme.value)
        return ConvergenceResult(scheme, dts, errors, float('nan'), exact=True)
    order = float(np.polyfit(np.log(dts), np.log(errors), 1)[0])
    logger.info('%s convergence order %.3f', scheme.value, order)
    return ConvergenceResult(scheme, dts, errors, order)
