"""
Coefficient fields Q, F, C, V and the structural constants of the hypotheses.

Every field is evaluated on a batch of points of shape (n, d):

    Q(points)          -> (n, d, d)
    Q.gradient(points) -> (n, d, d, d), last axis is the derivative direction
    F(points)          -> (n, m, m, d), F[:, i, j] is the vector F_ij(x)
    F.divergence(pts)  -> (n, m, m), div(F_ij)(x)
    V(points)          -> (n, m, m)

Sup/inf constants are estimated on a deterministic sample (tensor grid plus
scrambled Halton points); the sample sizes are config-visible.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.stats import qmc

from .errors import (
    DegenerateEllipticityError,
    LemmaViolatedError,
    NonSymmetricError,
    NotSectorialError,
    ReducedNotSectorialError,
)
from .results import CheckResult

logger = logging.getLogger(__name__)

Box = Tuple[Tuple[float, float], ...]
PointFn = Callable[[np.ndarray], np.ndarray]

# Re<V xi, xi> below this is a kernel direction of V_s
KERNEL_FLOOR = 1e-12
FD_STEP = 1e-4


def _batch(points: np.ndarray, d: int) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(-1, d) if d > 1 else points.reshape(-1, 1)
    return points


def sample_points(box: Box, n_samples: int, seed: int = 0, tensor_axis: int = 33) -> np.ndarray:
    """Tensor grid (box corners included) united with n_samples scrambled Halton points."""
    if n_samples < 1:
        raise ValueError('n_samples must be at least 1')
    d = len(box)
    lower = np.array([a for a, _ in box], dtype=float)
    upper = np.array([b for _, b in box], dtype=float)
    axes = [np.linspace(a, b, tensor_axis) for a, b in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing='ij')
    tensor = np.stack([c.ravel() for c in mesh], axis=-1)
    halton = qmc.Halton(d=d, scramble=True, seed=seed).random(n_samples)
    return np.vstack([tensor, qmc.scale(halton, lower, upper)])


def _central_difference(func: PointFn, points: np.ndarray, axis: int, step: float = FD_STEP) -> np.ndarray:
    shift = np.zeros(points.shape[1])
    shift[axis] = step
    return (func(points + shift) - func(points - shift)) / (2.0 * step)


@dataclass(frozen=True)
class DiffusionField:
    d: int
    func: PointFn
    grad_func: Optional[PointFn] = None

    @classmethod
    def constant(cls, matrix) -> 'DiffusionField':
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        d = matrix.shape[0]
        return cls(d,
                   lambda p: np.broadcast_to(matrix, (len(p), d, d)).copy(),
                   lambda p: np.zeros((len(p), d, d, d)))

    @classmethod
    def scalar(cls, d: int, q: PointFn, dq: PointFn) -> 'DiffusionField':
        """Q(x) = q(x) I_d with grad q supplied as (n, d)."""
        eye = np.eye(d)
        return cls(d,
                   lambda p: q(p)[:, None, None] * eye,
                   lambda p: eye[None, :, :, None] * dq(p)[:, None, None, :])

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.func(_batch(points, self.d))

    def gradient(self, points: np.ndarray) -> np.ndarray:
        points = _batch(points, self.d)
        if self.grad_func is not None:
            return self.grad_func(points)
        return np.stack([_central_difference(self.func, points, k) for k in range(self.d)], axis=-1)


@dataclass(frozen=True)
class DriftField:
    m: int
    d: int
    func: PointFn
    div_func: PointFn

    @classmethod
    def zero(cls, m: int, d: int) -> 'DriftField':
        return cls(m, d, lambda p: np.zeros((len(p), m, m, d)), lambda p: np.zeros((len(p), m, m)))

    @classmethod
    def constant(cls, values) -> 'DriftField':
        values = np.asarray(values, dtype=float)
        m, _, d = values.shape
        return cls(m, d,
                   lambda p: np.broadcast_to(values, (len(p), m, m, d)).copy(),
                   lambda p: np.zeros((len(p), m, m)))

    @classmethod
    def from_entries(cls, m: int, d: int, entries: Mapping[Tuple[int, int], Tuple[PointFn, PointFn]]) -> 'DriftField':
        """
        Build a field from its nonzero entries.

        entries maps (i, j) to (value, divergence) where value(points) -> (n, d)
        and divergence(points) -> (n,).
        """
        entries = dict(entries)

        def func(p):
            out = np.zeros((len(p), m, m, d))
            for (i, j), (value, _) in entries.items():
                out[:, i, j, :] = value(p)
            return out

        def div_func(p):
            out = np.zeros((len(p), m, m))
            for (i, j), (_, div) in entries.items():
                out[:, i, j] = div(p)
            return out

        return cls(m, d, func, div_func)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.func(_batch(points, self.d))

    def divergence(self, points: np.ndarray) -> np.ndarray:
        return self.div_func(_batch(points, self.d))

    def __add__(self, other: 'DriftField') -> 'DriftField':
        return DriftField(self.m, self.d,
                          lambda p: self.func(p) + other.func(p),
                          lambda p: self.div_func(p) + other.div_func(p))

    def __sub__(self, other: 'DriftField') -> 'DriftField':
        return DriftField(self.m, self.d,
                          lambda p: self.func(p) - other.func(p),
                          lambda p: self.div_func(p) - other.div_func(p))

    def adjoint(self) -> 'DriftField':
        """Blockwise transpose: (F*)_ij = F_ji."""
        return DriftField(self.m, self.d,
                          lambda p: np.swapaxes(self.func(p), 1, 2),
                          lambda p: np.swapaxes(self.div_func(p), 1, 2))

    def sup_norm(self, points: np.ndarray) -> float:
        """max over i, j and sampled x of |F_ij(x)|."""
        values = self(points)
        if values.size == 0:
            return 0.0
        return float(np.linalg.norm(values, axis=-1).max())

    def is_zero(self, points: np.ndarray) -> bool:
        return not np.any(self(points)) and not np.any(self.divergence(points))

    def divergence_defect(self, points: np.ndarray, step: float = FD_STEP) -> float:
        """Largest deviation between div_func and a central difference of func."""
        points = _batch(points, self.d)
        numeric = sum(_central_difference(self.func, points, k, step)[..., k] for k in range(self.d))
        return float(np.abs(numeric - self.divergence(points)).max(initial=0.0))


@dataclass(frozen=True)
class PotentialField:
    m: int
    d: int
    func: PointFn

    @classmethod
    def constant(cls, matrix, d: int) -> 'PotentialField':
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        m = matrix.shape[0]
        return cls(m, d, lambda p: np.broadcast_to(matrix, (len(p), m, m)).copy())

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.func(_batch(points, self.d))

    def symmetric_part(self, points: np.ndarray) -> np.ndarray:
        values = self(points)
        return 0.5 * (values + np.swapaxes(values, 1, 2))

    def antisymmetric_part(self, points: np.ndarray) -> np.ndarray:
        values = self(points)
        return values - 0.5 * (values + np.swapaxes(values, 1, 2))

    def transpose(self) -> 'PotentialField':
        return PotentialField(self.m, self.d, lambda p: np.swapaxes(self.func(p), 1, 2))

    def scaled(self, c: float) -> 'PotentialField':
        return PotentialField(self.m, self.d, lambda p: c * self.func(p))

    def shifted(self, mu: PointFn) -> 'PotentialField':
        """V + mu(x) I_m."""
        eye = np.eye(self.m)
        return PotentialField(self.m, self.d, lambda p: self.func(p) + mu(p)[:, None, None] * eye)


@dataclass(frozen=True)
class CoefficientSet:
    Q: DiffusionField
    F: DriftField
    C: DriftField
    V: PotentialField
    box: Box
    name: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'box', tuple((float(a), float(b)) for a, b in self.box))
        d = {self.Q.d, self.F.d, self.C.d, self.V.d, len(self.box)}
        m = {self.F.m, self.C.m, self.V.m}
        if len(d) != 1 or len(m) != 1:
            raise ValueError(f'coefficient fields disagree on dimensions: d={sorted(d)}, m={sorted(m)}')

    @property
    def d(self) -> int:
        return self.Q.d

    @property
    def m(self) -> int:
        return self.V.m

    def replace(self, **changes) -> 'CoefficientSet':
        return replace(self, **changes)


@dataclass(frozen=True)
class HypothesisReport:
    m: int
    eta1: float
    eta2: float
    M: float
    norm_F: float
    norm_C: float
    gamma: float
    gamma_F: float
    gamma_C: float
    omega: float
    omega_tilde: float
    flags: Dict[str, bool] = field(default_factory=dict)
    notes: Tuple[str, ...] = ()

    @property
    def omega_h(self) -> float:
        """L2 shift for the assembled operator; the expanded div(Cf) stencil costs gamma_C."""
        return self.omega + max(self.gamma_C, 0.0)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def rows(self):
        yield from (
            ('eta1', self.eta1), ('eta2', self.eta2), ('M', self.M),
            ('norm_F', self.norm_F), ('norm_C', self.norm_C),
            ('gamma', self.gamma), ('gamma_F', self.gamma_F), ('gamma_C', self.gamma_C),
            ('omega', self.omega), ('omega_tilde', self.omega_tilde), ('omega_h', self.omega_h),
        )


def _ellipticity_extrema(Q: DiffusionField, points: np.ndarray) -> Tuple[float, float, float]:
    values = Q(points)
    asym = float(np.abs(values - np.swapaxes(values, 1, 2)).max(initial=0.0))
    eig = np.linalg.eigvalsh(0.5 * (values + np.swapaxes(values, 1, 2)))
    return float(eig[:, 0].min()), float(eig[:, -1].max()), asym


def ellipticity_bounds(Q: DiffusionField, box: Box, n_samples: int, seed: int = 0,
                       tensor_axis: int = 33) -> Tuple[float, float]:
    points = sample_points(box, n_samples, seed, tensor_axis)
    eta1, eta2, asym = _ellipticity_extrema(Q, points)
    if asym > 0:
        raise NonSymmetricError(f'Q is not symmetric: max |Q - Q^T| = {asym:.3e}')
    if eta1 <= 0:
        raise DegenerateEllipticityError(f'smallest eigenvalue of Q is {eta1:.3e} <= 0')
    return eta1, eta2


def _random_unit_complex(rng: np.random.Generator, count: int, m: int) -> np.ndarray:
    xi = rng.standard_normal((count, m)) + 1j * rng.standard_normal((count, m))
    return xi / np.linalg.norm(xi, axis=1, keepdims=True)


def _hermitian_form(V: np.ndarray, xi1: np.ndarray, xi2: np.ndarray) -> np.ndarray:
    """<V xi1, xi2> = sum_ij v_ij xi1_j conj(xi2_i), batched over the leading axis of V."""
    return np.einsum('...i,...ij,...j->...', np.conj(xi2), V, xi1)


def _pointwise_sector(values: np.ndarray, floor: float = KERNEL_FLOOR) -> float:
    """
    Exact sup over xi of |Im<V xi, xi>| / Re<V xi, xi> at each point, maximised over points.

    Uses the Hermitian pencil (K, S) with S = V_s and K = -i V_as restricted to the range of S.
    """
    S = 0.5 * (values + np.swapaxes(values, 1, 2))
    K = -1j * (values - S)
    s, U = np.linalg.eigh(S)
    scale = np.maximum(1.0, np.abs(s).max(axis=1))
    regular = s[:, 0] > floor * scale
    best = 0.0
    if np.any(regular):
        W = U[regular] / np.sqrt(s[regular])[:, None, :]
        pencil = np.einsum('nji,njk,nkl->nil', W, K[regular], W)
        best = float(np.abs(np.linalg.eigvalsh(pencil)).max())
    for idx in np.flatnonzero(~regular):
        live = s[idx] > floor * scale[idx]
        U_r, U_0 = U[idx][:, live], U[idx][:, ~live]
        leak = max(np.abs(U_0.T @ K[idx] @ U_0).max(initial=0.0),
                   np.abs(U_0.T @ K[idx] @ U_r).max(initial=0.0))
        if leak > floor * scale[idx]:
            raise NotSectorialError(f'V_as does not vanish on the kernel of V_s (leak {leak:.3e})')
        if np.any(live):
            W = U_r / np.sqrt(s[idx][live])
            best = max(best, float(np.abs(np.linalg.eigvalsh(W.T @ K[idx] @ W)).max()))
    return best


def sectoriality_constant(V: PotentialField, box: Box, n_x: int, n_xi: int, seed: int = 0,
                          refine: bool = True, tensor_axis: int = 33,
                          floor: float = KERNEL_FLOOR) -> float:
    """
    Smallest sampled M with |Im<V xi, xi>| <= M Re<V xi, xi>.

    With refine=True the sampled value is sharpened by the exact pointwise
    pencil computation, so M never undershoots on the sampled points.
    """
    points = sample_points(box, n_x, seed, tensor_axis)
    values = V(points)
    S = 0.5 * (values + np.swapaxes(values, 1, 2))
    scale = max(1.0, float(np.abs(S).max(initial=0.0)))
    low = float(np.linalg.eigvalsh(S)[:, 0].min())
    if low < -floor * scale:
        raise NotSectorialError(f'V_s is not positive semidefinite (eigenvalue {low:.3e})')

    rng = np.random.default_rng(seed)
    xi = _random_unit_complex(rng, n_xi, V.m)
    forms = np.einsum('ki,xij,kj->xk', np.conj(xi), values, xi)
    re, im = forms.real, np.abs(forms.imag)
    if np.any(re < -floor):
        raise NotSectorialError(f'Re<V xi, xi> = {re.min():.3e} < 0')
    kernel = re < floor
    if np.any(im[kernel] > floor):
        raise NotSectorialError('Re<V xi, xi> vanishes while Im<V xi, xi> does not')
    M = float((im[~kernel] / re[~kernel]).max(initial=0.0))
    if refine:
        M = max(M, _pointwise_sector(values, floor))
    logger.debug('sectoriality constant M = %.6g over %d points', M, len(points))
    return M


def check_generalized_cauchy_schwarz(V: PotentialField, M: float, box: Box, n_trials: int,
                                     seed: int = 0, n_x: int = 1000, tensor_axis: int = 33,
                                     rel_tol: float = 1e-10) -> CheckResult:
    points = sample_points(box, n_x, seed, tensor_axis)
    rng = np.random.default_rng(seed + 1)
    idx = rng.integers(0, len(points), n_trials)
    xi1 = _random_unit_complex(rng, n_trials, V.m)
    xi2 = _random_unit_complex(rng, n_trials, V.m)
    S = V.symmetric_part(points)[idx]
    A = V.antisymmetric_part(points)[idx]
    full = V(points)[idx]
    n1 = _hermitian_form(S, xi1, xi1).real
    n2 = _hermitian_form(S, xi2, xi2).real
    live = (n1 > KERNEL_FLOOR) & (n2 > KERNEL_FLOOR)
    denom = np.sqrt(n1[live] * n2[live])
    bound = 1.0 + M
    worst = 0.0
    for label, mats in (('V', full), ('V_as', A)):
        ratio = np.abs(_hermitian_form(mats[live], xi1[live], xi2[live])) / denom
        if ratio.size == 0:
            continue
        k = int(np.argmax(ratio))
        if ratio[k] > bound * (1.0 + rel_tol):
            witness = {'x': points[idx[live]][k], 'xi1': xi1[live][k], 'xi2': xi2[live][k], 'ratio': float(ratio[k])}
            raise LemmaViolatedError(f'{label}: ratio {ratio[k]:.6g} exceeds 1 + M = {bound:.6g}', witness)
        worst = max(worst, float(ratio[k]))
    return CheckResult('generalized-cauchy-schwarz', worst, bound, rel_tol * bound, passed=True,
                       note=f'{int(live.sum())} of {n_trials} triples off the kernel of V_s')


def _divergence_extremum(D: DriftField, points: np.ndarray) -> float:
    div = D.divergence(points)
    sym = 0.5 * (div + np.swapaxes(div, 1, 2))
    return float(np.linalg.eigvalsh(sym)[:, -1].max())


def divergence_bound(D: DriftField, box: Box, n_samples: int, seed: int = 0, tensor_axis: int = 33) -> float:
    return _divergence_extremum(D, sample_points(box, n_samples, seed, tensor_axis))


def young_constant(m: int, norm_F: float, norm_C: float, eps: float) -> float:
    """c_eps = m (|F| + |C|)^2 / (4 eps)."""
    return m * (norm_F + norm_C) ** 2 / (4.0 * eps)


def accretivity_shifts(report: HypothesisReport) -> Tuple[float, float]:
    c = young_constant(report.m, report.norm_F, report.norm_C, report.eta1 / 2.0)
    return c, c + report.gamma + 1.0


def hypothesis_report(coeffs: CoefficientSet, samples: int = 10000, seed: int = 0,
                      xi_samples: int = 50, sector_points: int = 2000, tensor_axis: int = 33,
                      divergence_tol: float = 1e-6) -> HypothesisReport:
    """Estimate every structural constant; hypothesis failures become flags instead of errors."""
    box = coeffs.box
    points = sample_points(box, samples, seed, tensor_axis)
    notes = []
    flags = {}

    eta1, eta2, asym = _ellipticity_extrema(coeffs.Q, points)
    flags['Q-symmetric'] = asym == 0
    flags['ellipticity'] = eta1 > 0

    try:
        M = sectoriality_constant(coeffs.V, box, sector_points, xi_samples, seed, tensor_axis=tensor_axis)
        flags['sectoriality'] = True
    except NotSectorialError as exc:
        M = float('inf')
        flags['sectoriality'] = False
        notes.append(f'sectoriality: {exc}')

    norm_F = coeffs.F.sup_norm(points)
    norm_C = coeffs.C.sup_norm(points)
    flags['H1'] = flags['Q-symmetric'] and flags['ellipticity'] and flags['sectoriality'] \
        and np.isfinite(norm_F) and np.isfinite(norm_C)

    gamma_F = _divergence_extremum(coeffs.F, points)
    gamma_C = _divergence_extremum(coeffs.C, points)
    gamma = max(gamma_F, gamma_C)
    defect = max(coeffs.F.divergence_defect(points), coeffs.C.divergence_defect(points))
    if defect > divergence_tol:
        notes.append(f'divergence consistency defect {defect:.3e}')
    flags['H2'] = bool(np.isfinite(gamma)) and defect <= divergence_tol

    q_grad = coeffs.Q.gradient(points)
    flags['H3'] = bool(np.all(np.isfinite(q_grad)) and np.all(np.isfinite(coeffs.V(points))))

    report = HypothesisReport(coeffs.m, eta1, eta2, M, norm_F, norm_C, gamma, gamma_F, gamma_C,
                              float('inf'), float('inf'), flags, tuple(notes))
    if flags['ellipticity']:
        omega, omega_tilde = accretivity_shifts(report)
        report = replace(report, omega=omega, omega_tilde=omega_tilde)
    logger.info('hypotheses for %s: eta=(%.4g, %.4g) M=%.4g gamma=%.4g omega=%.4g omega_tilde=%.4g flags=%s',
                coeffs.name or '<anonymous>', eta1, eta2, M, gamma, report.omega, report.omega_tilde, flags)
    return report


def reduce_C(coeffs: CoefficientSet, gamma: float, n_x: int = 2000, n_xi: int = 50, seed: int = 0) -> CoefficientSet:
    """
    Eliminate C: (Q, F - C, 0, V - div(C) + gamma I).

    The assembled operator of the result equals the original one minus gamma I.
    """
    points = sample_points(coeffs.box, 64, seed)
    if gamma == 0 and coeffs.C.is_zero(points):
        return coeffs
    m, d = coeffs.m, coeffs.d
    V, C = coeffs.V, coeffs.C
    eye = np.eye(m)
    V_tilde = PotentialField(m, d, lambda p: V.func(p) - C.div_func(p) + gamma * eye)
    try:
        sectoriality_constant(V_tilde, coeffs.box, n_x, n_xi, seed)
    except NotSectorialError as exc:
        raise ReducedNotSectorialError(f'reduced potential is not sectorial: {exc}') from exc
    return coeffs.replace(F=coeffs.F - C, C=DriftField.zero(m, d), V=V_tilde,
                          name=f'{coeffs.name}/reduced' if coeffs.name else 'reduced')
