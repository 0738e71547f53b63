"""
Finite-difference assembly of the operator

    L f = div(Q grad f) - F . grad f + div(C f) - V f

on a Grid with homogeneous Dirichlet truncation, of its formal adjoint, and of
the discrete sesquilinear form a(f, g) whose associated operator is -L.

The diffusion block is built from face differences: with D_k the forward
difference from nodes to the faces normal to axis k and W_kk the diagonal of
q_kk at face midpoints,

    S = sum_k D_k^T W_kk D_k + G_1^T W_12 G_2 + G_2^T W_12 G_1,

where G_1, G_2 are the cell-averaged partial derivatives at cell centres
(2D only) and W_12 holds q_12 there. The assembled block is -S, symmetrised
bit-exactly. First-order terms use central differences.
"""

import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .coeffs import CoefficientSet, DiffusionField, DriftField, PotentialField
from .errors import GridMismatchError, HypothesisNotVerifiedError, NonSymmetricError, SizeExceededError
from .grid import Grid, GridFunction

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, GridFunction]


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Assembled N x N matrix acting on node-major, component-minor unknowns."""
    matrix: sp.csr_matrix
    grid: Grid
    m: int
    pieces: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        matrix = sp.csr_matrix(self.matrix, dtype=float)
        matrix.eliminate_zeros()
        matrix.sort_indices()
        if matrix.shape != (self.N, self.N):
            raise GridMismatchError(f'matrix shape {matrix.shape} does not match N={self.N}')
        object.__setattr__(self, 'matrix', matrix)
        object.__setattr__(self, 'pieces', tuple(self.pieces))

    @property
    def N(self) -> int:
        return self.grid.unknowns(self.m)

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def __matmul__(self, other):
        if isinstance(other, GridFunction):
            return self.apply(other)
        return self.matrix @ other

    def apply(self, f: GridFunction) -> GridFunction:
        if f.grid != self.grid or f.m != self.m:
            raise GridMismatchError('grid function does not live on the operator grid')
        return GridFunction.from_flat(self.grid, self.matrix @ f.flat, self.m)

    def __add__(self, other: 'SparseOperator') -> 'SparseOperator':
        self._check(other)
        return SparseOperator(self.matrix + other.matrix, self.grid, self.m, self.pieces + other.pieces)

    def __sub__(self, other: 'SparseOperator') -> 'SparseOperator':
        self._check(other)
        return SparseOperator(self.matrix - other.matrix, self.grid, self.m,
                              self.pieces + tuple(f'-{p}' for p in other.pieces))

    def _check(self, other: 'SparseOperator'):
        if other.grid != self.grid or other.m != self.m:
            raise GridMismatchError('operators live on different grids')

    def shifted(self, mu: float) -> 'SparseOperator':
        """L - mu I."""
        return SparseOperator(self.matrix - mu * sp.identity(self.N, format='csr'), self.grid, self.m,
                              self.pieces + (f'shift({mu:g})',))

    def transpose(self) -> 'SparseOperator':
        return SparseOperator(self.matrix.T.tocsr(), self.grid, self.m, self.pieces + ('transpose',))

    def max_abs(self) -> float:
        return float(np.abs(self.matrix.data).max(initial=0.0))

    def to_dense(self, limit: Optional[int] = None) -> np.ndarray:
        if limit is not None and self.N > limit:
            raise SizeExceededError(f'N={self.N} exceeds the dense limit {limit}')
        return self.matrix.toarray()


def _forward(n: int, h: float) -> sp.csr_matrix:
    """(n+1) x n differences (f_r - f_{r-1})/h onto faces, zero outside the grid."""
    return sp.diags([np.full(n, 1.0 / h), np.full(n, -1.0 / h)], [0, -1], shape=(n + 1, n), format='csr')


def _average(n: int) -> sp.csr_matrix:
    return sp.diags([np.full(n, 0.5), np.full(n, 0.5)], [0, -1], shape=(n + 1, n), format='csr')


def _central(n: int, h: float) -> sp.csr_matrix:
    off = np.full(n - 1, 1.0 / (2.0 * h))
    return sp.diags([off, -off], [1, -1], shape=(n, n), format='csr')


def _along(grid: Grid, axis: int, op: sp.spmatrix) -> sp.csr_matrix:
    """Lift a one-axis operator to the tensor grid (last axis fastest)."""
    factors = [sp.identity(k, format='csr') for k in grid.n]
    factors[axis] = op
    return _kron_all(factors)


def _kron_all(factors) -> sp.csr_matrix:
    out = factors[0]
    for f in factors[1:]:
        out = sp.kron(out, f, format='csr')
    return sp.csr_matrix(out)


def _mesh(coords: Sequence[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*coords, indexing='ij')
    return np.stack([c.ravel() for c in mesh], axis=-1)


def _lift(node_op: sp.spmatrix, m: int) -> sp.csr_matrix:
    """Replicate a node-level operator across the m components."""
    return sp.kron(node_op, sp.identity(m, format='csr'), format='csr')


def _unit(m: int, i: int, j: int) -> sp.csr_matrix:
    return sp.csr_matrix(([1.0], ([i], [j])), shape=(m, m))


def central_differences(grid: Grid) -> List[sp.csr_matrix]:
    """Node-level central difference matrix per axis; antisymmetric under Dirichlet truncation."""
    h = grid.spacing
    return [_along(grid, k, _central(grid.n[k], h[k])) for k in range(grid.d)]


class DiffusionStencil:
    """
    Face and cell matrices of the conservative diffusion stencil.

    With neumann=True only interior faces and cells are kept, which gives the
    pure-Neumann variant with vanishing row sums.
    """

    def __init__(self, Q: DiffusionField, grid: Grid, neumann: bool = False):
        if Q.d != grid.d:
            raise GridMismatchError(f'Q has d={Q.d} but the grid has d={grid.d}')
        self.grid = grid
        h = grid.spacing
        rows = slice(1, -1) if neumann else slice(None)
        face_idx = [np.arange(k + 1)[rows] for k in grid.n]
        node_coords = grid.axes()
        face_coords = [a + hk * (np.arange(k + 1) + 0.5) for a, hk, k in zip(grid.lower, h, grid.n)]

        values = Q(grid.points())
        asym = float(np.abs(values - np.swapaxes(values, 1, 2)).max(initial=0.0))
        if asym > 0:
            raise NonSymmetricError(f'Q is not symmetric on the grid: max |Q - Q^T| = {asym:.3e}')

        self.faces: List[sp.csr_matrix] = []
        self.face_weights: List[np.ndarray] = []
        for k in range(grid.d):
            coords = list(node_coords)
            coords[k] = face_coords[k][face_idx[k]]
            factors = [sp.identity(nk, format='csr') for nk in grid.n]
            factors[k] = _forward(grid.n[k], h[k])[face_idx[k]]
            self.faces.append(_kron_all(factors))
            self.face_weights.append(Q(_mesh(coords))[:, k, k])

        self.cells: List[sp.csr_matrix] = []
        self.cell_weights = np.zeros(0)
        if grid.d == 2:
            cell = _mesh([face_coords[0][face_idx[0]], face_coords[1][face_idx[1]]])
            q_cell = Q(cell)
            self.cell_weights = q_cell[:, 0, 1]
            fw = [_forward(grid.n[k], h[k])[face_idx[k]] for k in range(2)]
            av = [_average(grid.n[k])[face_idx[k]] for k in range(2)]
            self.cells = [_kron_all([fw[0], av[1]]), _kron_all([av[0], fw[1]])]
            low = float(np.linalg.eigvalsh(q_cell)[:, 0].min(initial=np.inf)) if len(cell) else np.inf
            if low <= 0:
                raise HypothesisNotVerifiedError(f'Q is not elliptic at cell centres (eigenvalue {low:.3e})')
        for w in self.face_weights:
            if w.size and w.min() <= 0:
                raise HypothesisNotVerifiedError(f'diagonal of Q is not positive on faces (min {w.min():.3e})')

    def stiffness(self) -> sp.csr_matrix:
        S = sp.csr_matrix((self.grid.n_nodes, self.grid.n_nodes))
        for D, w in zip(self.faces, self.face_weights):
            S = S + D.T @ sp.diags(w) @ D
        if self.cells:
            G1, G2 = self.cells
            W = sp.diags(self.cell_weights)
            S = S + G1.T @ W @ G2 + G2.T @ W @ G1
        return S.tocsr()


def assemble_diffusion(Q: DiffusionField, grid: Grid, m: int = 1, neumann: bool = False) -> SparseOperator:
    S = DiffusionStencil(Q, grid, neumann).stiffness()
    node = -0.5 * (S + S.T)
    return SparseOperator(_lift(node, m), grid, m, ('diffusion',))


def _first_order(D: DriftField, grid: Grid) -> sp.csr_matrix:
    """sum_ij sum_k diag(D_ij^(k)) Dc_k coupling component j into row component i."""
    m = D.m
    values = D(grid.points())
    out = sp.csr_matrix((grid.unknowns(m), grid.unknowns(m)))
    central = central_differences(grid)
    for i in range(m):
        for j in range(m):
            for k in range(grid.d):
                coef = values[:, i, j, k]
                if not np.any(coef):
                    continue
                out = out + sp.kron(sp.diags(coef) @ central[k], _unit(m, i, j), format='csr')
    return out.tocsr()


def _block_diagonal(blocks: np.ndarray) -> sp.csr_matrix:
    n, m, _ = blocks.shape
    return sp.bsr_matrix((blocks, np.arange(n), np.arange(n + 1)), shape=(n * m, n * m)).tocsr()


def _check_dims(field_d: int, grid: Grid):
    if field_d != grid.d:
        raise GridMismatchError(f'field has d={field_d} but the grid has d={grid.d}')


def assemble_drift_gradient(F: DriftField, grid: Grid) -> SparseOperator:
    """The matrix of f -> F . grad f; it enters L with a minus sign."""
    _check_dims(F.d, grid)
    return SparseOperator(_first_order(F, grid), grid, F.m, ('drift',))


def assemble_div_C(C: DriftField, grid: Grid) -> SparseOperator:
    """The matrix of f -> div(C f) expanded as C . grad f + div(C) f."""
    _check_dims(C.d, grid)
    div = C.divergence(grid.points())
    matrix = _first_order(C, grid)
    if np.any(div):
        matrix = matrix + _block_diagonal(div)
    return SparseOperator(matrix, grid, C.m, ('div_C',))


def assemble_potential(V: PotentialField, grid: Grid) -> SparseOperator:
    """The matrix of f -> -V f."""
    _check_dims(V.d, grid)
    return SparseOperator(-_block_diagonal(V(grid.points())), grid, V.m, ('potential',))


def _compose(Q, F, C, V, grid: Grid, tag: str) -> SparseOperator:
    m = V.m
    L = assemble_diffusion(Q, grid, m)
    L = L - assemble_drift_gradient(F, grid)
    L = L + assemble_div_C(C, grid)
    L = L + assemble_potential(V, grid)
    logger.debug('assembled %s: N=%d nnz=%d', tag, L.N, L.nnz)
    return SparseOperator(L.matrix, grid, m, (tag,) + L.pieces)


def assemble_L(coeffs: CoefficientSet, grid: Grid) -> SparseOperator:
    return _compose(coeffs.Q, coeffs.F, coeffs.C, coeffs.V, grid, 'L')


def assemble_adjoint(coeffs: CoefficientSet, grid: Grid) -> SparseOperator:
    """L* f = div(Q grad f) - C* . grad f + div(F* f) - V^T f, assembled from its own coefficients."""
    return _compose(coeffs.Q, coeffs.C.adjoint(), coeffs.F.adjoint(), coeffs.V.transpose(), grid, 'L*')


class FormValue(NamedTuple):
    a: Union[complex, float, np.ndarray]
    a0: Union[complex, float, np.ndarray]
    b: Union[complex, float, np.ndarray]
    v_term: Union[complex, float, np.ndarray]


class FormEvaluator:
    """
    Discrete sesquilinear form a = a0 + b + v_term with

        a0(f, g) = sum_j <Q grad f_j, grad g_j> + <V_s f, g>
        b(f, g)  = sum_ij (F_ij . grad f_j) conj(g_i) + f_j (C_ij . grad conj(g_i))
        v_term   = <V_as f, g>

    Integrals are nodal sums times the cell volume. The diffusion energy uses
    the same face and cell matrices as assemble_diffusion, so
    a(f, g) = <-L_h f, g> holds exactly up to rounding for the diffusion,
    drift and potential parts; the C part agrees to O(h^2) (exactly for
    constant C).

    Arguments may be GridFunctions, complex arrays of shape (n_nodes, m), or
    batches of shape (T, n_nodes, m); batched input gives arrays of length T.
    """

    def __init__(self, coeffs: CoefficientSet, grid: Grid):
        if coeffs.d != grid.d:
            raise GridMismatchError(f'coefficients have d={coeffs.d} but the grid has d={grid.d}')
        self.coeffs = coeffs
        self.grid = grid
        self.m = coeffs.m
        self.volume = grid.cell_volume
        self.stencil = DiffusionStencil(coeffs.Q, grid)
        self.central = central_differences(grid)
        points = grid.points()
        self.F = coeffs.F(points)
        self.C = coeffs.C(points)
        values = coeffs.V(points)
        self.V_s = 0.5 * (values + np.swapaxes(values, 1, 2))
        self.V_as = values - self.V_s
        self._has_F = bool(np.any(self.F))
        self._has_C = bool(np.any(self.C))
        self._has_V_as = bool(np.any(self.V_as))

    def _values(self, f: ArrayLike) -> np.ndarray:
        if isinstance(f, GridFunction):
            if f.grid != self.grid:
                raise GridMismatchError('grid function does not live on the form grid')
            f = f.values
        f = np.asarray(f)
        if f.ndim == 2:
            f = f[None]
        if f.shape[1:] != (self.grid.n_nodes, self.m):
            raise GridMismatchError(f'expected values of shape (n_nodes, {self.m}), got {f.shape}')
        return f

    @staticmethod
    def _apply(op: sp.spmatrix, X: np.ndarray) -> np.ndarray:
        T, n, m = X.shape
        Y = op @ X.transpose(1, 0, 2).reshape(n, T * m)
        return Y.reshape(op.shape[0], T, m).transpose(1, 0, 2)

    def energy(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        gc = np.conj(g)
        total = np.zeros(len(f), dtype=np.result_type(f, g))
        for D, w in zip(self.stencil.faces, self.stencil.face_weights):
            total = total + np.einsum('r,trj,trj->t', w, self._apply(D, gc), self._apply(D, f))
        if self.stencil.cells:
            G1, G2 = self.stencil.cells
            w = self.stencil.cell_weights
            total = total + np.einsum('r,trj,trj->t', w, self._apply(G1, gc), self._apply(G2, f))
            total = total + np.einsum('r,trj,trj->t', w, self._apply(G2, gc), self._apply(G1, f))
        return self.volume * total

    def drift(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        total = np.zeros(len(f), dtype=np.result_type(f, g))
        gc = np.conj(g)
        for k, Dc in enumerate(self.central):
            if self._has_F:
                total = total + np.einsum('xij,txj,txi->t', self.F[..., k], self._apply(Dc, f), gc)
            if self._has_C:
                total = total + np.einsum('xij,txj,txi->t', self.C[..., k], f, self._apply(Dc, gc))
        return self.volume * total

    def potential(self, f: np.ndarray, g: np.ndarray, part: np.ndarray) -> np.ndarray:
        return self.volume * np.einsum('xij,txj,txi->t', part, f, np.conj(g))

    def pairing(self, f: ArrayLike, g: ArrayLike):
        """<f, g> = volume * sum f conj(g)."""
        batched = isinstance(f, np.ndarray) and np.ndim(f) == 3
        f, g = self._values(f), self._values(g)
        out = self.volume * np.einsum('txj,txj->t', f, np.conj(g))
        return out if batched else out[0]

    def __call__(self, f: ArrayLike, g: ArrayLike) -> FormValue:
        batched = isinstance(f, np.ndarray) and np.ndim(f) == 3
        f, g = self._values(f), self._values(g)
        if f.shape != g.shape:
            raise GridMismatchError(f'form arguments differ in shape: {f.shape} vs {g.shape}')
        a0 = self.energy(f, g) + self.potential(f, g, self.V_s)
        b = self.drift(f, g) if (self._has_F or self._has_C) else np.zeros(len(f))
        v_term = self.potential(f, g, self.V_as) if self._has_V_as else np.zeros(len(f))
        value = FormValue(a0 + b + v_term, a0, b, v_term)
        if batched:
            return value
        return FormValue(*(part[0] for part in value))

    def shifted(self, f: ArrayLike, g: ArrayLike, omega: float):
        """a_omega(f, g) = a(f, g) + omega <f, g>."""
        return self(f, g).a + omega * self.pairing(f, g)


def form_value(f: GridFunction, g: GridFunction, coeffs: CoefficientSet,
               evaluator: Optional[FormEvaluator] = None) -> FormValue:
    if f.grid != g.grid or f.m != g.m:
        raise GridMismatchError('form arguments live on different grids')
    if evaluator is None or evaluator.grid != f.grid:
        evaluator = FormEvaluator(coeffs, f.grid)
    return evaluator(f, g)

