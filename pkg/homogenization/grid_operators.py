"""
Finite-difference operators for L = 1/2 Laplacian + b . grad

Centered second-order stencils on node grids. Along periodic axes the
stencils wrap; along the strip axis x1 they are open and the first and
last rows are left incomplete (those nodes carry boundary data).
The adjoint used for invariant densities is the exact matrix transpose,
so sum((L g) * mu) == sum(g * (L^T mu)) holds to round-off.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from homogenization.errors import SolverError

logger = logging.getLogger(__name__)


def first_derivative(n: int, h: float, periodic: bool = True) -> sparse.csr_matrix:
    """Centered difference (u[i+1] - u[i-1]) / 2h"""
    op = sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n), format='lil')
    if periodic:
        op[0, n - 1] = -1.0
        op[n - 1, 0] = 1.0
    return (op.tocsr() / (2.0 * h)).tocsr()


def second_derivative(n: int, h: float, periodic: bool = True) -> sparse.csr_matrix:
    """Centered difference (u[i+1] - 2u[i] + u[i-1]) / h^2"""
    op = sparse.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1],
                      shape=(n, n), format='lil')
    if periodic:
        op[0, n - 1] = 1.0
        op[n - 1, 0] = 1.0
    return (op.tocsr() / (h * h)).tocsr()


def axis_operator(op: sparse.spmatrix, shape: Sequence[int], axis: int) -> sparse.csr_matrix:
    """Lift a 1D operator to act along `axis` of a C-ordered grid of `shape`"""
    before = int(np.prod(shape[:axis])) if axis > 0 else 1
    after = int(np.prod(shape[axis + 1:])) if axis + 1 < len(shape) else 1
    lifted = sparse.kron(sparse.identity(before, format='csr'),
                         sparse.kron(op, sparse.identity(after, format='csr')))
    return lifted.tocsr()


def generator_matrix(drift: np.ndarray, spacing: Sequence[float],
                     periodic_x1: bool = True) -> sparse.csr_matrix:
    """
    Sparse matrix of L = 1/2 sum_k D2_k + sum_k diag(b_k) D1_k

    Args:
        drift: drift table of shape (d, n_1, ..., n_d)
        spacing: grid spacing per axis
        periodic_x1: wrap the x1 axis (torus) or leave it open (strip)
    """
    d = drift.shape[0]
    shape = drift.shape[1:]
    size = int(np.prod(shape))
    generator = sparse.csr_matrix((size, size))
    for k in range(d):
        periodic = periodic_x1 or k > 0
        d1 = axis_operator(first_derivative(shape[k], spacing[k], periodic), shape, k)
        d2 = axis_operator(second_derivative(shape[k], spacing[k], periodic), shape, k)
        generator = generator + 0.5 * d2 + sparse.diags(drift[k].ravel()) @ d1
    return generator.tocsr()


def apply_generator(values: np.ndarray, drift: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """
    L applied to a periodic grid function with np.roll stencils

    Args:
        values: array of shape (n_1, ..., n_d)
        drift: array of shape (d, n_1, ..., n_d)
    """
    out = np.zeros_like(values, dtype=float)
    for k, h in enumerate(spacing):
        up = np.roll(values, -1, axis=k)
        down = np.roll(values, 1, axis=k)
        out += 0.5 * (up - 2.0 * values + down) / (h * h)
        out += drift[k] * (up - down) / (2.0 * h)
    return out


def centered_gradient(values: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """Periodic centered gradient, shape (d,) + values.shape"""
    return np.stack([
        (np.roll(values, -1, axis=k) - np.roll(values, 1, axis=k)) / (2.0 * h)
        for k, h in enumerate(spacing)
    ])


def weighted_norm(residual: np.ndarray, weight: float) -> float:
    """Discrete L1 norm sum(|r|) * w"""
    return float(np.sum(np.abs(residual)) * weight)


def solve_sparse(matrix: sparse.spmatrix, rhs: np.ndarray, direct_limit: int = 300000,
                 rtol: float = 1e-12, label: str = 'system') -> np.ndarray:
    """
    Solve a square sparse system, directly below `direct_limit` unknowns and
    with ILU-preconditioned GMRES above it.

    Raises:
        SolverError: when GMRES does not converge
    """
    matrix = sparse.csc_matrix(matrix)
    if matrix.shape[0] <= direct_limit:
        solution = spla.spsolve(matrix, rhs)
        if not np.all(np.isfinite(solution)):
            raise SolverError(f"Direct solve of {label} produced non-finite values", stage='solver')
        return solution

    logger.info(f"Solving {label} iteratively ({matrix.shape[0]} unknowns)")
    ilu = spla.spilu(matrix, drop_tol=1e-6, fill_factor=20)
    preconditioner = spla.LinearOperator(matrix.shape, ilu.solve)
    solution, info = spla.gmres(matrix, rhs, M=preconditioner, rtol=rtol, atol=0.0,
                                restart=200, maxiter=2000)
    if info != 0:
        residual = float(np.linalg.norm(matrix @ solution - rhs) / max(np.linalg.norm(rhs), 1e-300))
        raise SolverError(f"GMRES failed on {label} (info={info})", residual=residual)
    return solution


class Factorized:
    """One factorization reused for several right-hand sides"""

    def __init__(self, matrix: sparse.spmatrix, direct_limit: int = 300000,
                 rtol: float = 1e-12, label: str = 'system'):
        self.matrix = sparse.csc_matrix(matrix)
        self.direct_limit = direct_limit
        self.rtol = rtol
        self.label = label
        self._lu: Optional[spla.SuperLU] = None
        if self.matrix.shape[0] <= direct_limit:
            self._lu = spla.splu(self.matrix)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(np.asarray(rhs, dtype=float))
        return solve_sparse(self.matrix, rhs, self.direct_limit, self.rtol, self.label)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape
