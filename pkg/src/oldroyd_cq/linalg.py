"""Sparse SPD operators and the solvers used for the per-step linear systems.

Matrices are plain ``scipy.sparse`` CSR matrices. The direct path is a
symmetric-mode SuperLU factorisation (diagonal pivots, symmetric ordering),
whose pivots double as an SPD check; the iterative path is a diagonally
preconditioned conjugate gradient.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """A linear solve failed; ``residual`` holds the last relative residual."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class NotSPDError(SolverError):
    pass


class Method(enum.Enum):
    CONJUGATE_GRADIENT = "cg"
    DIRECT_CHOLESKY = "cholesky"


@dataclass(frozen=True)
class SolveOptions:
    method: Method = Method.DIRECT_CHOLESKY
    rel_tolerance: float = 1e-12
    max_iterations: int = 10_000

    def __post_init__(self):
        if not self.rel_tolerance > 0:
            raise ValueError("rel_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


def as_csr(A) -> sp.csr_matrix:
    """Canonical CSR form: sorted indices, no duplicates, finite values."""
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise ValueError("matrix has non-finite entries")
    return A


def is_structurally_symmetric(A) -> bool:
    A = as_csr(A)
    pattern = A.copy()
    pattern.data[:] = 1.0
    return (pattern != pattern.T).nnz == 0


def matvec(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape}, vector {x.shape}")
    return A @ x


class CholeskyFactor:
    """Factor-once, solve-many handle for a sparse SPD matrix."""

    def __init__(self, A):
        A = sp.csc_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.shape = A.shape
        if A.shape[0] == 1:
            d = float(A[0, 0])
            if not d > 0:
                raise NotSPDError("nonpositive pivot in 1x1 system")
            self._lu = None
            self._scalar = d
            return
        try:
            lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:  # exactly singular
            raise NotSPDError(f"factorization failed: {exc}") from exc
        pivots = lu.U.diagonal()
        if not np.array_equal(lu.perm_r, lu.perm_c) or np.any(pivots <= 0):
            raise NotSPDError("matrix is not symmetric positive definite")
        self._lu = lu

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self._lu is None:
            return rhs / self._scalar
        return self._lu.solve(rhs)


def conjugate_gradient(A, b, rel_tolerance=1e-12, max_iterations=10_000, x0=None):
    """Jacobi-preconditioned CG; stops when ``||b - A x|| <= tol ||b||``."""
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise NotSPDError("nonpositive diagonal entry")
    inv_d = 1.0 / diag
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    target = rel_tolerance * bnorm
    for _ in range(max_iterations):
        if np.linalg.norm(r) <= target:
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise NotSPDError("nonpositive curvature encountered in CG")
        step = rz / pAp
        x += step * p
        r -= step * Ap
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(b - A @ x) / bnorm
    if res <= rel_tolerance:
        return x
    raise SolverError(f"CG did not converge in {max_iterations} iterations", res)


def combine(c_mass: float, M, c_stiff: float, K) -> sp.csr_matrix:
    """``c_mass * M + c_stiff * K`` as a CSR matrix."""
    return as_csr(c_mass * M + c_stiff * K)


def solve_spd(A, rhs, opts: SolveOptions = SolveOptions()) -> np.ndarray:
    """Solve ``A x = rhs`` for SPD ``A``.

    ``A`` may be a sparse matrix or a tuple ``(c1, M, c2, K)`` standing for
    ``c1 M + c2 K``.
    """
    if isinstance(A, tuple):
        A = combine(*A)
    rhs = np.asarray(rhs, dtype=float)
    if not np.all(np.isfinite(rhs)):
        raise ValueError("right-hand side is not finite")
    if opts.method is Method.CONJUGATE_GRADIENT:
        return conjugate_gradient(as_csr(A), rhs, opts.rel_tolerance, opts.max_iterations)
    return CholeskyFactor(A).solve(rhs)
