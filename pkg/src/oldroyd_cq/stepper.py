"""Fully discrete time stepping by convolution quadrature.

Two schemes are provided on a P1 system (mass ``M``, stiffness ``K``) or on a
single eigenmode (``M -> 1``, ``K -> lam``):

``BackwardEuler``
    ``(d + a d^{1+alpha}) U^n + mu (1 + b d^beta) A_h U^n = a d^{1+alpha} v + f^n``
    with BE convolutions; ``d`` and ``d^{1+alpha}`` run over the full history
    ``U^0 = v`` while ``d^beta`` skips ``U^0``. Keeping ``U^0`` in the
    ``d^beta`` sum leaves an ``O(tau^{1-beta})`` start-up defect.

``CorrectedSBD``
    the BDF2 convolution quadrature with the initial correction: a special
    first step carrying ``(mu/2) A_h v`` and ``f^1 + f^0 / 2``, the shifted
    history ``U^j - v`` inside ``d^{1+alpha}``, and the modified
    ``d^beta`` rule that halves the weight on ``U^0``.

Multiplying by ``M`` turns every step into one SPD solve with the constant
matrix ``(w1_0 + a wa_0) M + mu (1 + b wb_0) K``, factored once per run.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .core import ModelParams, SourceTerm
from .cq import Generator, weights
from .fem import FemSystem, load_vector
from .linalg import CholeskyFactor, Method, SolveOptions, SolverError, combine, conjugate_gradient


class SchemeKind(enum.Enum):
    BACKWARD_EULER = "be"
    CORRECTED_SBD = "sbd"

    @classmethod
    def parse(cls, value) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"be": cls.BACKWARD_EULER, "backward_euler": cls.BACKWARD_EULER,
                   "backwardeuler": cls.BACKWARD_EULER, "sbd": cls.CORRECTED_SBD,
                   "corrected_sbd": cls.CORRECTED_SBD, "correctedsbd": cls.CORRECTED_SBD}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown scheme {value!r}") from None

    @property
    def generator(self) -> Generator:
        return Generator.BE if self is SchemeKind.BACKWARD_EULER else Generator.SBD


class SteppingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Trajectory:
    tau: float
    times: np.ndarray
    snapshots: np.ndarray  # (n_stored, n_dofs); scalars are stored as length-1 rows
    steps: np.ndarray  # step index of each stored snapshot
    scheme: SchemeKind
    params: ModelParams

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    @property
    def N(self) -> int:
        return int(self.steps[-1])


Spatial = Union[FemSystem, float]


def _operators(space: Spatial):
    if isinstance(space, FemSystem):
        return space.M, space.K
    lam = float(space)
    if not lam > 0:
        raise ValueError("eigenvalue must be positive")
    return sp.csr_matrix([[1.0]]), sp.csr_matrix([[lam]])


def _lhs_coefficients(params: ModelParams, generator: Generator, tau: float):
    w1 = weights(generator, 1.0, tau, 0).weights[0]
    wa = weights(generator, 1.0 + params.alpha, tau, 0).weights[0]
    wb = weights(generator, params.beta, tau, 0).weights[0]
    return w1 + params.a * wa, params.mu * (1.0 + params.b * wb)


@dataclass(frozen=True, eq=False)
class StepOperator:
    matrix: sp.csr_matrix
    mass_coefficient: float
    stiffness_coefficient: float
    opts: SolveOptions

    def __post_init__(self):
        if self.opts.method is Method.DIRECT_CHOLESKY:
            object.__setattr__(self, "_factor", CholeskyFactor(self.matrix))

    def solve(self, rhs):
        if self.opts.method is Method.DIRECT_CHOLESKY:
            return self._factor.solve(rhs)
        return conjugate_gradient(self.matrix, rhs, self.opts.rel_tolerance,
                                  self.opts.max_iterations)


@lru_cache(maxsize=8)
def _step_operator(space, params, scheme, tau, opts) -> StepOperator:
    M, K = _operators(space)
    cm, ck = _lhs_coefficients(params, scheme.generator, tau)
    return StepOperator(combine(cm, M, ck, K), cm, ck, opts)


def step_matrix(space: Spatial, params: ModelParams, scheme, tau: float,
                opts: SolveOptions = SolveOptions()) -> StepOperator:
    """The constant left-hand operator of every step, with its factorization."""
    return _step_operator(space, params, SchemeKind.parse(scheme), float(tau), opts)


def _load_sampler(space: Spatial, source) -> Optional[Callable[[float], np.ndarray]]:
    if source is None:
        return None
    if isinstance(source, SourceTerm):
        if not isinstance(space, FemSystem):
            raise TypeError("scalar mode takes a callable modal source, not a SourceTerm")
        mesh = space.mesh
        if source.separable:
            spatial = load_vector(mesh, source.spatial)
            return lambda t: float(source.temporal(t)) * spatial
        return lambda t: load_vector(mesh, source, t)
    if callable(source):
        return lambda t: np.atleast_1d(np.asarray(source(t), dtype=float))
    raise TypeError("source must be None, a SourceTerm or a callable of t")


def march(space: Spatial, params: ModelParams, v, source, N: int, generator: Generator,
          corrected: bool, T: Optional[float] = None, store_every: int = 1,
          opts: SolveOptions = SolveOptions()) -> Trajectory:
    """Shared driver for both schemes.

    ``corrected=False`` with the SBD generator gives the plain (order-reduced)
    BDF2 quadrature; it is kept for demonstrations only.
    """
    if N < 1:
        raise ValueError("need at least one time step")
    T = params.T if T is None else float(T)
    tau = T / N
    M, K = _operators(space)
    v = np.atleast_1d(np.asarray(v, dtype=float)).copy()
    if v.shape != (M.shape[0],):
        raise ValueError(f"initial vector has shape {v.shape}, expected ({M.shape[0]},)")
    a, b, mu = params.a, params.b, params.mu
    scheme = SchemeKind.BACKWARD_EULER if generator is Generator.BE else SchemeKind.CORRECTED_SBD
    if corrected and generator is not Generator.SBD:
        raise ValueError("the initial correction belongs to the SBD scheme")

    w1 = weights(generator, 1.0, tau, N).weights
    wa = weights(generator, 1.0 + params.alpha, tau, N).weights
    wb = weights(generator, params.beta, tau, N).weights
    prefix_a = np.cumsum(wa)
    op = step_matrix(space, params, scheme, tau, opts)
    loads = _load_sampler(space, source)

    U = np.empty((N + 1, v.size))
    U[0] = v
    Mv = M @ v
    Kv = K @ v
    coef = np.empty((2, N))
    zero_load = np.zeros(v.size)
    load_prev = loads(0.0) if loads is not None else zero_load

    for n in range(1, N + 1):
        idx = np.arange(n, 0, -1)  # weight index n - j for j = 0..n-1
        cM = coef[0, :n]
        cK = coef[1, :n]
        np.add(w1[idx], a * wa[idx], out=cM)
        cK[:] = wb[idx]
        load = loads(n * tau) if loads is not None else zero_load
        extra_K = 0.0
        if not corrected:
            extra_M = a * prefix_a[n]
            rhs_load = load
            if generator is Generator.BE:
                # d^beta acts on (0, U^1, U^2, ...): BE image of the 1_tau shift
                cK[0] = 0.0
        elif n == 1:
            cM[0] = 0.0
            cK[0] = 0.5 * wb[0]
            extra_M = w1[0] + a * wa[0]
            extra_K = -0.5 * mu
            rhs_load = load + 0.5 * load_prev
        else:
            cM[0] = w1[n]
            cK[0] = 0.5 * wb[n - 1]
            extra_M = a * prefix_a[n - 1]
            rhs_load = load
        hist = coef[:, :n] @ U[:n]
        rhs = rhs_load - M @ hist[0] + extra_M * Mv - (mu * b) * (K @ hist[1])
        if extra_K:
            rhs += extra_K * Kv
        try:
            U[n] = op.solve(rhs)
        except SolverError as exc:
            raise SteppingError(f"linear solve failed at step {n}: {exc}") from exc
        if not np.all(np.isfinite(U[n])):
            raise SteppingError(f"non-finite solution at step {n}")

    steps = np.arange(0, N + 1, max(int(store_every), 1))
    if steps[-1] != N:
        steps = np.append(steps, N)
    snaps = U if steps.size == N + 1 else U[steps]
    return Trajectory(tau, steps * tau, snaps, steps, scheme, params)


def be_solve(space: Spatial, params: ModelParams, v, source=None, N: int = 100,
             T: Optional[float] = None, **kw) -> Trajectory:
    """Backward Euler convolution quadrature."""
    return march(space, params, v, source, N, Generator.BE, False, T=T, **kw)


def sbd_solve(space: Spatial, params: ModelParams, v, source=None, N: int = 100,
              T: Optional[float] = None, **kw) -> Trajectory:
    """Corrected second-order backward difference convolution quadrature."""
    return march(space, params, v, source, N, Generator.SBD, True, T=T, **kw)


def solve(scheme, space: Spatial, params: ModelParams, v, source=None, N: int = 100,
          T: Optional[float] = None, **kw) -> Trajectory:
    scheme = SchemeKind.parse(scheme)
    runner = be_solve if scheme is SchemeKind.BACKWARD_EULER else sbd_solve
    return runner(space, params, v, source, N, T=T, **kw)
