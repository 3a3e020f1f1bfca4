"""Piecewise-linear Galerkin assembly, projections and evaluation.

All systems live on interior degrees of freedom; Dirichlet values are removed
by elimination so that ``M`` and ``K`` stay SPD.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .core import ScalarField, SourceTerm
from .linalg import CholeskyFactor
from .mesh import TriMesh, build_uniform, locate

_S15 = np.sqrt(15.0)

# Barycentric quadrature rules on a triangle; weights sum to one.
QUADRATURE = {
    # three interior points, exact for quadratics
    "interior3": (
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3),
    ),
    # edge midpoints, exact for quadratics
    "midpoint3": (
        np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
        np.full(3, 1 / 3),
    ),
    # seven points, exact for quintics
    "seven": (
        np.array(
            [
                [1 / 3, 1 / 3, 1 / 3],
                [(9 - 2 * _S15) / 21, (6 + _S15) / 21, (6 + _S15) / 21],
                [(6 + _S15) / 21, (9 - 2 * _S15) / 21, (6 + _S15) / 21],
                [(6 + _S15) / 21, (6 + _S15) / 21, (9 - 2 * _S15) / 21],
                [(9 + 2 * _S15) / 21, (6 - _S15) / 21, (6 - _S15) / 21],
                [(6 - _S15) / 21, (9 + 2 * _S15) / 21, (6 - _S15) / 21],
                [(6 - _S15) / 21, (6 - _S15) / 21, (9 + 2 * _S15) / 21],
            ]
        ),
        np.array([9 / 40] + [(155 + _S15) / 1200] * 3 + [(155 - _S15) / 1200] * 3),
    ),
}

DEFAULT_RULE = "interior3"


@dataclass(frozen=True, eq=False)
class ElementData:
    areas: np.ndarray  # (n_tri,)
    grads: np.ndarray  # (n_tri, 3, 2) gradients of the barycentric coordinates


@lru_cache(maxsize=16)
def element_data(mesh: TriMesh) -> ElementData:
    p = mesh.nodes[mesh.triangles]
    areas = mesh.signed_areas()
    # grad(lambda_i) = rot90(edge opposite vertex i) / (2 area)
    grads = np.empty((p.shape[0], 3, 2))
    for i in range(3):
        a, b = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
        edge = b - a
        grads[:, i, 0] = -edge[:, 1]
        grads[:, i, 1] = edge[:, 0]
    grads /= (2.0 * areas)[:, None, None]
    return ElementData(areas, grads)


def quadrature_points(mesh: TriMesh, rule: str = DEFAULT_RULE):
    """Physical quadrature points ``(n_tri, nq, 2)`` and weights ``(n_tri, nq)``."""
    bary, w = QUADRATURE[rule]
    p = mesh.nodes[mesh.triangles]
    pts = np.einsum("qk,tkd->tqd", bary, p)
    weights = element_data(mesh).areas[:, None] * w[None, :]
    return pts, weights


def assemble_full(mesh: TriMesh) -> tuple:
    """Mass and stiffness on all lattice nodes (boundary rows retained)."""
    ed = element_data(mesh)
    tri = mesh.triangles
    local_mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
    Me = ed.areas[:, None, None] * local_mass[None]
    Ke = ed.areas[:, None, None] * np.einsum("tid,tjd->tij", ed.grads, ed.grads)
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_nodes
    M = sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(n, n))
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    for A in (M, K):
        A.sum_duplicates()
        A.sort_indices()
        # exact zeros (e.g. diagonal couplings in K) stay out of the pattern
        A.eliminate_zeros()
    return M, K


@dataclass(frozen=True, eq=False)
class FemSystem:
    mesh: TriMesh
    M: sp.csr_matrix
    K: sp.csr_matrix

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_dofs

    @cached_property
    def mass_factor(self) -> CholeskyFactor:
        return CholeskyFactor(self.M)

    @cached_property
    def stiffness_factor(self) -> CholeskyFactor:
        return CholeskyFactor(self.K)


def assemble(mesh: TriMesh) -> FemSystem:
    """Interior-DOF mass and stiffness matrices for ``mesh``."""
    return _assemble_cached(mesh)


@lru_cache(maxsize=8)
def _assemble_cached(mesh: TriMesh) -> FemSystem:
    M, K = assemble_full(mesh)
    idx = mesh.interior_nodes
    M = M[idx][:, idx].tocsr()
    K = K[idx][:, idx].tocsr()
    for A in (M, K):
        A.sort_indices()
    return FemSystem(mesh, M, K)


def system_for(m: int) -> FemSystem:
    return assemble(build_uniform(m))


def _scatter(mesh: TriMesh, local: np.ndarray) -> np.ndarray:
    """Sum per-element vertex contributions ``(n_tri, 3)`` into interior dofs."""
    full = np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)
    return full[mesh.interior_nodes]


def load_vector(mesh: TriMesh, f, t: float | None = None, rule: str = DEFAULT_RULE) -> np.ndarray:
    """``b_i = (f, phi_i)`` by a per-triangle quadrature rule.

    ``f`` is a :class:`ScalarField`, a :class:`SourceTerm` (evaluated at ``t``)
    or any callable ``f(x, y)``.
    """
    bary, _ = QUADRATURE[rule]
    pts, weights = quadrature_points(mesh, rule)
    x, y = pts[..., 0], pts[..., 1]
    if isinstance(f, SourceTerm):
        if t is None:
            raise ValueError("a time-dependent source needs t")
        vals = f(x, y, t)
    else:
        vals = np.asarray(f(x, y), dtype=float)
    local = np.einsum("tq,qk->tk", weights * vals, bary)
    return _scatter(mesh, local)


def l2_project(sys: FemSystem, f, rule: str = DEFAULT_RULE) -> np.ndarray:
    """Coefficients of the L2 projection onto the P1 space."""
    return sys.mass_factor.solve(load_vector(sys.mesh, f, rule=rule))


class MissingGradientError(ValueError):
    pass


def ritz_project(sys: FemSystem, f: ScalarField, rule: str = DEFAULT_RULE) -> np.ndarray:
    """Coefficients of the Ritz (energy) projection; needs ``f.gradient``."""
    grad = getattr(f, "gradient", None)
    if grad is None:
        raise MissingGradientError(
            "Ritz projection needs an analytic gradient; use l2_project for this field"
        )
    mesh = sys.mesh
    _, w = QUADRATURE[rule]
    pts, weights = quadrature_points(mesh, rule)
    gx, gy = grad(pts[..., 0], pts[..., 1])
    gx = np.broadcast_to(gx, weights.shape)
    gy = np.broadcast_to(gy, weights.shape)
    ed = element_data(mesh)
    mean_gx = np.sum(weights * gx, axis=1)
    mean_gy = np.sum(weights * gy, axis=1)
    local = ed.grads[:, :, 0] * mean_gx[:, None] + ed.grads[:, :, 1] * mean_gy[:, None]
    return sys.stiffness_factor.solve(_scatter(mesh, local))


def interpolate(mesh: TriMesh, f) -> np.ndarray:
    """Nodal interpolant on interior nodes."""
    pts = mesh.dof_points
    return np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)


def interpolated_load(sys: FemSystem, f) -> np.ndarray:
    """``M I_h f``: mass matrix times the nodal interpolant; exact only for f in V_h."""
    return sys.M @ interpolate(sys.mesh, f)


def evaluate(mesh: TriMesh, coeffs, points) -> np.ndarray:
    """Values of the P1 function with interior ``coeffs`` at ``points``."""
    verts, weights = locate(mesh, points)
    full = mesh.to_full(coeffs)
    return np.sum(full[verts] * weights, axis=1)


def l2_norm(sys: FemSystem, coeffs) -> float:
    c = np.asarray(coeffs, dtype=float)
    return float(np.sqrt(max(c @ (sys.M @ c), 0.0)))


def field_l2_norm(f, m: int = 128, rule: str = "seven") -> float:
    """L2 norm of a field on the unit square by element quadrature."""
    mesh = build_uniform(m)
    pts, weights = quadrature_points(mesh, rule)
    vals = np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float)
    return float(np.sqrt(np.sum(weights * vals**2)))


def l2_distance_to_field(mesh: TriMesh, coeffs, f, rule: str = "seven") -> float:
    """``|| u_h - f ||_{L2}`` with ``u_h`` the P1 function of ``coeffs``."""
    bary, _ = QUADRATURE[rule]
    pts, weights = quadrature_points(mesh, rule)
    full = mesh.to_full(coeffs)
    uh = np.einsum("qk,tk->tq", bary, full[mesh.triangles])
    vals = np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float)
    return float(np.sqrt(np.sum(weights * (uh - vals) ** 2)))


def h1_distance_to_field(mesh: TriMesh, coeffs, grad, rule: str = "seven") -> float:
    """``|| grad(u_h - f) ||_{L2}`` given the analytic gradient of ``f``."""
    pts, weights = quadrature_points(mesh, rule)
    ed = element_data(mesh)
    full = mesh.to_full(coeffs)
    guh = np.einsum("tk,tkd->td", full[mesh.triangles], ed.grads)
    gx, gy = grad(pts[..., 0], pts[..., 1])
    dx = guh[:, None, 0] - gx
    dy = guh[:, None, 1] - gy
    return float(np.sqrt(np.sum(weights * (dx**2 + dy**2))))


PROJECTIONS = ("l2", "ritz", "interpolate", "auto")


def initial_vector(sys: FemSystem, field, projection: str = "l2") -> np.ndarray:
    """Discrete initial data.

    ``projection`` is ``l2``, ``ritz`` (needs a gradient), ``interpolate`` or
    ``auto`` (Ritz for smooth fields with a gradient, L2 otherwise).
    """
    if field is None:
        return np.zeros(sys.n_dofs)
    if projection == "auto":
        smooth = field.regularity_tag == "smooth" and field.gradient is not None
        projection = "ritz" if smooth else "l2"
    if projection == "l2":
        return l2_project(sys, field)
    if projection == "ritz":
        return ritz_project(sys, field)
    if projection == "interpolate":
        return interpolate(sys.mesh, field)
    raise ValueError(f"unknown projection {projection!r}; choose from {PROJECTIONS}")
