"""Uniform right-triangle meshes of the unit square.

Node ``(i, j)`` sits at ``(i/m, j/m)`` and has global index ``i + j (m + 1)``.
Every lattice cell is split along its ``(0,0)-(1,1)`` diagonal, which makes the
P1 stiffness matrix coincide with the five-point Laplacian.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

BOUNDARY = -1


@dataclass(frozen=True, eq=False)
class TriMesh:
    m: int
    nodes: np.ndarray  # (n_nodes, 2)
    triangles: np.ndarray  # (n_tri, 3), counter-clockwise
    interior_index: np.ndarray  # node -> dof id, BOUNDARY on the boundary
    interior_nodes: np.ndarray  # dof id -> node

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_dofs(self) -> int:
        return self.interior_nodes.shape[0]

    @property
    def dof_points(self) -> np.ndarray:
        return self.nodes[self.interior_nodes]

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def to_full(self, coeffs: np.ndarray) -> np.ndarray:
        """Extend interior coefficients by zero to all lattice nodes."""
        coeffs = np.asarray(coeffs, dtype=float)
        full = np.zeros(coeffs.shape[:-1] + (self.n_nodes,))
        full[..., self.interior_nodes] = coeffs
        return full

    def to_interior(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values)[..., self.interior_nodes]


@lru_cache(maxsize=16)
def build_uniform(m: int) -> TriMesh:
    """Triangulate the unit square with ``m`` cells per side."""
    if int(m) != m or m < 2:
        raise ValueError(f"need m >= 2 subdivisions for an interior node, got {m!r}")
    m = int(m)
    ticks = np.arange(m + 1) / m
    xx, yy = np.meshgrid(ticks, ticks, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="xy")
    n00 = (i + j * (m + 1)).ravel()
    n10 = n00 + 1
    n01 = n00 + (m + 1)
    n11 = n01 + 1
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    triangles = np.empty((2 * m * m, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    ii, jj = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="xy")
    inner = ((ii > 0) & (ii < m) & (jj > 0) & (jj < m)).ravel()
    interior_nodes = np.flatnonzero(inner)
    interior_index = np.full(nodes.shape[0], BOUNDARY, dtype=np.int64)
    interior_index[interior_nodes] = np.arange(interior_nodes.size)

    for arr in (nodes, triangles, interior_index, interior_nodes):
        arr.setflags(write=False)
    return TriMesh(m, nodes, triangles, interior_index, interior_nodes)


def locate(mesh: TriMesh, points) -> tuple:
    """Containing triangle vertices and barycentric weights for each point.

    Returns ``(vertex_nodes, weights)`` with shapes ``(P, 3)``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    tol = 1e-12
    if np.any((x < -tol) | (x > 1 + tol) | (y < -tol) | (y > 1 + tol)):
        raise ValueError("point outside the unit square")
    m = mesh.m
    sx = np.clip(x, 0.0, 1.0) * m
    sy = np.clip(y, 0.0, 1.0) * m
    ci = np.minimum(np.floor(sx).astype(np.int64), m - 1)
    cj = np.minimum(np.floor(sy).astype(np.int64), m - 1)
    xi = sx - ci
    eta = sy - cj
    n00 = ci + cj * (m + 1)
    n10, n01 = n00 + 1, n00 + m + 1
    n11 = n01 + 1
    low = xi >= eta
    verts = np.where(low[:, None],
                     np.column_stack([n00, n10, n11]),
                     np.column_stack([n00, n11, n01]))
    weights = np.where(low[:, None],
                       np.column_stack([1 - xi, xi - eta, eta]),
                       np.column_stack([1 - eta, xi, eta - xi]))
    return verts, weights


def prolongation(coarse: TriMesh, fine: TriMesh) -> sp.csr_matrix:
    """Sparse map from coarse interior coefficients to fine interior values.

    Built cell by cell from the local offsets ``(p/r, q/r)`` of the fine
    lattice inside each coarse cell, with ``r = fine.m / coarse.m``.
    """
    if fine.m % coarse.m:
        raise ValueError(f"fine m={fine.m} is not a multiple of coarse m={coarse.m}")
    r = fine.m // coarse.m
    mc, mf = coarse.m, fine.m
    rows, cols, vals = [], [], []
    I, J = np.meshgrid(np.arange(mf + 1), np.arange(mf + 1), indexing="xy")
    I, J = I.ravel(), J.ravel()
    ci = np.minimum(I // r, mc - 1)
    cj = np.minimum(J // r, mc - 1)
    p = I - ci * r
    q = J - cj * r
    n00 = ci + cj * (mc + 1)
    low = p >= q
    # barycentric weights in integer units of 1/r
    corners = [
        (n00, np.where(low, r - p, r - q)),
        (np.where(low, n00 + 1, n00 + mc + 2), np.where(low, p - q, p)),
        (np.where(low, n00 + mc + 2, n00 + mc + 1), np.where(low, q, q - p)),
    ]
    fine_row = fine.interior_index[I + J * (mf + 1)]
    for node, w in corners:
        col = coarse.interior_index[node]
        keep = (fine_row != BOUNDARY) & (col != BOUNDARY) & (w != 0)
        rows.append(fine_row[keep])
        cols.append(col[keep])
        vals.append(w[keep] / r)
    P = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(fine.n_dofs, coarse.n_dofs),
    )
    return P


_PROLONG_CACHE: dict = {}


def nested_inject(coarse: TriMesh, fine: TriMesh, coeffs) -> np.ndarray:
    """Nodal values on ``fine`` of the coarse P1 function with ``coeffs``."""
    key = (coarse.m, fine.m)
    P = _PROLONG_CACHE.get(key)
    if P is None:
        P = prolongation(coarse, fine)
        if len(_PROLONG_CACHE) > 32:
            _PROLONG_CACHE.clear()
        _PROLONG_CACHE[key] = P
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] != coarse.n_dofs:
        raise ValueError("coefficient vector does not match the coarse mesh")
    return (P @ coeffs.T).T
