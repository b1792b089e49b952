"""P1 finite element assembly on a bulk triangulation and its boundary polyline.

Element matrices use closed-form exact integration; load vectors use a
degree-4 rule on triangles and 3-point Gauss on edges, keeping quadrature
error below the O(h^2) discretization error.  Surface operators act on
boundary degrees of freedom in loop order; the tangential gradient on a
polyline edge is the 1D derivative along the edge.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from .linalg import SparseMatrix
from .mesh import Mesh, _signed_areas

# geometry quantities are mesh-static; cache them per mesh instance
_GEOMETRY_CACHE: "weakref.WeakKeyDictionary[Mesh, dict]" = weakref.WeakKeyDictionary()


def _cached(m: Mesh, key: str, compute):
    entry = _GEOMETRY_CACHE.setdefault(m, {})
    if key not in entry:
        entry[key] = compute()
    return entry[key]


class DegenerateElementError(ValueError):
    """A triangle has vanishing area or an edge has vanishing length."""


@dataclass(frozen=True)
class DofMap:
    """Index bookkeeping between bulk and surface nodal spaces.

    ``surf_to_bulk[s]`` is the mesh vertex carrying surface DOF ``s``;
    surface DOFs follow the counterclockwise boundary loop.
    """

    n_bulk: int
    n_surf: int
    surf_to_bulk: np.ndarray

    @classmethod
    def from_mesh(cls, m: Mesh) -> "DofMap":
        nodes = np.asarray(m.boundary_nodes, dtype=np.int64)
        if len(np.unique(nodes)) != len(nodes):
            raise ValueError("boundary nodes are not distinct")
        return cls(n_bulk=m.n_nodes, n_surf=len(nodes), surf_to_bulk=nodes)


# ---------------------------------------------------------------------------
# quadrature rules (barycentric / reference-interval, weights sum to 1)

# 6-point degree-4 triangle rule (two symmetric orbits)
_TRI_A1, _TRI_W1 = 0.445948490915965, 0.223381589678011
_TRI_A2, _TRI_W2 = 0.091576213509771, 0.109951743655322
TRI_QUAD_BARY = np.array(
    [
        [1 - 2 * _TRI_A1, _TRI_A1, _TRI_A1],
        [_TRI_A1, 1 - 2 * _TRI_A1, _TRI_A1],
        [_TRI_A1, _TRI_A1, 1 - 2 * _TRI_A1],
        [1 - 2 * _TRI_A2, _TRI_A2, _TRI_A2],
        [_TRI_A2, 1 - 2 * _TRI_A2, _TRI_A2],
        [_TRI_A2, _TRI_A2, 1 - 2 * _TRI_A2],
    ]
)
TRI_QUAD_W = np.array([_TRI_W1] * 3 + [_TRI_W2] * 3)

# 3-point Gauss-Legendre on [0, 1]
_G = 0.5 * np.sqrt(3.0 / 5.0)
EDGE_QUAD_S = np.array([0.5 - _G, 0.5, 0.5 + _G])
EDGE_QUAD_W = np.array([5.0, 8.0, 5.0]) / 18.0


# ---------------------------------------------------------------------------
# geometry helpers shared with error norms and residual loads


def tri_geometry(m: Mesh):
    """Per-triangle areas and constant P1 basis gradients.

    Returns ``(areas (T,), grads (T, 3, 2))`` where ``grads[t, a]`` is the
    gradient of the barycentric basis function of local vertex ``a``.
    """

    def compute():
        areas = _signed_areas(m.vertices, m.triangles)
        if np.any(areas <= 0.0):
            raise DegenerateElementError("triangle with non-positive area")
        p = m.vertices[m.triangles]
        grads = np.empty((len(m.triangles), 3, 2))
        for a in range(3):
            edge = p[:, (a + 1) % 3] - p[:, (a + 2) % 3]
            # rotate the opposite edge by -90 degrees: (x, y) -> (y, -x)
            grads[:, a, 0] = edge[:, 1]
            grads[:, a, 1] = -edge[:, 0]
        grads /= (2.0 * areas)[:, None, None]
        return areas, grads

    return _cached(m, "tri_geometry", compute)


def tri_quad_points(m: Mesh) -> np.ndarray:
    """Mapped degree-4 quadrature points, shape (T, Q, 2)."""

    def compute():
        p = m.vertices[m.triangles]  # (T, 3, 2)
        return np.einsum("qa,tad->tqd", TRI_QUAD_BARY, p)

    return _cached(m, "tri_quad_points", compute)


def edge_geometry(m: Mesh):
    """Boundary edge lengths and unit tangents, in loop order."""

    def compute():
        a = m.vertices[m.boundary_edges[:, 0]]
        b = m.vertices[m.boundary_edges[:, 1]]
        d = b - a
        lengths = np.linalg.norm(d, axis=1)
        if np.any(lengths <= 0.0):
            raise DegenerateElementError("boundary edge with zero length")
        return lengths, d / lengths[:, None]

    return _cached(m, "edge_geometry", compute)


def edge_quad_points(m: Mesh) -> np.ndarray:
    """Mapped 3-point Gauss points per boundary edge, shape (B, Q, 2)."""

    def compute():
        a = m.vertices[m.boundary_edges[:, 0]]
        b = m.vertices[m.boundary_edges[:, 1]]
        return a[:, None, :] + EDGE_QUAD_S[None, :, None] * (b - a)[:, None, :]

    return _cached(m, "edge_quad_points", compute)


# ---------------------------------------------------------------------------
# element matrices


def element_mass_tri(area: float) -> np.ndarray:
    return (area / 12.0) * np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])


def element_mass_edge(length: float) -> np.ndarray:
    return (length / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])


def element_stiffness_edge(length: float) -> np.ndarray:
    return (1.0 / length) * np.array([[1.0, -1.0], [-1.0, 1.0]])


def _assemble_tri(m: Mesh, local: np.ndarray) -> SparseMatrix:
    """Scatter (T, 3, 3) local matrices into an N x N CSR matrix."""
    t = m.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return SparseMatrix.from_coo(m.n_nodes, m.n_nodes, rows, cols, local.ravel())


def bulk_mass(m: Mesh) -> SparseMatrix:
    """Bulk mass matrix, exact for P1 products."""
    areas, _ = tri_geometry(m)
    base = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    return _assemble_tri(m, areas[:, None, None] * base)


def bulk_stiffness(m: Mesh) -> SparseMatrix:
    """Bulk stiffness matrix; kernel is the constants on a connected mesh."""
    areas, grads = tri_geometry(m)
    local = areas[:, None, None] * np.einsum("tad,tbd->tab", grads, grads)
    return _assemble_tri(m, local)


def _assemble_edge(m: Mesh, local: np.ndarray) -> SparseMatrix:
    """Scatter (B, 2, 2) local matrices into an M x M surface CSR matrix."""
    nsurf = len(m.boundary_nodes)
    s = np.arange(nsurf)
    pairs = np.stack([s, (s + 1) % nsurf], axis=1)  # edge i joins surface DOFs i, i+1
    rows = np.repeat(pairs, 2, axis=1).ravel()
    cols = np.tile(pairs, (1, 2)).ravel()
    return SparseMatrix.from_coo(nsurf, nsurf, rows, cols, local.ravel())


def surface_mass(m: Mesh) -> SparseMatrix:
    lengths, _ = edge_geometry(m)
    base = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    return _assemble_edge(m, lengths[:, None, None] * base)


def surface_stiffness(m: Mesh) -> SparseMatrix:
    lengths, _ = edge_geometry(m)
    base = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return _assemble_edge(m, base[None, :, :] / lengths[:, None, None])


def trace_matrix(d: DofMap) -> SparseMatrix:
    """Selection matrix restricting a bulk nodal vector to the boundary DOFs."""
    rows = np.arange(d.n_surf)
    return SparseMatrix.from_coo(d.n_surf, d.n_bulk, rows, d.surf_to_bulk,
                                 np.ones(d.n_surf))


# ---------------------------------------------------------------------------
# load vectors


def bulk_load(m: Mesh, f, t: float) -> np.ndarray:
    """Assemble ``b_i = sum_T int_T f(., t) phi_i`` with the degree-4 rule.

    ``f(t, pts)`` must accept a (k, 2) point array and return (k,) values.
    """
    areas, _ = tri_geometry(m)
    pts = tri_quad_points(m)
    fvals = f(t, pts.reshape(-1, 2)).reshape(pts.shape[0], pts.shape[1])
    # contribution of local basis a on triangle T: area * sum_q w_q f_q bary[q, a]
    contrib = areas[:, None] * np.einsum("tq,q,qa->ta", fvals, TRI_QUAD_W, TRI_QUAD_BARY)
    b = np.zeros(m.n_nodes)
    np.add.at(b, m.triangles.ravel(), contrib.ravel())
    return b


def surface_load(m: Mesh, g, t: float) -> np.ndarray:
    """Assemble the boundary load with 3-point Gauss per edge (surface DOFs)."""
    lengths, _ = edge_geometry(m)
    pts = edge_quad_points(m)
    gvals = g(t, pts.reshape(-1, 2)).reshape(pts.shape[0], pts.shape[1])
    basis = np.stack([1.0 - EDGE_QUAD_S, EDGE_QUAD_S], axis=1)  # (Q, 2)
    contrib = lengths[:, None] * np.einsum("bq,q,qa->ba", gvals, EDGE_QUAD_W, basis)
    nsurf = len(m.boundary_nodes)
    out = np.zeros(nsurf)
    s = np.arange(nsurf)
    np.add.at(out, s, contrib[:, 0])
    np.add.at(out, (s + 1) % nsurf, contrib[:, 1])
    return out
