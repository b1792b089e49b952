"""Triangulations of the unit disk and unit square with exact boundary nodes.

The disk family is parametrized by a resolution ``level`` so that the node
count tracks ``20 * 2**level``: a spiderweb of concentric rings in which
ring ``j`` carries ``6*j`` nodes, giving constant arc spacing and a
quasi-uniform mesh.  Boundary vertices are placed exactly on the unit
circle.  The square family is the uniform right-triangle grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DISK_LEVEL = 12  # memory guard
_SECTORS = 6  # nodes added per ring of the disk spiderweb


@dataclass(eq=False)
class Mesh:
    """Immutable triangle mesh of a polygonal domain.

    Attributes
    ----------
    vertices : ndarray, shape (N, 2)
    triangles : ndarray of int, shape (T, 3)
        Counterclockwise vertex triples.
    boundary_edges : ndarray of int, shape (B, 2)
        Directed edges traversing the boundary loop counterclockwise.
    boundary_nodes : ndarray of int, shape (B,)
        Loop-ordered boundary vertex indices; ``boundary_edges[i] ==
        (boundary_nodes[i], boundary_nodes[(i+1) % B])``.
    h_max : float
        Longest triangle edge.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_nodes: np.ndarray
    h_max: float

    @property
    def n_nodes(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)


@dataclass
class MeshStats:
    h_max: float
    h_min: float
    min_angle: float  # degrees
    n_nodes: int
    n_boundary_nodes: int


class MeshError(ValueError):
    """The vertex/triangle data does not describe a valid mesh."""


def _signed_areas(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _edge_lengths(vertices, triangles):
    p = vertices[triangles]
    out = np.empty((len(triangles), 3))
    for a in range(3):
        out[:, a] = np.linalg.norm(p[:, (a + 1) % 3] - p[:, a], axis=1)
    return out


def build_mesh(vertices, triangles) -> Mesh:
    """Validate raw arrays and derive boundary structure.

    Requires positive triangle orientation, every directed edge unique,
    and a single closed boundary loop.
    """
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must be (N, 2)")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshError("triangles must be (T, 3)")
    if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
        raise MeshError("triangle index out of range")

    areas = _signed_areas(vertices, triangles)
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        raise MeshError(f"triangle {bad} is degenerate or clockwise (area {areas[bad]:.3e})")

    # directed edges in traversal order; interior edges appear once per direction
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    if len(np.unique(edges, axis=0)) != len(edges):
        raise MeshError("a directed edge appears twice (inconsistent orientation)")
    undirected = np.sort(edges, axis=1)
    _, first, counts = np.unique(undirected, axis=0, return_index=True, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("an edge is shared by more than two triangles")
    boundary = edges[first[counts == 1]]

    # chain the boundary edges into a single loop, starting at the smallest node
    succ = {}
    for i, j in boundary:
        if int(i) in succ:
            raise MeshError("boundary is not a simple loop")
        succ[int(i)] = int(j)
    if not succ:
        raise MeshError("mesh has no boundary")
    start = min(succ)
    loop = [start]
    node = succ[start]
    while node != start:
        loop.append(node)
        node = succ.get(node, start)
        if len(loop) > len(boundary):
            raise MeshError("boundary loop does not close")
    if len(loop) != len(boundary):
        raise MeshError("boundary has more than one loop")
    loop = np.asarray(loop, dtype=np.int64)
    boundary_edges = np.stack([loop, np.roll(loop, -1)], axis=1)

    h_max = float(_edge_lengths(vertices, triangles).max())
    return Mesh(vertices, triangles, boundary_edges, loop, h_max)


# ---------------------------------------------------------------------------
# generators


def unit_square_mesh(n: int) -> Mesh:
    """Uniform right-triangle grid on (0,1)^2 with ``(n+1)**2`` vertices."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    vertices = np.stack([xx.ravel(), yy.ravel()], axis=1)

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return build_mesh(vertices, np.asarray(tris))


def _disk_rings(level: int) -> int:
    """Ring count whose node total best matches ``20 * 2**level``."""
    target = 20 * 2**level
    # nodes(R) = 1 + S * R(R+1)/2 with S sectors
    r_est = (-1 + np.sqrt(1 + 8 * (target - 1) / _SECTORS)) / 2
    candidates = {max(1, int(np.floor(r_est))), int(np.ceil(r_est))}
    return min(candidates, key=lambda r: (abs(1 + _SECTORS * r * (r + 1) // 2 - target), r))


def _merge_ring_band(inner_ids, inner_angles, outer_ids, outer_angles):
    """Triangulate the band between two concentric node rings.

    Walks both rings in angle order and advances whichever ring has the
    smaller next angle, emitting one triangle per advance.
    """
    ni, no = len(inner_ids), len(outer_ids)
    pad_i = np.append(inner_angles, inner_angles[0] + 2 * np.pi)
    pad_o = np.append(outer_angles, outer_angles[0] + 2 * np.pi)
    tris = []
    i = j = 0
    while i < ni or j < no:
        advance_outer = j < no and (i == ni or pad_o[j + 1] <= pad_i[i + 1])
        if advance_outer:
            tris.append((inner_ids[i % ni], outer_ids[j % no], outer_ids[(j + 1) % no]))
            j += 1
        else:
            tris.append((inner_ids[i % ni], outer_ids[j % no], inner_ids[(i + 1) % ni]))
            i += 1
    return tris


def unit_disk_mesh(level: int) -> Mesh:
    """Spiderweb mesh of the unit disk with about ``20 * 2**level`` nodes.

    Ring ``j`` of ``R`` sits at radius ``j/R`` and carries ``6*j`` nodes,
    so radial and arc spacings agree and the family is quasi-uniform.
    The outermost ring lies exactly on the unit circle.
    """
    if level < 0:
        raise ValueError("level must be non-negative")
    if level > MAX_DISK_LEVEL:
        raise ValueError(f"level {level} exceeds guard {MAX_DISK_LEVEL}")
    rings = _disk_rings(level)

    vertices = [np.zeros((1, 2))]
    ring_ids, ring_angles = [], []
    offset = 1
    for j in range(1, rings + 1):
        count = _SECTORS * j
        angles = 2 * np.pi * np.arange(count) / count
        radius = j / rings
        vertices.append(radius * np.stack([np.cos(angles), np.sin(angles)], axis=1))
        ring_ids.append(np.arange(offset, offset + count, dtype=np.int64))
        ring_angles.append(angles)
        offset += count
    vertices = np.concatenate(vertices)

    tris = [(0, ring_ids[0][i], ring_ids[0][(i + 1) % _SECTORS]) for i in range(_SECTORS)]
    for j in range(1, rings):
        tris.extend(_merge_ring_band(ring_ids[j - 1], ring_angles[j - 1],
                                     ring_ids[j], ring_angles[j]))
    tris = np.asarray(tris, dtype=np.int64)

    # enforce counterclockwise orientation (band merge can emit either order)
    areas = _signed_areas(vertices, tris)
    flip = areas < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return build_mesh(vertices, tris)


def refine(m: Mesh, project_to_circle: bool = False) -> Mesh:
    """Uniform red refinement; each triangle splits into four.

    New midpoints of boundary edges are pushed radially onto the unit
    circle iff ``project_to_circle`` (the disk family); interior midpoints
    stay put, so ``h_max`` halves up to the projection perturbation.
    """
    tris = m.triangles
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    keys = np.sort(edges, axis=1)
    unique_keys, inverse = np.unique(keys, axis=0, return_inverse=True)

    mid = 0.5 * (m.vertices[unique_keys[:, 0]] + m.vertices[unique_keys[:, 1]])
    if project_to_circle:
        bkeys = np.sort(m.boundary_edges, axis=1)
        on_boundary = np.zeros(len(unique_keys), dtype=bool)
        lookup = {(int(a), int(b)): idx for idx, (a, b) in enumerate(unique_keys)}
        for a, b in bkeys:
            on_boundary[lookup[(int(a), int(b))]] = True
        norms = np.linalg.norm(mid[on_boundary], axis=1)
        mid[on_boundary] /= norms[:, None]

    mid_ids = len(m.vertices) + np.arange(len(unique_keys))
    vertices = np.concatenate([m.vertices, mid])

    t = len(tris)
    m01 = mid_ids[inverse[0:t]]
    m12 = mid_ids[inverse[t:2 * t]]
    m20 = mid_ids[inverse[2 * t:3 * t]]
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    children = np.concatenate([
        np.stack([v0, m01, m20], axis=1),
        np.stack([m01, v1, m12], axis=1),
        np.stack([m20, m12, v2], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])
    return build_mesh(vertices, children)


def mesh_stats(m: Mesh) -> MeshStats:
    """Geometric summary used by the convergence driver and quality checks."""
    lengths = _edge_lengths(m.vertices, m.triangles)
    p = m.vertices[m.triangles]
    angles = np.empty((len(m.triangles), 3))
    for a in range(3):
        u = p[:, (a + 1) % 3] - p[:, a]
        v = p[:, (a + 2) % 3] - p[:, a]
        cosang = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles[:, a] = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return MeshStats(
        h_max=float(lengths.max()),
        h_min=float(lengths.min()),
        min_angle=float(angles.min()),
        n_nodes=m.n_nodes,
        n_boundary_nodes=len(m.boundary_nodes),
    )


def bulk_area(m: Mesh) -> float:
    """Total triangle area (equals the shoelace area of the boundary loop)."""
    return float(_signed_areas(m.vertices, m.triangles).sum())


def surface_length(m: Mesh) -> float:
    """Length of the boundary polyline."""
    a = m.vertices[m.boundary_edges[:, 0]]
    b = m.vertices[m.boundary_edges[:, 1]]
    return float(np.linalg.norm(b - a, axis=1).sum())


def export_text(m: Mesh) -> str:
    """Plain-text serialization with deterministic ordering."""
    lines = [f"nodes {m.n_nodes} triangles {m.n_triangles} boundary {len(m.boundary_edges)}"]
    for x, y in m.vertices:
        lines.append(f"{x:.17g} {y:.17g}")
    for i, j, k in m.triangles:
        lines.append(f"{i} {j} {k}")
    for i, j in m.boundary_edges:
        lines.append(f"{i} {j}")
    return "\n".join(lines) + "\n"


def export_mesh(m: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(export_text(m))
