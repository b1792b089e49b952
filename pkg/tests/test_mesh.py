import math

import numpy as np
import pytest

from bscahn.mesh import (Mesh, MeshError, build_mesh, bulk_area, export_text,
                         mesh_stats, refine, surface_length, unit_disk_mesh,
                         unit_square_mesh)


def canonical_triangles(m: Mesh):
    """Triangle set keyed by sorted vertex coordinates (ordering-independent)."""
    order = np.lexsort((m.vertices[:, 1], m.vertices[:, 0]))
    rank = np.empty(len(order), dtype=int)
    rank[order] = np.arange(len(order))
    tris = {tuple(sorted(rank[t] for t in tri)) for tri in m.triangles}
    verts = m.vertices[order]
    return verts, tris


class TestUnitSquare:
    def test_minimal(self):
        m = unit_square_mesh(1)
        assert m.n_nodes == 4
        assert m.n_triangles == 2
        assert bulk_area(m) == pytest.approx(1.0, abs=1e-15)

    def test_boundary_edges_uniform(self):
        n = 5
        m = unit_square_mesh(n)
        assert len(m.boundary_edges) == 4 * n
        a = m.vertices[m.boundary_edges[:, 0]]
        b = m.vertices[m.boundary_edges[:, 1]]
        lengths = np.linalg.norm(b - a, axis=1)
        assert np.allclose(lengths, 1.0 / n, atol=1e-15)

    def test_droplet_scale_node_count(self):
        # nearest uniform grid to the 18672-node production mesh
        m = unit_square_mesh(136)
        assert m.n_nodes == 18769

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            unit_square_mesh(0)


class TestUnitDisk:
    @pytest.mark.parametrize("level", range(9))
    def test_node_count_tracks_family(self, level):
        m = unit_disk_mesh(level)
        target = 20 * 2**level
        assert 0.8 * target <= m.n_nodes <= 1.2 * target

    def test_boundary_on_circle(self):
        m = unit_disk_mesh(0)
        radii = np.linalg.norm(m.vertices[m.boundary_nodes], axis=1)
        assert np.max(np.abs(radii - 1.0)) <= 1e-14

    def test_area_converges_to_pi_at_rate_two(self):
        errors, hs = [], []
        for level in range(7):
            m = unit_disk_mesh(level)
            errors.append(math.pi - bulk_area(m))
            hs.append(mesh_stats(m).h_max)
        assert all(e > 0 for e in errors)
        assert all(e1 > e2 for e1, e2 in zip(errors, errors[1:]))  # monotone up
        rates = [math.log(e1 / e2) / math.log(h1 / h2)
                 for (e1, e2), (h1, h2) in zip(zip(errors, errors[1:]),
                                               zip(hs, hs[1:]))]
        assert all(1.7 <= r <= 2.3 for r in rates)

    def test_quality_across_levels(self):
        for level in range(7):
            st = mesh_stats(unit_disk_mesh(level))
            assert st.min_angle >= 20.0
            assert st.h_max / st.h_min <= 3.0

    def test_level_guard(self):
        with pytest.raises(ValueError):
            unit_disk_mesh(13)


class TestRefine:
    def test_triangle_count_quadruples(self):
        m = unit_square_mesh(3)
        assert refine(m).n_triangles == 4 * m.n_triangles

    def test_square_refine_matches_finer_grid(self):
        refined = refine(unit_square_mesh(3))
        direct = unit_square_mesh(6)
        v1, t1 = canonical_triangles(refined)
        v2, t2 = canonical_triangles(direct)
        assert np.allclose(v1, v2, atol=1e-15)
        assert t1 == t2

    def test_disk_refine_keeps_circle(self):
        m = refine(unit_disk_mesh(1), project_to_circle=True)
        radii = np.linalg.norm(m.vertices[m.boundary_nodes], axis=1)
        assert np.max(np.abs(radii - 1.0)) <= 1e-14

    def test_h_max_halves_on_square(self):
        m = unit_square_mesh(4)
        assert mesh_stats(refine(m)).h_max <= 0.55 * mesh_stats(m).h_max

    def test_refine_preserves_single_loop(self):
        m = refine(refine(unit_disk_mesh(0), project_to_circle=True),
                   project_to_circle=True)
        # build_mesh re-validates the single-loop property on construction
        assert len(m.boundary_edges) == len(m.boundary_nodes)


class TestStats:
    def test_square_h_max(self):
        assert mesh_stats(unit_square_mesh(2)).h_max == pytest.approx(
            math.sqrt(2.0) / 2.0, abs=1e-15)

    def test_counts(self):
        st = mesh_stats(unit_square_mesh(4))
        assert st.n_nodes == 25
        assert st.n_boundary_nodes == 16


class TestInvariants:
    @pytest.mark.parametrize("make", [
        lambda: unit_square_mesh(4),
        lambda: unit_disk_mesh(2),
        lambda: refine(unit_disk_mesh(1), project_to_circle=True),
    ])
    def test_shoelace_matches_triangle_areas(self, make):
        m = make()
        loop = m.vertices[m.boundary_nodes]
        x, y = loop[:, 0], loop[:, 1]
        shoelace = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert abs(shoelace - bulk_area(m)) <= 1e-12

    def test_interior_edges_shared_twice(self):
        m = unit_disk_mesh(1)
        t = m.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        und = np.sort(edges, axis=1)
        _, counts = np.unique(und, axis=0, return_counts=True)
        n_boundary = np.sum(counts == 1)
        assert n_boundary == len(m.boundary_edges)
        assert np.all((counts == 1) | (counts == 2))

    def test_rejects_flipped_triangle(self):
        with pytest.raises(MeshError):
            build_mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                       np.array([[0, 2, 1]]))

    def test_rejects_out_of_range_index(self):
        with pytest.raises(MeshError):
            build_mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                       np.array([[0, 1, 3]]))


class TestExport:
    def test_plain_text_format(self):
        m = unit_square_mesh(1)
        text = export_text(m)
        lines = text.strip().split("\n")
        assert lines[0] == "nodes 4 triangles 2 boundary 4"
        assert len(lines) == 1 + 4 + 2 + 4
        # vertex lines parse back exactly
        verts = np.array([[float(v) for v in line.split()] for line in lines[1:5]])
        assert np.array_equal(verts, m.vertices)

    def test_deterministic(self):
        assert export_text(unit_disk_mesh(1)) == export_text(unit_disk_mesh(1))

    def test_surface_length_square(self):
        assert surface_length(unit_square_mesh(3)) == pytest.approx(4.0, abs=1e-14)
