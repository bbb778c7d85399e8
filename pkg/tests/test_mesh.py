import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import three_fins, two_triangles
from l2m import shapes
from l2m.mesh import (
    EDGE_BOUNDARY, EDGE_INTERIOR, EDGE_NONMANIFOLD, Mesh, MeshError, build_topology, load_mesh,
    normalize_to_unit_cube, save_mesh, validate,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoad:
    def test_minimal_obj(self, tmp_path):
        m = load_mesh(write(tmp_path, "a.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
        assert (m.n_vertices, m.n_faces) == (3, 1)
        np.testing.assert_array_equal(m.faces, [[0, 1, 2]])

    def test_off_tetrahedron(self, tmp_path):
        text = "OFF\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 1 2 3\n3 0 3 2\n"
        m = load_mesh(write(tmp_path, "t.off", text))
        assert (m.n_vertices, m.n_faces) == (4, 4)

    def test_quad_fan_split(self, tmp_path):
        m = load_mesh(write(tmp_path, "q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"))
        np.testing.assert_array_equal(m.faces, [[0, 1, 2], [0, 2, 3]])

    def test_obj_ignores_normals_and_texcoords(self, tmp_path):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\nf 1/1/1 2/1/1 3//1\n"
        assert load_mesh(write(tmp_path, "n.obj", text)).n_faces == 1

    def test_negative_obj_indices(self, tmp_path):
        m = load_mesh(write(tmp_path, "n.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n"))
        np.testing.assert_array_equal(m.faces, [[0, 1, 2]])

    def test_parse_error_names_line(self, tmp_path):
        with pytest.raises(MeshError, match="line 2"):
            load_mesh(write(tmp_path, "b.obj", "v 0 0 0\nv 1 x 0\nv 0 1 0\nf 1 2 3\n"))

    def test_out_of_range_index(self, tmp_path):
        with pytest.raises(MeshError, match="line 4"):
            load_mesh(write(tmp_path, "b.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(MeshError):
            load_mesh(write(tmp_path, "e.obj", "# nothing\n"))

    def test_bad_extension(self, tmp_path):
        with pytest.raises(MeshError):
            load_mesh(write(tmp_path, "e.stl", "solid"))

    def test_repeated_index_face_dropped_and_reported(self, tmp_path):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\nf 1 2 3\n"
        m = load_mesh(write(tmp_path, "d.obj", text))
        assert m.n_faces == 1
        assert validate(m).degenerate_index_faces == [0]

    def test_repeated_index_strict(self, tmp_path):
        with pytest.raises(MeshError):
            load_mesh(write(tmp_path, "d.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n"), drop_degenerate=False)

    @pytest.mark.parametrize("ext", [".obj", ".off"])
    def test_save_load_round_trip(self, tmp_path, rng, ext):
        m = shapes.torus(nu=8, nv=5)
        m = m.with_vertices(m.vertices + rng.normal(scale=1e-3, size=m.vertices.shape))
        back = load_mesh(save_and_path(m, tmp_path / f"r{ext}"))
        np.testing.assert_array_equal(back.vertices, m.vertices)
        np.testing.assert_array_equal(back.faces, m.faces)


def save_and_path(m, p):
    save_mesh(m, p)
    return p


class TestMeshType:
    def test_immutable(self):
        m = shapes.tetrahedron()
        with pytest.raises(ValueError):
            m.vertices[0, 0] = 5.0

    def test_rejects_out_of_range(self):
        with pytest.raises(MeshError):
            Mesh(np.zeros((3, 3)), [[0, 1, 3]])

    def test_rejects_repeated_index(self):
        with pytest.raises(MeshError):
            Mesh(np.zeros((3, 3)), [[0, 1, 1]])


class TestNormalize:
    def test_box_example(self):
        v = np.array([[0, 0, 0], [2, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
        m = normalize_to_unit_cube(Mesh(v, [[0, 1, 2], [0, 1, 3]]))
        np.testing.assert_allclose(m.vertices.min(axis=0), [-0.5, -0.25, -0.25])
        np.testing.assert_allclose(m.vertices.max(axis=0), [0.5, 0.25, 0.25])

    def test_fixed_point(self):
        v = np.array([[-0.5, -0.5, -0.5], [0.5, 0.5, 0.5], [0.5, -0.5, 0.0]])
        m = Mesh(v, [[0, 1, 2]])
        np.testing.assert_array_equal(normalize_to_unit_cube(m).vertices, v)

    def test_zero_extent(self):
        with pytest.raises(MeshError):
            normalize_to_unit_cube(Mesh(np.ones((3, 3)), np.zeros((0, 3), dtype=int)))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (6, 3), elements=st.floats(-1e3, 1e3)))
    def test_idempotent(self, v):
        if np.ptp(v, axis=0).max() < 1e-6:
            return
        once = normalize_to_unit_cube(Mesh(v, [[0, 1, 2]]))
        twice = normalize_to_unit_cube(once)
        np.testing.assert_allclose(twice.vertices, once.vertices, atol=1e-12)
        assert np.isclose(np.ptp(once.vertices, axis=0).max(), 1.0)


class TestTopology:
    def test_tetrahedron(self):
        t = build_topology(shapes.tetrahedron())
        assert t.n_edges == 6
        assert np.all(t.edge_kind == EDGE_INTERIOR)
        np.testing.assert_array_equal(t.degree, [3, 3, 3, 3])

    def test_two_triangles(self):
        t = build_topology(two_triangles())
        kinds = {tuple(e): k for e, k in zip(t.edges.tolist(), t.edge_kind.tolist())}
        assert kinds[(0, 2)] == EDGE_INTERIOR
        assert sum(k == EDGE_BOUNDARY for k in kinds.values()) == 4
        assert t.boundary_vertex.all()

    def test_three_fins_nonmanifold(self):
        t = build_topology(three_fins())
        kinds = {tuple(e): k for e, k in zip(t.edges.tolist(), t.edge_kind.tolist())}
        assert kinds[(0, 1)] == EDGE_NONMANIFOLD
        assert len(t.edge_faces(int(np.flatnonzero((t.edges == [0, 1]).all(1))[0]))) == 3

    def test_edge_kind_matches_face_count(self):
        for m in (shapes.icosphere(2), shapes.grid(4), shapes.nonmanifold_book(), three_fins()):
            t = build_topology(m)
            counts = np.diff(t.edge_face_offsets)
            expect = np.where(counts == 1, EDGE_BOUNDARY, np.where(counts == 2, EDGE_INTERIOR, EDGE_NONMANIFOLD))
            np.testing.assert_array_equal(t.edge_kind, expect)

    def test_adjacency_symmetric(self):
        t = build_topology(shapes.nonmanifold_book())
        for v in range(t.n_vertices):
            for u in t.neighbors(v):
                assert v in t.neighbors(int(u))

    def test_vertex_faces(self):
        m = shapes.icosahedron()
        t = build_topology(m)
        for v in range(m.n_vertices):
            fs = t.vertex_faces(v)
            assert len(fs) == 5 and all(v in m.faces[f] for f in fs)

    def test_deterministic(self):
        a, b = build_topology(shapes.torus()), build_topology(shapes.torus())
        for name in ("edges", "edge_face_indices", "neighbor_indices", "vertex_face_indices", "face_edges"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_bowtie_vertex_nonmanifold(self):
        v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [-1, 0, 0], [-1, -1, 0]], dtype=float)
        t = build_topology(Mesh(v, [[0, 1, 2], [0, 3, 4]]))
        assert not t.vertex_manifold[0]
        assert t.vertex_manifold[1:].all()

    def test_components(self):
        from conftest import two_tetrahedra
        assert build_topology(two_tetrahedra()).count_components() == 2


class TestValidate:
    def test_clean_icosahedron(self):
        assert validate(shapes.icosahedron()).is_clean

    def test_nonmanifold_edge_count(self):
        assert validate(three_fins()).nonmanifold_edges == 1

    def test_defects(self):
        v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0], [9, 9, 9]], dtype=float)
        m = Mesh(v, [[0, 1, 2], [2, 1, 0], [0, 1, 3]])
        rep = validate(m)
        assert rep.duplicate_faces == [1]
        assert rep.zero_area_faces == [2]
        assert rep.unreferenced_vertices == [4]
        assert not rep.is_clean
        assert "duplicate faces: 1" in rep.summary()

    def test_does_not_mutate(self):
        m = shapes.grid(3)
        before = m.vertices.copy()
        validate(m)
        np.testing.assert_array_equal(m.vertices, before)


class TestShapes:
    @pytest.mark.parametrize("make", [shapes.tetrahedron, shapes.icosahedron, lambda: shapes.icosphere(2),
                                      shapes.cube, shapes.torus])
    def test_closed_and_outward(self, make):
        m = make()
        t = build_topology(m)
        assert np.all(t.edge_kind == EDGE_INTERIOR)
        p = m.vertices[m.faces]
        volume = np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6
        assert volume > 0

    def test_capsule_labels(self):
        m, labels = shapes.capsule()
        assert len(labels) == m.n_faces
        assert set(labels.tolist()) == {0, 1, 2}
        assert np.all(build_topology(m).edge_kind == EDGE_INTERIOR)
