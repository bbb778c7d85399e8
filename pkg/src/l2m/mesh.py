"""Triangle mesh container, OBJ/OFF I/O, normalization and incidence structures."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "MeshError",
    "Mesh",
    "MeshTopology",
    "ValidationReport",
    "load_mesh",
    "save_mesh",
    "normalize_to_unit_cube",
    "build_topology",
    "validate",
]

EDGE_INTERIOR = 0
EDGE_BOUNDARY = 1
EDGE_NONMANIFOLD = 2


class MeshError(ValueError):
    """Raised for malformed mesh files and invalid mesh data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh with 0-based face indices.

    ``dropped_faces`` lists faces removed at load time because they repeat a
    vertex index, as ``(file_face_number, original_indices)`` pairs.
    """

    vertices: np.ndarray
    faces: np.ndarray
    dropped_faces: tuple = field(default=())

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must be (m, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        if f.size and np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise MeshError("face with repeated vertex index")
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "faces", _frozen(f))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        return Mesh(vertices, self.faces, self.dropped_faces)


# ---------------------------------------------------------------------------
# I/O


def _parse_obj(lines):
    verts, polys = [], []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "v":
            try:
                verts.append([float(x) for x in tok[1:4]])
            except ValueError:
                raise MeshError(f"line {lineno}: bad vertex record {raw.strip()!r}") from None
            if len(verts[-1]) != 3:
                raise MeshError(f"line {lineno}: vertex needs 3 coordinates")
        elif tok[0] == "f":
            idx = []
            for t in tok[1:]:
                try:
                    i = int(t.split("/", 1)[0])
                except ValueError:
                    raise MeshError(f"line {lineno}: bad face index {t!r}") from None
                if i == 0:
                    raise MeshError(f"line {lineno}: OBJ indices are 1-based, got 0")
                # negative indices are relative to the vertices read so far
                idx.append(i - 1 if i > 0 else len(verts) + i)
            if len(idx) < 3:
                raise MeshError(f"line {lineno}: face with fewer than 3 vertices")
            polys.append((lineno, idx))
    return verts, polys


def _parse_off(lines):
    body = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            body.append((lineno, line))
    if not body or not body[0][1].startswith("OFF"):
        raise MeshError("line 1: missing OFF header")
    head = body[0][1][3:].split()
    pos = 1
    if not head:
        if len(body) < 2:
            raise MeshError("missing OFF counts line")
        lineno, head = body[1][0], body[1][1].split()
        pos = 2
    try:
        nv, nf = int(head[0]), int(head[1])
    except (ValueError, IndexError):
        raise MeshError(f"line {body[pos - 1][0]}: bad OFF counts") from None
    if len(body) < pos + nv + nf:
        raise MeshError("OFF file truncated")
    verts, polys = [], []
    for lineno, line in body[pos:pos + nv]:
        try:
            xyz = [float(x) for x in line.split()[:3]]
        except ValueError:
            raise MeshError(f"line {lineno}: bad vertex record") from None
        if len(xyz) != 3:
            raise MeshError(f"line {lineno}: vertex needs 3 coordinates")
        verts.append(xyz)
    for lineno, line in body[pos + nv:pos + nv + nf]:
        tok = line.split()
        try:
            cnt = int(tok[0])
            idx = [int(t) for t in tok[1:1 + cnt]]
        except (ValueError, IndexError):
            raise MeshError(f"line {lineno}: bad face record") from None
        if cnt < 3 or len(idx) != cnt:
            raise MeshError(f"line {lineno}: face needs at least 3 indices")
        polys.append((lineno, idx))
    return verts, polys


def load_mesh(path, drop_degenerate: bool = True) -> Mesh:
    """Read an ASCII OBJ or OFF file.

    Polygons are fan-triangulated from their first vertex. Faces repeating a
    vertex index are dropped (and recorded on ``Mesh.dropped_faces``).
    """
    path = Path(path)
    ext = path.suffix.lower()
    if ext not in (".obj", ".off"):
        raise MeshError(f"unsupported mesh format {ext!r} (expected .obj or .off)")
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        lines = fh.read().splitlines()
    verts, polys = (_parse_obj if ext == ".obj" else _parse_off)(lines)
    if not verts:
        raise MeshError(f"{path}: mesh has no vertices")
    nv = len(verts)
    tris, dropped = [], []
    for num, (lineno, idx) in enumerate(polys):
        for i in idx:
            if not 0 <= i < nv:
                raise MeshError(f"line {lineno}: vertex index {i} out of range")
        for a, b in zip(idx[1:-1], idx[2:]):
            tri = (idx[0], a, b)
            if len(set(tri)) < 3:
                if not drop_degenerate:
                    raise MeshError(f"line {lineno}: face {tri} repeats a vertex index")
                dropped.append((num, tri))
                continue
            tris.append(tri)
    if dropped:
        logger.warning("%s: dropped %d face(s) with repeated indices", path, len(dropped))
    if not tris:
        raise MeshError(f"{path}: mesh has no usable faces")
    faces = np.array(tris, dtype=np.int64).reshape(-1, 3)
    return Mesh(np.array(verts, dtype=np.float64), faces, tuple(dropped))


def save_mesh(mesh: Mesh, path) -> None:
    """Write OBJ or OFF with round-trip float precision."""
    path = Path(path)
    ext = path.suffix.lower()
    out = []
    if ext == ".obj":
        out += ["v %r %r %r" % tuple(map(float, v)) for v in mesh.vertices]
        out += ["f %d %d %d" % tuple(int(i) + 1 for i in f) for f in mesh.faces]
    elif ext == ".off":
        out.append("OFF")
        out.append(f"{mesh.n_vertices} {mesh.n_faces} 0")
        out += ["%r %r %r" % tuple(map(float, v)) for v in mesh.vertices]
        out += ["3 %d %d %d" % tuple(int(i) for i in f) for f in mesh.faces]
    else:
        raise MeshError(f"unsupported mesh format {ext!r}")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(out) + "\n")
    os.replace(tmp, path)


def normalize_to_unit_cube(mesh: Mesh) -> Mesh:
    """Center the bounding box at the origin and scale its longest side to 1."""
    v = mesh.vertices
    if len(v) == 0:
        raise MeshError("cannot normalize an empty mesh")
    lo, hi = v.min(axis=0), v.max(axis=0)
    extent = float((hi - lo).max())
    if not extent > 0:
        raise MeshError("mesh has zero extent (all vertices coincide)")
    return mesh.with_vertices((v - 0.5 * (lo + hi)) / extent)


# ---------------------------------------------------------------------------
# topology


def _csr(keys: np.ndarray, values: np.ndarray, n: int):
    order = np.lexsort((values, keys))
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(offsets, keys + 1, 1)
    return np.cumsum(offsets), values[order]


@dataclass(frozen=True, eq=False)
class MeshTopology:
    """Edge, 1-ring and vertex-face incidence of a triangle mesh.

    CSR-style ragged arrays: the neighbours of vertex ``i`` are
    ``neighbor_indices[neighbor_offsets[i]:neighbor_offsets[i + 1]]``, and
    likewise for ``vertex_face_*`` and ``edge_face_*``. ``face_edges[f, s]``
    is the id of the edge ``(faces[f, s], faces[f, (s + 1) % 3])``.
    """

    n_vertices: int
    edges: np.ndarray
    edge_kind: np.ndarray
    edge_face_offsets: np.ndarray
    edge_face_indices: np.ndarray
    face_edges: np.ndarray
    neighbor_offsets: np.ndarray
    neighbor_indices: np.ndarray
    vertex_face_offsets: np.ndarray
    vertex_face_indices: np.ndarray
    vertex_manifold: np.ndarray
    boundary_vertex: np.ndarray

    def neighbors(self, i: int) -> np.ndarray:
        return self.neighbor_indices[self.neighbor_offsets[i]:self.neighbor_offsets[i + 1]]

    def vertex_faces(self, i: int) -> np.ndarray:
        return self.vertex_face_indices[self.vertex_face_offsets[i]:self.vertex_face_offsets[i + 1]]

    def edge_faces(self, e: int) -> np.ndarray:
        return self.edge_face_indices[self.edge_face_offsets[e]:self.edge_face_offsets[e + 1]]

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.neighbor_offsets)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def count_components(self) -> int:
        """Connected components of the vertex graph (isolated vertices count)."""
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        e = self.edges
        g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(self.n_vertices,) * 2)
        return int(connected_components(g, directed=False)[0])


def build_topology(mesh: Mesh) -> MeshTopology:
    n = mesh.n_vertices
    f = mesh.faces
    m = len(f)
    # slot s of face i is the edge (f[i, s], f[i, s+1])
    a = f.reshape(-1)
    b = np.roll(f, -1, axis=1).reshape(-1)
    half = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1)
    edges, inverse = np.unique(half, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    face_of_half = np.repeat(np.arange(m), 3)
    ef_off, ef_idx = _csr(inverse, face_of_half, len(edges))
    count = np.diff(ef_off)
    kind = np.full(len(edges), EDGE_INTERIOR, dtype=np.int8)
    kind[count == 1] = EDGE_BOUNDARY
    kind[count >= 3] = EDGE_NONMANIFOLD

    both = np.concatenate([edges, edges[:, ::-1]])
    nb_off, nb_idx = _csr(both[:, 0], both[:, 1], n)
    vf_off, vf_idx = _csr(a, face_of_half, n)

    boundary = np.zeros(n, dtype=bool)
    boundary[edges[kind == EDGE_BOUNDARY].reshape(-1)] = True
    manifold = np.ones(n, dtype=bool)
    manifold[edges[kind == EDGE_NONMANIFOLD].reshape(-1)] = False
    face_edges = inverse.reshape(m, 3)
    # a vertex whose incident faces split into several edge-connected fans is
    # non-manifold even when all its edges are (a bowtie vertex)
    for v in np.flatnonzero(manifold & (np.diff(vf_off) > 1)):
        fs = vf_idx[vf_off[v]:vf_off[v + 1]]
        if _fan_count(v, fs, f, face_edges) > 1:
            manifold[v] = False

    return MeshTopology(
        n_vertices=n,
        edges=_frozen(edges.astype(np.int64)),
        edge_kind=_frozen(kind),
        edge_face_offsets=_frozen(ef_off),
        edge_face_indices=_frozen(ef_idx),
        face_edges=_frozen(face_edges),
        neighbor_offsets=_frozen(nb_off),
        neighbor_indices=_frozen(nb_idx),
        vertex_face_offsets=_frozen(vf_off),
        vertex_face_indices=_frozen(vf_idx),
        vertex_manifold=_frozen(manifold),
        boundary_vertex=_frozen(boundary),
    )


def _fan_count(v, fs, faces, face_edges):
    parent = {int(x): int(x) for x in fs}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    by_edge = {}
    for fi in fs:
        for s in range(3):
            if v in (faces[fi, s], faces[fi, (s + 1) % 3]):
                by_edge.setdefault(int(face_edges[fi, s]), []).append(int(fi))
    for group in by_edge.values():
        for other in group[1:]:
            parent[find(other)] = find(group[0])
    return len({find(int(x)) for x in fs})


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    degenerate_index_faces: list = field(default_factory=list)
    zero_area_faces: list = field(default_factory=list)
    duplicate_faces: list = field(default_factory=list)
    unreferenced_vertices: list = field(default_factory=list)
    nonmanifold_edges: int = 0
    nonmanifold_vertices: int = 0
    boundary_edges: int = 0

    @property
    def is_clean(self) -> bool:
        return not (
            self.degenerate_index_faces
            or self.zero_area_faces
            or self.duplicate_faces
            or self.unreferenced_vertices
            or self.nonmanifold_edges
            or self.nonmanifold_vertices
        )

    def summary(self) -> str:
        return (
            f"degenerate-index faces: {len(self.degenerate_index_faces)}, "
            f"zero-area faces: {len(self.zero_area_faces)}, "
            f"duplicate faces: {len(self.duplicate_faces)}, "
            f"unreferenced vertices: {len(self.unreferenced_vertices)}, "
            f"non-manifold edges: {self.nonmanifold_edges}, "
            f"non-manifold vertices: {self.nonmanifold_vertices}, "
            f"boundary edges: {self.boundary_edges}"
        )


def face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    p = vertices[faces]
    return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)


def validate(mesh: Mesh, topo: MeshTopology | None = None) -> ValidationReport:
    """Report defects without modifying the mesh.

    Areas are compared against ``1e-12 * extent**2`` so the tolerance matches
    the unit-cube scale regardless of the input units.
    """
    rep = ValidationReport()
    rep.degenerate_index_faces = [int(num) for num, _ in mesh.dropped_faces]
    if mesh.n_faces:
        extent = float(np.ptp(mesh.vertices, axis=0).max()) if mesh.n_vertices else 0.0
        areas = face_areas(mesh.vertices, mesh.faces)
        rep.zero_area_faces = np.flatnonzero(areas <= 1e-12 * extent**2).tolist()
        key = np.sort(mesh.faces, axis=1)
        _, first = np.unique(key, axis=0, return_index=True)
        seen = np.zeros(len(key), dtype=bool)
        seen[first] = True
        rep.duplicate_faces = np.flatnonzero(~seen).tolist()
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.faces.reshape(-1)] = True
    rep.unreferenced_vertices = np.flatnonzero(~used).tolist()
    topo = topo if topo is not None else build_topology(mesh)
    rep.nonmanifold_edges = int(np.sum(topo.edge_kind == EDGE_NONMANIFOLD))
    rep.boundary_edges = int(np.sum(topo.edge_kind == EDGE_BOUNDARY))
    rep.nonmanifold_vertices = int(np.sum(~topo.vertex_manifold & used))
    return rep
