"""The 39-column per-vertex input descriptor.

Column layout::

    0-2    vertex coordinates
    3-5    unit vertex normals
    6-8    dihedral features gathered on vertices
    9      Gaussian curvature (angle defect)
    10-18  heat kernel signature at 9 times
    19-38  |eigenvector| of the 20 lowest non-zero modes

Columns 0-8 are extrinsic, 9-38 intrinsic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import EDGE_BOUNDARY, EDGE_NONMANIFOLD, Mesh, MeshTopology
from .spectral import EigenBasis

N_FEATURES = 39
LAYOUT_VERSION = 1
N_HKS = 9
N_EIGVEC = 20

COORDS = slice(0, 3)
NORMALS = slice(3, 6)
DIHEDRAL = slice(6, 9)
CURVATURE = slice(9, 10)
HKS = slice(10, 19)
EIGVEC = slice(19, 39)
EXTRINSIC = slice(0, 9)
INTRINSIC = slice(9, 39)


@dataclass(frozen=True, eq=False)
class VertexFeatures:
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] != N_FEATURES:
            raise ValueError(f"expected (n, {N_FEATURES}) features, got {d.shape}")
        d = np.ascontiguousarray(d)
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def extrinsic(self) -> np.ndarray:
        return self.data[:, EXTRINSIC]

    @property
    def intrinsic(self) -> np.ndarray:
        return self.data[:, INTRINSIC]


def _corner_angles(vertices, faces):
    p = vertices[faces]
    ang = np.empty((len(faces), 3))
    for c in range(3):
        e1 = p[:, (c + 1) % 3] - p[:, c]
        e2 = p[:, (c + 2) % 3] - p[:, c]
        ang[:, c] = np.arctan2(np.linalg.norm(np.cross(e1, e2), axis=1),
                               np.einsum("ij,ij->i", e1, e2))
    return np.clip(ang, 0.0, np.pi)


def gaussian_curvature(mesh: Mesh, topo: MeshTopology) -> np.ndarray:
    """Angle defect per vertex: ``2 pi`` (``pi`` on the boundary) minus the incident angles."""
    n = mesh.n_vertices
    total = np.zeros(n)
    np.add.at(total, mesh.faces.reshape(-1), _corner_angles(mesh.vertices, mesh.faces).reshape(-1))
    full = np.where(topo.boundary_vertex, np.pi, 2 * np.pi)
    out = full - total
    out[np.diff(topo.vertex_face_offsets) == 0] = 0.0
    return out


def face_normals(vertices: np.ndarray, faces: np.ndarray, unit: bool = True) -> np.ndarray:
    p = vertices[faces]
    nrm = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    if unit:
        ln = np.linalg.norm(nrm, axis=1, keepdims=True)
        nrm = np.divide(nrm, ln, out=np.zeros_like(nrm), where=ln > 0)
    return nrm


def vertex_normals(mesh: Mesh, topo: MeshTopology | None = None) -> np.ndarray:
    # unnormalized cross products are already area weighted
    fn = face_normals(mesh.vertices, mesh.faces, unit=False)
    acc = np.zeros((mesh.n_vertices, 3))
    for c in range(3):
        np.add.at(acc, mesh.faces[:, c], fn)
    ln = np.linalg.norm(acc, axis=1, keepdims=True)
    return np.divide(acc, ln, out=np.zeros_like(acc), where=ln > 1e-300)


def default_hks_times(basis: EigenBasis, count: int = N_HKS) -> np.ndarray:
    """Log-spaced times on ``[4 ln 10 / lam_max, 4 ln 10 / lam_min]`` over non-zero modes."""
    lam = basis.eigenvalues[basis.zero_mode_count():]
    lam = lam[lam > 1e-12]
    if lam.size == 0:
        raise ValueError("all eigenvalues vanish; cannot choose heat kernel times")
    t_min = 4 * np.log(10) / lam.max()
    t_max = 4 * np.log(10) / lam.min()
    return np.geomspace(t_min, t_max, count)


def hks(basis: EigenBasis, times=None, normalize: bool = True) -> np.ndarray:
    """Heat kernel signature over the non-constant modes.

    Each column is divided by its sum over vertices when ``normalize``.
    """
    times = default_hks_times(basis) if times is None else np.asarray(times, dtype=np.float64)
    if np.any(times <= 0):
        raise ValueError("heat kernel times must be positive")
    c = basis.zero_mode_count()
    if basis.k - c < 1:
        raise ValueError("heat kernel signature needs at least one non-zero mode")
    lam = basis.eigenvalues[c:]
    phi2 = basis.vectors[:, c:] ** 2
    out = phi2 @ np.exp(-np.outer(lam, times))
    if normalize:
        out = out / out.sum(axis=0, keepdims=True)
    return out


def face_dihedrals(mesh: Mesh, topo: MeshTopology):
    """Per-face normal alignment across each edge slot.

    Slot ``s`` of face ``f`` refers to the edge ``(f[s], f[s+1])``; its value
    is the dot product of the two unit normals (1 when flat). Boundary slots
    are padded with 1. Non-manifold slots are set to 1 and flagged in the
    returned ``discarded`` mask.

    Returns ``(values, discarded)``, both ``(|F|, 3)``.
    """
    fn = face_normals(mesh.vertices, mesh.faces)
    m = mesh.n_faces
    fe = topo.face_edges
    kind = topo.edge_kind[fe]
    values = np.ones((m, 3))
    discarded = kind == EDGE_NONMANIFOLD
    interior = (kind != EDGE_BOUNDARY) & ~discarded
    off, idx = topo.edge_face_offsets, topo.edge_face_indices
    fi, si = np.nonzero(interior)
    e = fe[fi, si]
    a, b = idx[off[e]], idx[off[e] + 1]
    other = np.where(a == fi, b, a)
    dots = np.einsum("ij,ij->i", fn[fi], fn[other])
    # a degenerate neighbour has no normal; treat it as flat
    ok = (np.linalg.norm(fn[fi], axis=1) > 0) & (np.linalg.norm(fn[other], axis=1) > 0)
    values[fi, si] = np.where(ok, np.clip(dots, -1.0, 1.0), 1.0)
    return values, discarded


def dihedral_vertex_features(mesh: Mesh, topo: MeshTopology, face_values, discarded=None) -> np.ndarray:
    """Gather face dihedral triples onto vertices.

    Every face triple is first sorted ascending (discarded slots after kept
    ones at equal value) so that the slot labelling inside a face does not
    matter. Each vertex then averages, component by component, the kept
    entries of its incident faces and sorts the result. Components with no
    kept entry, and isolated vertices, get 1.
    """
    vals = np.asarray(face_values, dtype=np.float64)
    disc = np.zeros(vals.shape, dtype=bool) if discarded is None else np.asarray(discarded)
    rows = np.repeat(np.arange(len(vals)), 3)
    # sort within each row by value, kept slots first at equal value
    order = np.lexsort((disc.ravel(), vals.ravel(), rows)).reshape(-1, 3) - 3 * np.arange(len(vals))[:, None]
    svals = np.take_along_axis(vals, order, axis=1)
    skeep = ~np.take_along_axis(disc, order, axis=1)
    n = mesh.n_vertices
    num = np.zeros((n, 3))
    den = np.zeros((n, 3))
    for c in range(3):
        np.add.at(num, mesh.faces[:, c], svals * skeep)
        np.add.at(den, mesh.faces[:, c], skeep.astype(np.float64))
    out = np.divide(num, den, out=np.ones_like(num), where=den > 0)
    return np.sort(out, axis=1)


def eigvec_features(basis: EigenBasis, count: int = N_EIGVEC) -> np.ndarray:
    c = basis.zero_mode_count()
    if basis.k < c + count:
        raise ValueError(
            f"eigenvector features need k >= {c + count} ({c} zero mode(s) + {count}), basis has k={basis.k}"
        )
    return np.abs(basis.vectors[:, c:c + count])


def assemble_features(mesh: Mesh, topo: MeshTopology, basis: EigenBasis, hks_times=None) -> VertexFeatures:
    if basis.n != mesh.n_vertices:
        raise ValueError("basis and mesh disagree on the vertex count")
    eig = eigvec_features(basis)
    dv, disc = face_dihedrals(mesh, topo)
    cols = [
        mesh.vertices,
        vertex_normals(mesh, topo),
        dihedral_vertex_features(mesh, topo, dv, disc),
        gaussian_curvature(mesh, topo)[:, None],
        hks(basis, hks_times),
        eig,
    ]
    return VertexFeatures(np.concatenate(cols, axis=1))
