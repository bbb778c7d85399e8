"""Cotangent Laplacian assembly and vertex adjacency."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, MeshTopology

COT_CLAMP = 1e4


def corner_cotangents(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Cotangent of each triangle corner, shape (|F|, 3), clamped to +-1e4.

    Column ``c`` is the angle at ``faces[:, c]``, which is opposite the edge
    ``(faces[:, c+1], faces[:, c+2])``.
    """
    p = vertices[faces]
    cot = np.empty((len(faces), 3))
    for c in range(3):
        e1 = p[:, (c + 1) % 3] - p[:, c]
        e2 = p[:, (c + 2) % 3] - p[:, c]
        dot = np.einsum("ij,ij->i", e1, e2)
        cross = np.linalg.norm(np.cross(e1, e2), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = dot / cross
        # zero-area corner: push to the clamp with the sign of the cosine
        val = np.where(cross > 0, val, np.where(dot >= 0, COT_CLAMP, -COT_CLAMP))
        cot[:, c] = np.clip(val, -COT_CLAMP, COT_CLAMP)
    return cot


def cotangent_laplacian(mesh: Mesh, topo: MeshTopology | None = None) -> sp.csr_matrix:
    """Symmetric cotangent stiffness matrix (no mass normalization).

    Off-diagonal ``L[i, j] = -sum(cot(opposite angle)) / 2`` over every
    triangle containing edge ``ij``, accumulated per triangle so that
    non-manifold edges simply collect all their contributions. The diagonal
    is minus the row sum of the off-diagonal part, so ``L @ 1 = 0``.
    """
    n = mesh.n_vertices
    f = mesh.faces
    half = 0.5 * corner_cotangents(mesh.vertices, f)
    rows, cols, vals = [], [], []
    for c in range(3):
        i, j = f[:, (c + 1) % 3], f[:, (c + 2) % 3]
        rows += [i, j]
        cols += [j, i]
        vals += [half[:, c], half[:, c]]
    w = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    w.sum_duplicates()
    lap = sp.diags(np.asarray(w.sum(axis=1)).ravel()) - w
    lap = lap.tocsr()
    lap.sort_indices()
    return lap


@dataclass(frozen=True, eq=False)
class AdjacencyData:
    """Boolean vertex adjacency ``A`` and 1-ring sizes ``phi``.

    ``edges`` holds each undirected edge once as ``(i, j)`` with ``i < j``.
    """

    A: sp.csr_matrix
    phi: np.ndarray
    edges: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]


def vertex_adjacency(topo: MeshTopology) -> AdjacencyData:
    n = topo.n_vertices
    e = topo.edges
    A = sp.coo_matrix(
        (np.ones(2 * len(e), dtype=bool), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
        shape=(n, n),
    ).tocsr()
    A.sort_indices()
    phi = np.asarray(A.sum(axis=1)).ravel().astype(np.int64)
    return AdjacencyData(A=A, phi=phi, edges=np.array(e, dtype=np.int64))


def save_triplets(L: sp.spmatrix, path) -> None:
    """Debug dump: header ``n nnz`` then one ``i j value`` line per entry."""
    coo = sp.coo_matrix(L)
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{coo.shape[0]} {coo.nnz}"]
    lines += [f"{i} {j} {v!r}" for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order].tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_triplets(path) -> sp.csr_matrix:
    with open(path) as fh:
        n, nnz = map(int, fh.readline().split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    if len(data) != nnz:
        raise ValueError(f"{path}: expected {nnz} entries, found {len(data)}")
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, n))
