"""Per-face coloured PLY output for segmentation results."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..mesh import Mesh
from .metrics import face_predictions

PALETTE = np.array([
    [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
    [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230],
    [210, 245, 60], [250, 190, 212], [0, 128, 128], [220, 190, 255],
    [170, 110, 40], [255, 250, 200], [128, 0, 0], [128, 128, 128],
], dtype=np.uint8)


def export_colored_mesh(mesh: Mesh, labels, path) -> np.ndarray:
    """Write an ASCII PLY with one palette colour per face.

    ``labels`` is either one label per face or an ``n x C`` vertex
    probability matrix, reduced to faces with the face-accuracy rule.
    Returns the face labels used.
    """
    labels = np.asarray(labels)
    if labels.ndim == 2:
        if labels.shape[1] > len(PALETTE):
            raise ValueError(f"at most {len(PALETTE)} classes can be coloured")
        labels = face_predictions(labels, mesh.faces)
    if len(labels) != mesh.n_faces:
        raise ValueError(f"{len(labels)} labels for {mesh.n_faces} faces")
    if labels.size and (labels.min() < 0 or labels.max() >= len(PALETTE)):
        raise ValueError(f"labels must lie in [0, {len(PALETTE)})")
    rgb = PALETTE[labels]
    lines = [
        "ply", "format ascii 1.0",
        f"element vertex {mesh.n_vertices}",
        "property float x", "property float y", "property float z",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        "property uchar red", "property uchar green", "property uchar blue",
        "end_header",
    ]
    lines += ["%r %r %r" % tuple(map(float, v)) for v in mesh.vertices]
    lines += [f"3 {a} {b} {c} {r} {g} {bl}" for (a, b, c), (r, g, bl) in zip(mesh.faces.tolist(), rgb.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")
    return labels


def read_ply_faces(path):
    """Minimal reader for the files written above: ``(vertices, faces, colors)``."""
    text = Path(path).read_text().splitlines()
    end = text.index("end_header")
    nv = nf = 0
    for line in text[:end]:
        tok = line.split()
        if tok[:2] == ["element", "vertex"]:
            nv = int(tok[2])
        elif tok[:2] == ["element", "face"]:
            nf = int(tok[2])
    body = text[end + 1:]
    verts = np.array([[float(x) for x in ln.split()[:3]] for ln in body[:nv]]).reshape(-1, 3)
    rows = [list(map(int, ln.split())) for ln in body[nv:nv + nf]]
    faces = np.array([r[1:4] for r in rows]).reshape(-1, 3)
    colors = np.array([r[4:7] for r in rows]).reshape(-1, 3)
    return verts, faces, colors
