"""Procedural test meshes: platonic solids, spheres, tori, boxes, capsules."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh


def _merge(vertices, faces, decimals=9):
    key = np.round(vertices, decimals)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    # keep first-occurrence order so vertex ids follow generation order
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return vertices[np.sort(first)], rank[inverse.reshape(-1)][faces]


def tetrahedron() -> Mesh:
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return Mesh(v, f)


def icosahedron() -> Mesh:
    p = (1 + 5**0.5) / 2
    v = np.array(
        [[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
         [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
         [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]],
        dtype=float,
    )
    f = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    )
    return Mesh(v / np.linalg.norm(v, axis=1, keepdims=True), f)


def icosphere(level: int = 2) -> Mesh:
    """Unit sphere by repeated 4-to-1 subdivision of the icosahedron."""
    m = icosahedron()
    v, f = m.vertices.copy(), m.faces.copy()
    for _ in range(level):
        cache = {}
        verts = list(v)

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        v, f = np.array(verts), np.array(nf)
    return Mesh(v, f)


def cube() -> Mesh:
    """Axis-aligned cube [-1, 1]^3, two triangles per side.

    Side diagonals join the corners of one inscribed tetrahedron, so every
    corner sees the same triangulation on its three sides.
    """
    return box(1)


def box(m: int = 4, size=(2.0, 2.0, 2.0)) -> Mesh:
    """Closed box surface with an ``m`` x ``m`` quad grid on each side."""
    t = np.linspace(-1.0, 1.0, m + 1)
    verts, faces = [], []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            u, w = [a for a in range(3) if a != axis]
            base = len(verts)
            for i in range(m + 1):
                for j in range(m + 1):
                    p = np.zeros(3)
                    p[axis], p[u], p[w] = sign, t[i], t[j]
                    verts.append(p)
            for i in range(m):
                for j in range(m):
                    a = base + i * (m + 1) + j
                    b, c, d = a + (m + 1), a + (m + 2), a + 1
                    # diagonals always join even-parity lattice points
                    ga = np.rint((verts[a] + 1.0) * m / 2).astype(int)
                    quad = [(a, b, c), (a, c, d)] if ga.sum() % 2 == 0 else [(a, b, d), (b, c, d)]
                    # orient outward: (u, w, axis) right-handed iff axis ordering is cyclic
                    flip = (sign > 0) != ((u, w) in ((1, 2), (2, 0), (0, 1)))
                    faces += [(x, z, y) for x, y, z in quad] if flip else quad
    v, f = _merge(np.array(verts), np.array(faces))
    return Mesh(v * (np.asarray(size, dtype=float) / 2.0), f)


def torus(major: float = 1.0, minor: float = 0.35, nu: int = 32, nv: int = 16) -> Mesh:
    u = np.linspace(0, 2 * np.pi, nu, endpoint=False)
    w = np.linspace(0, 2 * np.pi, nv, endpoint=False)
    U, W = np.meshgrid(u, w, indexing="ij")
    ring = major + minor * np.cos(W)
    v = np.stack([ring * np.cos(U), ring * np.sin(U), minor * np.sin(W)], axis=-1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    a = (i * nv + j).ravel()
    b = (((i + 1) % nu) * nv + j).ravel()
    c = (((i + 1) % nu) * nv + (j + 1) % nv).ravel()
    d = (i * nv + (j + 1) % nv).ravel()
    f = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return Mesh(v, f)


def grid(m: int = 4, size: float = 1.0) -> Mesh:
    """Flat ``m`` x ``m`` triangulated square in the z = 0 plane."""
    t = np.linspace(0.0, size, m + 1)
    X, Y = np.meshgrid(t, t, indexing="ij")
    v = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)
    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    a = (i * (m + 1) + j).ravel()
    b, c, d = a + (m + 1), a + (m + 2), a + 1
    f = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return Mesh(v, f)


def nonmanifold_book(pages: int = 3, rows: int = 3, cols: int = 3) -> Mesh:
    """Flat strips ("pages") glued along a common spine on the z axis.

    Every spine edge is shared by ``pages`` triangles.
    """
    z = np.linspace(0.0, 1.0, rows + 1)
    verts = [np.array([0.0, 0.0, zz]) for zz in z]
    faces = []
    for p in range(pages):
        ang = 2 * np.pi * p / pages + 0.3 * p
        d = np.array([np.cos(ang), np.sin(ang), 0.0])
        ids = np.empty((cols + 1, rows + 1), dtype=int)
        ids[0] = np.arange(rows + 1)
        for c in range(1, cols + 1):
            for r in range(rows + 1):
                ids[c, r] = len(verts)
                verts.append(d * c / cols + np.array([0.0, 0.0, z[r]]))
        for c in range(cols):
            for r in range(rows):
                a, b, cc, dd = ids[c, r], ids[c + 1, r], ids[c + 1, r + 1], ids[c, r + 1]
                faces += [(a, b, cc), (a, cc, dd)]
    return Mesh(np.array(verts), np.array(faces))


def capsule(radius: float = 0.4, length: float = 1.5, n_around: int = 24,
            n_cap: int = 6, n_body: int = 10):
    """Cylinder along z capped by two hemispheres.

    Returns ``(mesh, face_labels)`` with label 0 on the lower cap, 1 on the
    cylinder and 2 on the upper cap.
    """
    half = length / 2
    rings = []  # (z, r, part) for each latitude ring, bottom to top
    for i in range(1, n_cap + 1):
        phi = -np.pi / 2 + (np.pi / 2) * i / n_cap
        rings.append((-half + radius * np.sin(phi), radius * np.cos(phi)))
    for i in range(1, n_body):
        rings.append((-half + length * i / n_body, radius))
    for i in range(n_cap):
        phi = (np.pi / 2) * i / n_cap
        rings.append((half + radius * np.sin(phi), radius * np.cos(phi)))
    th = np.linspace(0, 2 * np.pi, n_around, endpoint=False)
    verts = [np.array([0.0, 0.0, -half - radius])]
    for zr, rr in rings:
        verts += list(np.stack([rr * np.cos(th), rr * np.sin(th), np.full(n_around, zr)], 1))
    verts.append(np.array([0.0, 0.0, half + radius]))
    v = np.array(verts)
    top = len(v) - 1
    faces = []
    ring_id = lambda r, k: 1 + r * n_around + (k % n_around)  # noqa: E731
    for k in range(n_around):
        faces.append((0, ring_id(0, k + 1), ring_id(0, k)))
    for r in range(len(rings) - 1):
        for k in range(n_around):
            a, b = ring_id(r, k), ring_id(r, k + 1)
            c, d = ring_id(r + 1, k + 1), ring_id(r + 1, k)
            faces += [(a, b, c), (a, c, d)]
    last = len(rings) - 1
    for k in range(n_around):
        faces.append((top, ring_id(last, k), ring_id(last, k + 1)))
    f = np.array(faces)
    zc = v[f, 2].mean(axis=1)
    labels = np.where(zc < -half, 0, np.where(zc > half, 2, 1))
    return Mesh(v, f), labels
