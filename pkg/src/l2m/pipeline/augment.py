"""Training-time mesh augmentation: anisotropic scaling and quarter-turn rotations."""

from __future__ import annotations

import numpy as np

from ..mesh import Mesh, normalize_to_unit_cube

QUARTER_TURNS = np.array([0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi])


def scale_factors(rng: np.random.Generator, sd: float = 0.1, lo: float = 0.5, hi: float = 1.5,
                  size=3, clip: bool = True) -> np.ndarray:
    s = rng.normal(1.0, sd, size=size)
    return np.clip(s, lo, hi) if clip else s


def augment_scale(mesh: Mesh, rng: np.random.Generator, sd: float = 0.1,
                  lo: float = 0.5, hi: float = 1.5) -> Mesh:
    """Scale each axis by ``N(1, sd)`` clipped to ``[lo, hi]``, then renormalize."""
    s = scale_factors(rng, sd, lo, hi)
    return normalize_to_unit_cube(mesh.with_vertices(mesh.vertices * s))


def euler_rotation(angles) -> np.ndarray:
    """``Rx(c) @ Ry(b) @ Rz(a)`` for ``angles = (a, b, c)``: the z turn is applied first."""
    a, b, c = angles

    def rot(axis, t):
        ct, st = np.cos(t), np.sin(t)
        # exact zeros for quarter turns
        ct, st = np.round(ct, 15), np.round(st, 15)
        i, j = [(1, 2), (2, 0), (0, 1)][axis]
        R = np.eye(3)
        R[i, i], R[i, j], R[j, i], R[j, j] = ct, -st, st, ct
        return R

    return rot(0, c) @ rot(1, b) @ rot(2, a)


def augment_rotate(mesh: Mesh, rng: np.random.Generator) -> Mesh:
    angles = rng.choice(QUARTER_TURNS, size=3)
    R = euler_rotation(angles)
    return normalize_to_unit_cube(mesh.with_vertices(mesh.vertices @ R.T))
