"""Seeded toy datasets written in the on-disk manifest layout.

Classification: noisy icospheres, boxes and tori. Segmentation: capsules
labelled lower cap / cylinder / upper cap.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import shapes
from ..mesh import Mesh, save_mesh
from .dataset import DatasetManifest, ManifestEntry, write_face_labels, write_manifest

CLASSIFICATION_CLASSES = ["sphere", "box", "torus"]
SEGMENTATION_CLASSES = ["lower_cap", "cylinder", "upper_cap"]


def _jitter(mesh: Mesh, rng, noise: float) -> Mesh:
    scale = np.ptp(mesh.vertices, axis=0).max()
    return mesh.with_vertices(mesh.vertices + rng.normal(scale=noise * scale, size=mesh.vertices.shape))


def toy_shape(kind: str, rng: np.random.Generator, noise: float = 0.005) -> Mesh:
    if kind == "sphere":
        m = shapes.icosphere(3)
        m = m.with_vertices(m.vertices * rng.uniform(0.85, 1.15, size=3))
    elif kind == "box":
        m = shapes.box(int(rng.integers(9, 11)), size=rng.uniform(1.0, 2.0, size=3))
    elif kind == "torus":
        m = shapes.torus(1.0, rng.uniform(0.25, 0.45), int(rng.integers(30, 35)), int(rng.integers(18, 21)))
    else:
        raise ValueError(f"unknown toy shape {kind!r}")
    return _jitter(m, rng, noise)


def make_classification_toy(root, seed: int = 0, n_train: int = 10, n_test: int = 5) -> Path:
    """Write ``n_train + n_test`` meshes per class plus ``manifest.json``."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    entries = []
    for split, count in (("train", n_train), ("test", n_test)):
        (root / split).mkdir(parents=True, exist_ok=True)
        for label, kind in enumerate(CLASSIFICATION_CLASSES):
            for i in range(count):
                p = root / split / f"{kind}_{i:03d}.obj"
                save_mesh(toy_shape(kind, rng), p)
                entries.append(ManifestEntry(p, split, label=label))
    manifest = root / "manifest.json"
    write_manifest(manifest, DatasetManifest("classification", CLASSIFICATION_CLASSES, entries))
    return manifest


def toy_capsule(rng: np.random.Generator, noise: float = 0.003):
    mesh, labels = shapes.capsule(
        radius=rng.uniform(0.3, 0.5), length=rng.uniform(0.8, 1.6),
        n_around=int(rng.integers(20, 25)), n_cap=int(rng.integers(5, 7)), n_body=int(rng.integers(8, 11)),
    )
    return _jitter(mesh, rng, noise), labels


def make_segmentation_toy(root, seed: int = 0, n_train: int = 20, n_test: int = 5) -> Path:
    root = Path(root)
    rng = np.random.default_rng(seed)
    (root / "meshes").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    entries = []
    for split, count in (("train", n_train), ("test", n_test)):
        for i in range(count):
            mesh, labels = toy_capsule(rng)
            p = root / "meshes" / f"{split}_{i:03d}.obj"
            lp = root / "labels" / f"{split}_{i:03d}.txt"
            save_mesh(mesh, p)
            write_face_labels(lp, labels)
            entries.append(ManifestEntry(p, split, face_labels=lp))
    manifest = root / "manifest.json"
    write_manifest(manifest, DatasetManifest("segmentation", SEGMENTATION_CLASSES, entries))
    return manifest
