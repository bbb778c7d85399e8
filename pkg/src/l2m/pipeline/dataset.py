"""Dataset manifests and label handling.

A manifest is a JSON file::

    {
      "task": "classification" | "segmentation",
      "classes": ["name", ...],
      "rotate": false,
      "entries": [
        {"mesh": "train/a.obj", "split": "train", "label": 0},
        {"mesh": "meshes/b.obj", "split": "test", "face_labels": "labels/b.txt"}
      ]
    }

Paths are relative to the manifest's directory. Face-label files hold one
integer per line, one line per (triangulated) face.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..mesh import MeshTopology

logger = logging.getLogger(__name__)

SPLITS = ("train", "test")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    mesh: Path
    split: str
    label: int | None = None
    face_labels: Path | None = None


@dataclass
class DatasetManifest:
    task: str
    classes: list
    entries: list = field(default_factory=list)
    rotate: bool = False
    root: Path = Path(".")

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read manifest {path}: {exc}") from None
    task = raw.get("task")
    if task not in ("classification", "segmentation"):
        raise DatasetError(f"manifest task must be classification or segmentation, got {task!r}")
    classes = list(raw.get("classes", []))
    root = path.parent
    entries = []
    for i, e in enumerate(raw.get("entries", [])):
        split = e.get("split", "train")
        if split not in SPLITS:
            raise DatasetError(f"entry {i}: unknown split {split!r}")
        mesh = root / e["mesh"]
        if not mesh.is_file():
            raise DatasetError(f"entry {i}: mesh file {mesh} not found")
        if task == "classification":
            label = int(e["label"])
            if not 0 <= label < len(classes):
                raise DatasetError(f"entry {i}: label {label} outside {len(classes)} classes")
            entries.append(ManifestEntry(mesh, split, label=label))
        else:
            fl = root / e["face_labels"]
            if not fl.is_file():
                raise DatasetError(f"entry {i}: face label file {fl} not found")
            entries.append(ManifestEntry(mesh, split, face_labels=fl))
    return DatasetManifest(task, classes, entries, bool(raw.get("rotate", False)), root)


def write_manifest(path, manifest: DatasetManifest) -> None:
    path = Path(path)
    root = path.parent

    def rel(p):
        return str(Path(p).resolve().relative_to(root.resolve()))

    entries = []
    for e in manifest.entries:
        d = {"mesh": rel(e.mesh), "split": e.split}
        if e.label is not None:
            d["label"] = int(e.label)
        if e.face_labels is not None:
            d["face_labels"] = rel(e.face_labels)
        entries.append(d)
    doc = {"task": manifest.task, "classes": manifest.classes, "rotate": manifest.rotate, "entries": entries}
    path.write_text(json.dumps(doc, indent=2))


MESH_SUFFIXES = (".obj", ".off")


def _meshes_in(d: Path) -> list:
    return sorted(p for p in d.iterdir() if p.suffix.lower() in MESH_SUFFIXES) if d.is_dir() else []


def scan_classification_dir(root) -> DatasetManifest:
    """Manifest for ``root/<class>/{train,test}/*.obj|off`` (class names sorted)."""
    root = Path(root)
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    entries = [
        ManifestEntry(m, split, label=label)
        for label, name in enumerate(classes)
        for split in SPLITS
        for m in _meshes_in(root / name / split)
    ]
    if not entries:
        raise DatasetError(f"no meshes under {root}/<class>/{{train,test}}")
    return DatasetManifest("classification", classes, entries, root=root)


def scan_segmentation_dir(root, classes=None) -> DatasetManifest:
    """Manifest for ``root/{train,test}/*.obj|off`` with ``root/labels/<stem>.txt``.

    Without ``classes`` the class count is taken from the largest label seen.
    """
    root = Path(root)
    entries = []
    top = 0
    for split in SPLITS:
        for m in _meshes_in(root / split):
            lab = root / "labels" / f"{m.stem}.txt"
            if not lab.is_file():
                raise DatasetError(f"no face labels for {m} (expected {lab})")
            top = max(top, int(read_face_labels(lab).max(initial=0)))
            entries.append(ManifestEntry(m, split, face_labels=lab))
    if not entries:
        raise DatasetError(f"no meshes under {root}/{{train,test}}")
    classes = list(classes) if classes is not None else [str(i) for i in range(top + 1)]
    return DatasetManifest("segmentation", classes, entries, root=root)


def read_face_labels(path, n_faces: int | None = None, n_classes: int | None = None) -> np.ndarray:
    try:
        labels = np.loadtxt(path, dtype=np.int64, ndmin=1)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    if n_faces is not None and len(labels) != n_faces:
        raise DatasetError(f"{path}: {len(labels)} labels for {n_faces} faces")
    if labels.size and labels.min() < 0:
        raise DatasetError(f"{path}: negative label")
    if n_classes is not None and labels.size and labels.max() >= n_classes:
        raise DatasetError(f"{path}: label {labels.max()} outside {n_classes} classes")
    return labels


def write_face_labels(path, labels) -> None:
    Path(path).write_text("\n".join(str(int(v)) for v in labels) + "\n")


def vertex_labels_from_face_labels(topo: MeshTopology, face_labels) -> np.ndarray:
    """Majority label of the incident faces; ties go to the smallest label."""
    fl = np.asarray(face_labels, dtype=np.int64)
    n = topo.n_vertices
    out = np.zeros(n, dtype=np.int64)
    if fl.size == 0:
        if n:
            logger.warning("no faces: all %d vertices labelled 0", n)
        return out
    counts = np.zeros((n, int(fl.max()) + 1), dtype=np.int64)
    vf = topo.vertex_face_indices
    owner = np.repeat(np.arange(n), np.diff(topo.vertex_face_offsets))
    np.add.at(counts, (owner, fl[vf]), 1)
    out = counts.argmax(axis=1)
    lonely = counts.sum(axis=1) == 0
    if lonely.any():
        logger.warning("%d vertices without incident faces labelled 0", int(lonely.sum()))
        out[lonely] = 0
    return out
