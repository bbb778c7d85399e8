"""Per-mesh preprocessing and the on-disk feature cache.

Each mesh becomes one L2MT file holding the normalized geometry, the
eigenbasis at ``k0`` and the 39-column features. ``index.json`` records,
per entry, the SHA-256 of the source bytes (mesh plus label file plus
preprocessing parameters) and of the cache file itself, so editing a source
or damaging a cache file invalidates exactly that entry.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import container
from ..descriptors import LAYOUT_VERSION, VertexFeatures, assemble_features
from ..laplacian import cotangent_laplacian
from ..mesh import Mesh, build_topology, load_mesh, normalize_to_unit_cube
from ..spectral import EigenBasis, check_k0, smallest_eigenpairs
from .augment import augment_rotate, augment_scale
from .dataset import DatasetManifest, read_face_labels, vertex_labels_from_face_labels

logger = logging.getLogger(__name__)

INDEX = "index.json"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("L2M_THREADS", "1")))
    except ValueError:
        return 1


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class CacheEntry:
    id: str
    split: str
    vertices: np.ndarray
    faces: np.ndarray
    basis: EigenBasis
    features: VertexFeatures
    label: int | None = None
    face_labels: np.ndarray | None = None
    vertex_labels: np.ndarray | None = None
    base_id: str = ""
    source_hash: str = ""

    @property
    def mesh(self) -> Mesh:
        return Mesh(self.vertices, self.faces)


def prepare_mesh(mesh: Mesh, k0: int, seed: int = 0):
    """normalize -> topology -> Laplacian -> eigenbasis(min(k0, n)) -> features."""
    mesh = normalize_to_unit_cube(mesh)
    topo = build_topology(mesh)
    L = cotangent_laplacian(mesh, topo)
    k = min(k0, mesh.n_vertices)
    check_k0(mesh.n_vertices, k)
    basis = smallest_eigenpairs(L, k, seed=seed)
    return mesh, topo, basis, assemble_features(mesh, topo, basis)


def entry_to_tensors(e: CacheEntry) -> dict:
    t = {
        "vertices": e.vertices.astype(np.float64),
        "faces": e.faces.astype(np.uint32),
        "eigenvalues": e.basis.eigenvalues,
        "eigenvectors": e.basis.vectors,
        "features": e.features.data,
        "layout_version": np.array([LAYOUT_VERSION], dtype=np.uint32),
        "source_sha256": np.frombuffer(bytes.fromhex(e.source_hash), dtype="<u4").copy(),
    }
    if e.label is not None:
        t["label"] = np.array([e.label], dtype=np.uint32)
    if e.face_labels is not None:
        t["face_labels"] = e.face_labels.astype(np.uint32)
        t["vertex_labels"] = e.vertex_labels.astype(np.uint32)
    return t


def entry_from_tensors(t: dict, id: str, split: str, base_id: str = "") -> CacheEntry:
    if int(t["layout_version"][0]) != LAYOUT_VERSION:
        raise container.ContainerError("feature layout version mismatch")
    basis = EigenBasis(t["eigenvalues"], t["eigenvectors"], provenance=id)
    return CacheEntry(
        id=id,
        split=split,
        vertices=t["vertices"],
        faces=t["faces"].astype(np.int64),
        basis=basis,
        features=VertexFeatures(t["features"]),
        label=int(t["label"][0]) if "label" in t else None,
        face_labels=t["face_labels"].astype(np.int64) if "face_labels" in t else None,
        vertex_labels=t["vertex_labels"].astype(np.int64) if "vertex_labels" in t else None,
        base_id=base_id or id,
        source_hash=t["source_sha256"].astype("<u4").tobytes().hex(),
    )


@dataclass
class _Job:
    id: str
    base_id: str
    split: str
    mesh_path: str
    k0: int
    source_hash: str
    out_path: str
    label: int | None = None
    face_labels_path: str | None = None
    n_classes: int | None = None
    variant: int = 0
    seed: int = 0
    rotate: bool = False


def _run_job(job: _Job):
    mesh = load_mesh(job.mesh_path)
    face_labels = None
    if job.face_labels_path:
        face_labels = read_face_labels(job.face_labels_path, mesh.n_faces, job.n_classes)
    if job.variant:
        rng = np.random.default_rng([job.seed, job.variant, int(job.source_hash[:8], 16)])
        mesh = augment_scale(normalize_to_unit_cube(mesh), rng)
        if job.rotate:
            mesh = augment_rotate(mesh, rng)
    mesh, topo, basis, feats = prepare_mesh(mesh, job.k0, seed=job.seed)
    entry = CacheEntry(
        id=job.id, split=job.split, vertices=mesh.vertices, faces=mesh.faces, basis=basis,
        features=feats, label=job.label, face_labels=face_labels,
        vertex_labels=None if face_labels is None else vertex_labels_from_face_labels(topo, face_labels),
        base_id=job.base_id, source_hash=job.source_hash,
    )
    container.save(job.out_path, entry_to_tensors(entry))
    return job.id, sha256_file(job.out_path)


@dataclass
class PreprocessSummary:
    computed: list = field(default_factory=list)
    reused: list = field(default_factory=list)
    failed: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failed


def _source_hash(mesh_path, label_path, k0, variant, seed, rotate) -> str:
    h = hashlib.sha256()
    h.update(Path(mesh_path).read_bytes())
    if label_path:
        h.update(b"\0labels\0" + Path(label_path).read_bytes())
    h.update(json.dumps({"k0": k0, "variant": variant, "seed": seed, "rotate": rotate,
                         "layout": LAYOUT_VERSION}).encode())
    return h.hexdigest()


def read_index(cache_dir) -> dict:
    p = Path(cache_dir) / INDEX
    if not p.is_file():
        return {}
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError:
        logger.warning("cache index %s unreadable; rebuilding", p)
        return {}


def preprocess(manifest: DatasetManifest, k0: int, cache_dir, augment_copies: int = 0,
               seed: int = 0, workers: int | None = None) -> PreprocessSummary:
    """Fill ``cache_dir`` for every manifest entry, reusing valid entries.

    ``augment_copies`` extra scaled (and, if the manifest says so, rotated)
    variants are built for each training mesh. Failing meshes are logged and
    left out of the index.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    old = {e["id"]: e for e in read_index(cache_dir).get("entries", [])}
    summary = PreprocessSummary()
    jobs, entries = [], []
    for i, me in enumerate(manifest.entries):
        base = f"{i:05d}_{me.mesh.stem}"
        variants = range(augment_copies + 1) if me.split == "train" else range(1)
        for v in variants:
            eid = base if v == 0 else f"{base}@aug{v}"
            rec = {"id": eid, "base_id": base, "split": me.split, "mesh": str(me.mesh),
                   "file": f"{eid}.l2mt"}
            if me.label is not None:
                rec["label"] = me.label
            try:
                rec["source_hash"] = _source_hash(me.mesh, me.face_labels, k0, v, seed, manifest.rotate)
            except OSError as exc:
                summary.failed[eid] = str(exc)
                continue
            prev = old.get(eid)
            path = cache_dir / rec["file"]
            if (prev and prev.get("source_hash") == rec["source_hash"] and path.is_file()
                    and sha256_file(path) == prev.get("file_hash")):
                rec["file_hash"] = prev["file_hash"]
                summary.reused.append(eid)
                entries.append(rec)
                continue
            jobs.append(_Job(
                id=eid, base_id=base, split=me.split, mesh_path=str(me.mesh), k0=k0,
                source_hash=rec["source_hash"], out_path=str(path), label=me.label,
                face_labels_path=str(me.face_labels) if me.face_labels else None,
                n_classes=manifest.n_classes, variant=v, seed=seed, rotate=manifest.rotate,
            ))
            entries.append(rec)

    workers = workers or thread_count()
    results = {}
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {job.id: pool.submit(_run_job, job) for job in jobs}
            for jid, fut in futures.items():
                try:
                    results[jid] = fut.result()[1]
                except Exception as exc:  # noqa: BLE001 - per-mesh failures are reported, not fatal
                    summary.failed[jid] = f"{type(exc).__name__}: {exc}"
    else:
        for job in jobs:
            try:
                results[job.id] = _run_job(job)[1]
            except Exception as exc:  # noqa: BLE001
                summary.failed[job.id] = f"{type(exc).__name__}: {exc}"
    for jid, err in summary.failed.items():
        logger.error("preprocessing %s failed: %s", jid, err)

    kept = []
    for rec in entries:
        if rec["id"] in results:
            rec["file_hash"] = results[rec["id"]]
            summary.computed.append(rec["id"])
        if "file_hash" in rec:
            kept.append(rec)
    index = {"task": manifest.task, "classes": manifest.classes, "k0": k0, "seed": seed,
             "augment_copies": augment_copies, "entries": kept}
    tmp = cache_dir / (INDEX + ".tmp")
    tmp.write_text(json.dumps(index, indent=2))
    os.replace(tmp, cache_dir / INDEX)
    return summary


@dataclass
class Cache:
    task: str
    classes: list
    k0: int
    entries: list

    def split(self, name: str, include_augmented: bool = True) -> list:
        return [e for e in self.entries
                if e.split == name and (include_augmented or e.id == e.base_id)]


def load_cache(cache_dir) -> Cache:
    cache_dir = Path(cache_dir)
    index = read_index(cache_dir)
    if not index:
        raise FileNotFoundError(f"no cache index in {cache_dir}")
    entries = []
    for rec in index["entries"]:
        t = container.load(cache_dir / rec["file"])
        entries.append(entry_from_tensors(t, rec["id"], rec["split"], rec.get("base_id", "")))
    return Cache(index["task"], index["classes"], int(index["k0"]), entries)
