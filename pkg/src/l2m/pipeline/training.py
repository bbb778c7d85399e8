"""Training and evaluation loops over a preprocessed cache."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..laplacian import AdjacencyData, vertex_adjacency
from ..loss import LossConfig, combined_loss, cross_entropy, edge_weights, mean_edge_length
from ..mesh import Mesh, build_topology
from ..network import ModelConfig, build_model, load_checkpoint, make_optimizer, save_checkpoint
from ..spectral import nonzero_modes, prefix_basis, project, truncate_or_pad
from .cache import Cache, CacheEntry, load_cache, prepare_mesh
from .metrics import classification_accuracy, face_accuracy

logger = logging.getLogger(__name__)

DEFAULT_K = {"segmentation": (512, 128, 32), "classification": (256, 64, 16)}


class NumericalError(RuntimeError):
    pass


class ConfigMismatch(ValueError):
    pass


@dataclass
class TrainConfig:
    model: ModelConfig
    loss: LossConfig = field(default_factory=LossConfig)
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    use_augmented: bool = True
    drop_zero_modes: bool = False
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @classmethod
    def from_dict(cls, d: dict, n_classes: int | None = None) -> "TrainConfig":
        d = dict(d)
        m = dict(d.pop("model", {}))
        task = m.get("task", d.pop("task", "segmentation"))
        m["task"] = task
        m.setdefault("k", d.pop("k", DEFAULT_K[task]))
        if n_classes is not None:
            m["n_classes"] = n_classes
        m["seed"] = d.get("seed", m.get("seed", 0))
        loss = LossConfig(**d.pop("loss", {}))
        return cls(model=ModelConfig(**m), loss=loss, **d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d


@dataclass
class Sample:
    id: str
    base_id: str
    x: torch.Tensor
    label: int | None = None
    basis: torch.Tensor | None = None
    y: torch.Tensor | None = None
    vertices: np.ndarray | None = None
    faces: np.ndarray | None = None
    face_labels: np.ndarray | None = None
    adj: AdjacencyData | None = None
    weights: np.ndarray | None = None


def spectral_input(basis, features: np.ndarray, k0: int, drop_zero_modes: bool = False):
    """Project features on the first ``k0`` modes, zero-padded to ``k0`` rows.

    Returns ``(x, E)`` with ``x`` of shape ``(k0, d)`` and ``E`` of shape
    ``(n, k0)`` (extra columns zero when the mesh has fewer modes).
    """
    if drop_zero_modes:
        basis = nonzero_modes(basis)
    b = prefix_basis(basis, min(k0, basis.k))
    x = truncate_or_pad(project(b, features).data, k0)
    E = truncate_or_pad(b.vectors.T, k0).T
    return x, E


def make_sample(entry: CacheEntry, cfg: TrainConfig, dtype=torch.float32) -> Sample:
    k0 = cfg.model.k[0]
    x, E = spectral_input(entry.basis, entry.features.data, k0, cfg.drop_zero_modes)
    s = Sample(entry.id, entry.base_id, torch.as_tensor(x, dtype=dtype), label=entry.label)
    if cfg.model.task == "segmentation":
        mesh = Mesh(entry.vertices, entry.faces)
        adj = vertex_adjacency(build_topology(mesh))
        sigma = cfg.loss.sigma if cfg.loss.sigma is not None else mean_edge_length(mesh.vertices, adj.edges)
        s.basis = torch.as_tensor(np.array(E), dtype=dtype)
        s.y = torch.as_tensor(entry.vertex_labels, dtype=torch.long)
        s.vertices = mesh.vertices
        s.faces = mesh.faces
        s.face_labels = entry.face_labels
        s.adj = adj
        s.weights = edge_weights(mesh.vertices, adj.edges, sigma, cfg.loss.gaussian_squared)
    return s


def _segment_loss(model, s: Sample, loss_cfg: LossConfig):
    P = model(s.x, s.basis)
    return combined_loss(P, s.y, s.vertices, s.adj, loss_cfg, weights=s.weights)


@torch.no_grad()
def evaluate_samples(model, samples, task: str) -> dict:
    model.eval()
    if not samples:
        return {"metric": float("nan"), "per_mesh": {}}
    if task == "classification":
        logits = model(torch.stack([s.x for s in samples])).numpy()
        labels = np.array([s.label for s in samples])
        pred = logits.argmax(axis=1)
        per = {s.id: int(p) for s, p in zip(samples, pred)}
        return {"metric": classification_accuracy(logits, labels), "per_mesh": per}
    per = {}
    for s in samples:
        P = model(s.x, s.basis).numpy()
        per[s.id] = face_accuracy(P, s.face_labels, s.faces)
    return {"metric": float(np.mean(list(per.values()))), "per_mesh": per}


def _variant_groups(samples):
    groups = {}
    for s in samples:
        groups.setdefault(s.base_id, []).append(s)
    return [groups[k] for k in sorted(groups)]


def train(cfg: TrainConfig, cache: Cache, out_dir=None, log_fn=None) -> dict:
    """Train on the cache's train split, selecting the best epoch on the test split.

    Writes ``best.l2mt``, ``last.l2mt`` (plus JSON sidecars),
    ``metrics.jsonl`` and ``summary.json`` into ``out_dir`` when given.
    """
    if cfg.model.task != cache.task:
        raise ConfigMismatch(f"config task {cfg.model.task!r} but cache holds {cache.task!r}")
    if cache.k0 < cfg.model.k[0]:
        raise ConfigMismatch(f"cache built with k0={cache.k0} < model k0={cfg.model.k[0]}")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    task = cfg.model.task
    train_s = [make_sample(e, cfg) for e in cache.split("train", cfg.use_augmented)]
    test_s = [make_sample(e, cfg) for e in cache.split("test", include_augmented=False)]
    if not train_s:
        raise ValueError("cache has no training meshes")
    groups = _variant_groups(train_s)
    model = build_model(cfg.model)
    opt = make_optimizer(model.parameters(), cfg.lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=cfg.epochs)
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.jsonl").write_text("")
    extra = {"train": cfg.to_dict(), "classes": cache.classes, "cache_k0": cache.k0}
    best, best_epoch, history = -math.inf, -1, []
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(len(groups))
        picked = [groups[i][epoch % len(groups[i])] for i in order]
        losses = []
        if task == "classification":
            for b in range(0, len(picked), cfg.batch_size):
                batch = picked[b:b + cfg.batch_size]
                x = torch.stack([s.x for s in batch])
                y = torch.tensor([s.label for s in batch])
                loss = cross_entropy(torch.softmax(model(x), dim=-1), y)
                if not torch.isfinite(loss):
                    raise NumericalError(f"non-finite loss in batch with {batch[0].id}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                losses.append(loss.item() * len(batch))
            train_loss = sum(losses) / len(picked)
        else:
            for s in picked:
                loss = _segment_loss(model, s, cfg.loss)
                if not torch.isfinite(loss):
                    raise NumericalError(f"non-finite loss on mesh {s.id}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                losses.append(loss.item())
            train_loss = float(np.mean(losses))
        sched.step()
        rec = {"epoch": epoch, "train_loss": train_loss, "lr": opt.param_groups[0]["lr"]}
        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            ev = evaluate_samples(model, test_s or train_s, task)
            rec["test_metric"] = ev["metric"]
            if ev["metric"] > best:
                best, best_epoch = ev["metric"], epoch
                if out:
                    save_checkpoint(out / "best.l2mt", model, {**extra, "epoch": epoch, "metric": best})
        history.append(rec)
        if out:
            with open(out / "metrics.jsonl", "a") as fh:
                fh.write(json.dumps(rec) + "\n")
        if log_fn:
            log_fn(rec)
        logger.info("epoch %d loss %.5f metric %s", epoch, train_loss, rec.get("test_metric"))
    summary = {
        "best_metric": best, "best_epoch": best_epoch, "final_metric": history[-1].get("test_metric"),
        "final_train_loss": history[-1]["train_loss"], "epochs": cfg.epochs,
        "seconds": time.perf_counter() - t0,
    }
    if out:
        save_checkpoint(out / "last.l2mt", model, {**extra, "epoch": cfg.epochs - 1})
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return {"model": model, "history": history, **summary}


def _check_compat(meta: dict, cache: Cache):
    mcfg = ModelConfig(**meta["model"])
    if mcfg.task != cache.task:
        raise ConfigMismatch(f"checkpoint task {mcfg.task!r} but cache holds {cache.task!r}")
    if cache.k0 < mcfg.k[0]:
        raise ConfigMismatch(f"cache k0={cache.k0} smaller than checkpoint k0={mcfg.k[0]}")
    if mcfg.n_classes != len(cache.classes):
        raise ConfigMismatch(f"checkpoint has {mcfg.n_classes} classes, cache {len(cache.classes)}")
    return mcfg


def evaluate(checkpoint, cache, split: str = "test") -> dict:
    """Mesh accuracy (classification) or mean face accuracy (segmentation)."""
    if not isinstance(cache, Cache):
        cache = load_cache(cache)
    model, meta = load_checkpoint(checkpoint)
    mcfg = _check_compat(meta, cache)
    tcfg = TrainConfig.from_dict(meta.get("train", {"model": mcfg.to_dict()}))
    samples = [make_sample(e, tcfg) for e in cache.split(split, include_augmented=False)]
    ev = evaluate_samples(model, samples, mcfg.task)
    key = "accuracy" if mcfg.task == "classification" else "face_accuracy"
    return {"task": mcfg.task, "split": split, "n_meshes": len(samples), key: ev["metric"],
            "per_mesh": ev["per_mesh"]}


@torch.no_grad()
def predict_mesh(model, meta: dict, mesh: Mesh) -> tuple:
    """Run a trained model on a raw mesh.

    Returns ``(normalized_mesh, output)`` where ``output`` is the ``n x C``
    probability matrix (segmentation) or the class probabilities.
    """
    mcfg = model.cfg
    drop = bool(meta.get("train", {}).get("drop_zero_modes", False))
    mesh, topo, basis, feats = prepare_mesh(mesh, int(meta.get("cache_k0", mcfg.k[0])))
    x, E = spectral_input(basis, feats.data, mcfg.k[0], drop)
    x = torch.as_tensor(x, dtype=torch.float32)
    model.eval()
    if mcfg.task == "classification":
        return mesh, torch.softmax(model(x), dim=-1).numpy()
    return mesh, model(x, torch.as_tensor(np.array(E), dtype=torch.float32)).numpy()
