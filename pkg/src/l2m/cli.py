"""Command-line entry point ``l2m``.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

logger = logging.getLogger("l2m")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _set_threads():
    import torch

    from .pipeline.cache import thread_count

    torch.set_num_threads(thread_count())


def cmd_preprocess(args) -> int:
    from .pipeline.cache import preprocess
    from .pipeline.dataset import load_manifest

    summary = preprocess(load_manifest(args.manifest), args.k0, args.cache,
                         augment_copies=args.augment_copies, seed=args.seed)
    print(json.dumps({"computed": len(summary.computed), "reused": len(summary.reused),
                      "failed": summary.failed}))
    return EXIT_OK if summary.ok else EXIT_DATA


def cmd_train(args) -> int:
    from .pipeline.cache import load_cache
    from .pipeline.training import TrainConfig, train

    _set_threads()
    cache = load_cache(args.cache)
    cfg = TrainConfig.from_dict(json.loads(Path(args.config).read_text()), n_classes=len(cache.classes))
    res = train(cfg, cache, out_dir=args.out)
    print(json.dumps({k: v for k, v in res.items() if k not in ("model", "history")}))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .pipeline.training import evaluate

    _set_threads()
    report = evaluate(args.checkpoint, args.cache, args.split)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    from .laplacian import cotangent_laplacian
    from .mesh import build_topology, load_mesh, save_mesh
    from .spectral import project, reconstruct, relative_rms_error, smallest_eigenpairs

    mesh = load_mesh(args.mesh)
    k = min(args.k, mesh.n_vertices)
    basis = smallest_eigenpairs(cotangent_laplacian(mesh, build_topology(mesh)), k)
    V = reconstruct(basis, project(basis, mesh.vertices))
    save_mesh(mesh.with_vertices(V), args.out)
    print(json.dumps({"n": mesh.n_vertices, "k": k, "relative_rms_error": relative_rms_error(mesh.vertices, V)}))
    return EXIT_OK


def cmd_features(args) -> int:
    from . import container
    from .descriptors import LAYOUT_VERSION
    from .mesh import load_mesh
    from .pipeline.cache import prepare_mesh

    mesh, _, basis, feats = prepare_mesh(load_mesh(args.mesh), args.k)
    container.save(args.out, {
        "features": feats.data,
        "layout_version": np.array([LAYOUT_VERSION], dtype=np.uint32),
        "eigenvalues": basis.eigenvalues,
    })
    print(json.dumps({"n": mesh.n_vertices, "k": basis.k, "columns": int(feats.data.shape[1])}))
    return EXIT_OK


def cmd_segment(args) -> int:
    from .mesh import load_mesh
    from .network import load_checkpoint
    from .pipeline.export import export_colored_mesh
    from .pipeline.training import predict_mesh

    _set_threads()
    model, meta = load_checkpoint(args.checkpoint)
    if model.cfg.task != "segmentation":
        raise ValueError("checkpoint is not a segmentation model")
    mesh, P = predict_mesh(model, meta, load_mesh(args.mesh))
    labels = export_colored_mesh(mesh, P, args.out)
    print(json.dumps({"faces": int(len(labels)), "counts": np.bincount(labels, minlength=P.shape[1]).tolist()}))
    return EXIT_OK


def cmd_make_toy(args) -> int:
    from .pipeline.synthetic import make_classification_toy, make_segmentation_toy

    make = make_classification_toy if args.task == "classification" else make_segmentation_toy
    print(make(args.out, seed=args.seed))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="l2m", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("preprocess", help="build the feature cache for a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--k0", type=int, required=True)
    s.add_argument("--cache", required=True)
    s.add_argument("--augment-copies", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", help="train a model on a cache")
    s.add_argument("--config", required=True)
    s.add_argument("--cache", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint, JSON report on stdout")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--cache", required=True)
    s.add_argument("--split", default="test")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("reconstruct", help="low-pass a mesh through its first k eigenvectors")
    s.add_argument("--mesh", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("features", help="write the per-vertex descriptor matrix")
    s.add_argument("--mesh", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=int, default=64, help="eigenbasis size for HKS and eigenvector columns")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("segment", help="segment a mesh and write a coloured PLY")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--mesh", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("make-toy", help="write a seeded synthetic dataset")
    s.add_argument("task", choices=["classification", "segmentation"])
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_make_toy)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .spectral import ConvergenceError
    from .pipeline.training import NumericalError

    try:
        return args.func(args)
    except (ConvergenceError, NumericalError, FloatingPointError) as exc:
        print(f"l2m: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError) as exc:
        print(f"l2m: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
