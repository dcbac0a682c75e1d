"""Command-line entry point.

Commands: ingest, train, detect, evaluate, compare, fixture-gen.
Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dataset as dataset_mod
from . import fixtures, model as model_mod, pipeline, svm as svm_mod, workflow
from .config import apply_overrides, load_config, write_effective_config
from .errors import DataError, UsageError
from .evaluation import DEFAULT_MAX_DIST
from .image import load_image, save_gray_png


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def _grid(n: int) -> np.ndarray:
    return np.linspace(0.01, 0.99, n)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edgekit", description="Hybrid CNN+SVM edge detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[], help="scan a dataset tree into a manifest")
    p.add_argument("root", help="dataset root containing images/ and groundtruth/")
    p.add_argument("--layout", choices=["bsds-like", "flat-pairs"], default="bsds-like",
                   help="directory convention: bsds-like (per-split subdirs) or "
                        "flat-pairs (single pool, split=test)")

    p = sub.add_parser("train", help="train the CNN and/or SVM stage")
    p.add_argument("--manifest", required=True)
    p.add_argument("--stage", choices=["cnn", "svm", "all"], default="all")
    p.add_argument("--cnn-checkpoint", help="existing checkpoint (required for --stage svm)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--n-per-class", type=int, dest="n_per_class")
    _add_common(p)

    p = sub.add_parser("detect", help="run one detector on image files")
    p.add_argument("images", nargs="+")
    p.add_argument("--method", required=True, choices=list(workflow.ALL_METHODS))
    p.add_argument("--bundle", help="detector bundle directory (hybrid only)")
    p.add_argument("--binary", action="store_true", help="emit the sign-rule binary map")
    p.add_argument("--post", action="store_true", help="apply morphological post-processing")
    _add_common(p)

    p = sub.add_parser("evaluate", help="ODS/OIS/AP benchmark over a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--methods", required=True,
                   help="comma-separated subset of: " + ",".join(workflow.ALL_METHODS))
    p.add_argument("--bundle")
    p.add_argument("--binary", action="store_true",
                   help="evaluate the hybrid at its literal sign output")
    p.add_argument("--post", action="store_true",
                   help="evaluate the hybrid with morphological post-processing")
    _add_common(p)

    p = sub.add_parser("compare", help="side-by-side comparison sheets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--methods", required=True)
    p.add_argument("--n-images", type=int, default=1, dest="n_images")
    p.add_argument("--bundle")
    _add_common(p)

    p = sub.add_parser("fixture-gen", help="generate a synthetic-shapes dataset")
    p.add_argument("root")
    p.add_argument("--n-train", type=int, default=30, dest="n_train")
    p.add_argument("--n-test", type=int, default=10, dest="n_test")
    p.add_argument("--n-val", type=int, default=0, dest="n_val")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--noise-sigma", type=float, default=12.0, dest="noise_sigma")
    p.add_argument("--annotators", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    return parser


def _cfg_from_args(args) -> dict:
    cfg = load_config(getattr(args, "config", None))
    overrides = {
        k: getattr(args, k, None)
        for k in ("seed", "epochs", "batch_size", "lr", "n_per_class")
    }
    return apply_overrides(cfg, overrides)


def _load_bundle_arg(args) -> pipeline.HybridDetector | None:
    if getattr(args, "bundle", None):
        return pipeline.load_bundle(args.bundle)
    return None


def cmd_ingest(args) -> int:
    manifest = dataset_mod.ingest_directory(args.root, layout=args.layout)
    print(f"ingested {len(manifest.samples)} samples "
          f"({len(manifest.skipped)} skipped) -> {Path(args.root) / 'manifest.json'}")
    for line in manifest.skipped:
        print(f"  skipped: {line}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    cfg = _cfg_from_args(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_effective_config(cfg, out)
    manifest = dataset_mod.load_manifest(args.manifest)

    if args.stage in ("cnn", "all"):
        cnn = model_mod.build_model(cfg["seed"])
        tc = model_mod.TrainConfig(
            epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"],
            seed=cfg["seed"], checkpoint_interval=cfg["checkpoint_interval"],
            log_path=str(out / "trainlog.csv"), checkpoint_dir=str(out),
        )
        cnn, log = workflow.train_cnn_stage(cnn, manifest, tc)
        model_mod.save_checkpoint(cnn, out / "cnn.json")
        print(f"cnn: {len(log)} iterations, final loss {log[-1][1]:.6g}")
    else:
        if not args.cnn_checkpoint:
            raise UsageError("--stage svm requires --cnn-checkpoint (train the cnn stage first)")
        cnn = model_mod.load_checkpoint(args.cnn_checkpoint)

    if args.stage in ("svm", "all"):
        svm_model, report = workflow.train_svm_stage(
            manifest, cnn, n_per_class=cfg["n_per_class"], lam=cfg["lambda"],
            max_epochs=cfg["svm_epochs"], tol=cfg["tol"], seed=cfg["seed"],
        )
        for w in report.warnings:
            print(f"  warning: {w}", file=sys.stderr)
        det = workflow.build_hybrid(manifest, cnn, svm_model)
        pipeline.save_bundle(det, out)
        print(f"svm: {report.epochs_run} epochs, duality gap {report.duality_gap:.3g}; "
              f"bundle -> {out}")
    return 0


def cmd_detect(args) -> int:
    cfg = _cfg_from_args(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_effective_config(cfg, out)
    bundle = _load_bundle_arg(args)
    detector = workflow.make_detector(args.method, bundle=bundle,
                                      binary=args.binary, postprocess=args.post)
    for img_path in args.images:
        emap = detector(load_image(img_path))
        conf = emap.confidence
        if args.post and args.method != workflow.HYBRID:
            conf = pipeline.postprocess_morphological(emap, cfg["min_component"]).confidence
        if args.binary and args.method != workflow.HYBRID:
            conf = (conf > 0.5).astype(float)
        dest = out / f"{Path(img_path).stem}-{args.method}.png"
        save_gray_png(conf, dest)
        print(f"{img_path} -> {dest}")
    return 0


def _methods_list(spec: str) -> list[str]:
    methods = [m.strip() for m in spec.split(",") if m.strip()]
    if not methods:
        raise UsageError("no methods given")
    for m in methods:
        if m not in workflow.ALL_METHODS:
            raise UsageError(f"unknown method {m!r}; valid: {', '.join(workflow.ALL_METHODS)}")
    return methods


def cmd_evaluate(args) -> int:
    cfg = _cfg_from_args(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_effective_config(cfg, out)
    manifest = dataset_mod.load_manifest(args.manifest)
    methods = _methods_list(args.methods)
    bundle = _load_bundle_arg(args)
    summaries = workflow.evaluate_methods(
        manifest, args.split, methods, bundle=bundle,
        grid=_grid(cfg["grid_size"]), max_dist=cfg["max_dist"],
        out_dir=out, binary=args.binary, postprocess=args.post,
    )
    print(workflow.write_summary_table(summaries, out / "summary.txt", out / "summary.csv"))
    return 0


def cmd_compare(args) -> int:
    cfg = _cfg_from_args(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_effective_config(cfg, out)
    manifest = dataset_mod.load_manifest(args.manifest)
    methods = _methods_list(args.methods)
    bundle = _load_bundle_arg(args)
    samples = manifest.split(args.split)[: args.n_images]
    if not samples:
        raise DataError(f"no samples in split {args.split!r}")
    from .image import normalize_unit, resize_bilinear

    for s in samples:
        img = dataset_mod.load_sample_image(manifest, s)
        resized = resize_bilinear(img, model_mod.INPUT_SIZE, model_mod.INPUT_SIZE)
        panels = [normalize_unit(resized).pixels]
        for m in methods:
            panels.append(workflow.make_detector(m, bundle=bundle)(img).confidence)
        gap = np.ones((model_mod.INPUT_SIZE, 4))
        sheet = np.hstack([np.hstack([p, gap]) for p in panels])[:, :-4]
        dest = out / f"compare-{s.id}.png"
        save_gray_png(sheet, dest)
        print(f"{s.id} -> {dest} (input + {', '.join(methods)})")
    return 0


def cmd_fixture_gen(args) -> int:
    manifest = fixtures.generate_dataset(
        args.root, n_train=args.n_train, n_test=args.n_test, n_val=args.n_val,
        seed=args.seed, size=args.size, noise_sigma=args.noise_sigma,
        annotators=args.annotators,
    )
    print(f"generated {len(manifest.samples)} samples under {args.root}")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "detect": cmd_detect,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "fixture-gen": cmd_fixture_gen,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # invariant violation / bug
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
