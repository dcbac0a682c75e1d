"""Training and evaluation orchestration over dataset manifests.

Sits between the core modules and the CLI so the whole train/evaluate
flow is scriptable from Python as well.  All evaluation happens at the
pipeline resolution (256x256): inputs are resized bilinearly, ground
truth with nearest-neighbor.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import classical
from . import svm as svm_mod
from .classical import EdgeMap
from .dataset import (
    DatasetManifest,
    load_eval_gts,
    load_sample_image,
    load_training_targets,
)
from .errors import UsageError
from .evaluation import DEFAULT_MAX_DIST, EvalSummary, evaluate_method
from .image import GrayImage, normalize_unit, resize_bilinear
from .model import (
    INPUT_SIZE,
    CnnModel,
    TrainConfig,
    extract_features,
    flatten_features,
    train_cnn,
)
from .pipeline import HybridDetector, calibrate_scores, detect_hybrid
from .svg import write_pr_curves

HYBRID = "hybrid"
ALL_METHODS = tuple(classical.DETECTORS) + (HYBRID,)


def prepare_cnn_dataset(manifest: DatasetManifest, split: str = "train"):
    """(unit input pixels, regression target) pairs at 256x256."""
    samples = manifest.split(split)
    if not samples:
        raise UsageError(f"manifest has no samples in split {split!r}")
    out = []
    for s in samples:
        img = load_sample_image(manifest, s)
        unit = normalize_unit(resize_bilinear(img, INPUT_SIZE, INPUT_SIZE))
        target = load_training_targets(manifest, s, INPUT_SIZE)
        out.append((unit.pixels, target))
    return out


def train_cnn_stage(model: CnnModel, manifest: DatasetManifest, cfg: TrainConfig):
    dataset = prepare_cnn_dataset(manifest, "train")
    return train_cnn(model, dataset, cfg)


def train_svm_stage(
    manifest: DatasetManifest,
    cnn: CnnModel,
    n_per_class: int = 2000,
    lam: float = 1e-4,
    max_epochs: int = 200,
    tol: float = 1e-4,
    seed: int = 0,
):
    """Sample per-pixel features from every training image (ground truth is
    the any-annotator union) and fit the SVM."""
    samples = manifest.split("train")
    if not samples:
        raise UsageError("manifest has no training samples")
    xs, ys = [], []
    warnings: list[str] = []
    for i, s in enumerate(samples):
        img = load_sample_image(manifest, s)
        unit = normalize_unit(resize_bilinear(img, INPUT_SIZE, INPUT_SIZE))
        fmat = flatten_features(extract_features(cnn, unit))
        gt = load_training_targets(manifest, s, INPUT_SIZE) > 0
        x, y, warn = svm_mod.sample_training_pixels(fmat, gt, n_per_class, seed + i)
        warnings += [f"{s.id}: {w}" for w in warn]
        if x.size:
            xs.append(x)
            ys.append(y)
    if not xs:
        raise UsageError("no SVM training pixels could be sampled")
    model, report = svm_mod.train_svm(
        np.concatenate(xs), np.concatenate(ys),
        lam=lam, max_epochs=max_epochs, tol=tol, seed=seed,
    )
    report.warnings += warnings
    return model, report


def build_hybrid(manifest: DatasetManifest, cnn: CnnModel, svm_model: svm_mod.SvmModel,
                 postprocess: bool = False, min_component: int = 5) -> HybridDetector:
    det = HybridDetector(cnn=cnn, svm=svm_model, calibration=(0.0, 1.0),
                         postprocess=postprocess, min_component=min_component)
    train_images = [load_sample_image(manifest, s) for s in manifest.split("train")]
    return calibrate_scores(det, train_images)


def make_detector(method: str, bundle: HybridDetector | None = None,
                  binary: bool = False, postprocess: bool = False):
    """Return a callable GrayImage(raw8) -> EdgeMap at 256x256."""
    if method == HYBRID:
        if bundle is None:
            raise UsageError("hybrid method requires a detector bundle")
        det = bundle
        if postprocess and not det.postprocess:
            from dataclasses import replace
            det = replace(det, postprocess=True)
        return lambda img: detect_hybrid(det, img, binary=binary)
    fn = classical.DETECTORS.get(method)
    if fn is None:
        raise UsageError(f"unknown method {method!r}; valid: {', '.join(ALL_METHODS)}")

    def run(img: GrayImage) -> EdgeMap:
        unit = normalize_unit(resize_bilinear(img, INPUT_SIZE, INPUT_SIZE))
        return fn(unit)

    return run


def eval_dataset(manifest: DatasetManifest, split: str):
    """(raw image, [gt masks]) pairs for evaluate_method."""
    samples = manifest.split(split)
    if not samples:
        raise UsageError(f"manifest has no samples in split {split!r}")
    return [
        (load_sample_image(manifest, s), load_eval_gts(manifest, s, INPUT_SIZE))
        for s in samples
    ]


def write_method_csv(summary: EvalSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "tp", "fp", "fn", "precision", "recall"])
        for p in summary.curve:
            w.writerow([f"{p.threshold:.6g}", p.tp, p.fp, p.fn,
                        f"{p.precision:.17g}", f"{p.recall:.17g}"])


def write_summary_table(summaries: list[EvalSummary], txt_path, csv_path) -> str:
    lines = [f"{'Method':<12} {'ODS':>8} {'OIS':>8} {'AP':>8}"]
    for s in summaries:
        lines.append(f"{s.method:<12} {s.ods:8.4f} {s.ois:8.4f} {s.ap:8.4f}")
    table = "\n".join(lines)
    Path(txt_path).write_text(table + "\n")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "ods", "ois", "ap"])
        for s in summaries:
            w.writerow([s.method, f"{s.ods:.17g}", f"{s.ois:.17g}", f"{s.ap:.17g}"])
    return table


def evaluate_methods(
    manifest: DatasetManifest,
    split: str,
    methods: list[str],
    bundle: HybridDetector | None = None,
    grid=None,
    max_dist: float = DEFAULT_MAX_DIST,
    out_dir=None,
    binary: bool = False,
    postprocess: bool = False,
) -> list[EvalSummary]:
    dataset = eval_dataset(manifest, split)
    summaries = []
    for method in methods:
        det = make_detector(method, bundle=bundle, binary=binary and method == HYBRID,
                            postprocess=postprocess and method == HYBRID)
        summaries.append(evaluate_method(det, dataset, method=method,
                                         grid=grid, max_dist=max_dist))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for s in summaries:
            write_method_csv(s, out / f"pr-{s.method}.csv")
        write_summary_table(summaries, out / "summary.txt", out / "summary.csv")
        write_pr_curves(
            {s.method: [(p.recall, p.precision) for p in s.curve] for s in summaries},
            out / "pr-curves.svg",
        )
    return summaries
