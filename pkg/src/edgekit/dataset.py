"""Dataset ingestion and loading.

Canonical on-disk layout (PNG/JPEG files; original archive containers are
converted externally):

  bsds-like:   root/images/{train,val,test}/<id>.png
               root/groundtruth/{train,val,test}/<id>_gt<k>.png
  flat-pairs:  root/images/<id>.png
               root/groundtruth/<id>_gt<k>.png        (split = "test")

Ground-truth masks are binarized at > 0.  A manifest JSON records the
samples; loaders resize masks with nearest-neighbor interpolation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, UsageError
from .image import GrayImage, load_image, resize_nearest

MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")
_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class Sample:
    id: str
    image_path: str
    gt_paths: tuple[str, ...]
    split: str


@dataclass
class DatasetManifest:
    name: str
    root: str
    samples: list[Sample]
    skipped: list[str] = field(default_factory=list)

    def split(self, which: str) -> list[Sample]:
        return [s for s in self.samples if s.split == which]


def _find_gts(gt_dir: Path, sample_id: str) -> list[Path]:
    hits = sorted(gt_dir.glob(f"{sample_id}_gt*.png")) + sorted(
        gt_dir.glob(f"{sample_id}_gt*.jpg")
    )
    return hits


def ingest_directory(root, layout: str = "bsds-like", name: str | None = None) -> DatasetManifest:
    """Scan a dataset tree and write root/manifest.json.

    Images without any ground truth go to the skipped report; unreadable
    referenced files are fatal.
    """
    root = Path(root)
    images_dir = root / "images"
    gt_root = root / "groundtruth"
    if not images_dir.is_dir() or not gt_root.is_dir():
        raise DataError(f"{root}: expected images/ and groundtruth/ subtrees")
    if layout not in ("bsds-like", "flat-pairs"):
        raise UsageError(f"unknown layout {layout!r}")

    samples: list[Sample] = []
    skipped: list[str] = []
    if layout == "bsds-like":
        pairs = [(split, images_dir / split, gt_root / split) for split in SPLITS]
    else:
        pairs = [("test", images_dir, gt_root)]

    for split, img_dir, gt_dir in pairs:
        if not img_dir.is_dir():
            continue
        for img_path in sorted(img_dir.iterdir()):
            if img_path.suffix.lower() not in _IMAGE_SUFFIXES:
                continue
            sid = img_path.stem
            gts = _find_gts(gt_dir, sid) if gt_dir.is_dir() else []
            if not gts:
                skipped.append(f"{split}/{sid}: no ground-truth maps")
                continue
            samples.append(Sample(
                id=sid,
                image_path=str(img_path.relative_to(root)),
                gt_paths=tuple(str(g.relative_to(root)) for g in gts),
                split=split,
            ))
    if not samples:
        raise DataError(f"{root}: no usable samples found")

    manifest = DatasetManifest(name=name or root.name, root=str(root), samples=samples,
                               skipped=skipped)
    write_manifest(manifest, root / "manifest.json")
    return manifest


def write_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "format_version": MANIFEST_VERSION,
        "name": manifest.name,
        "root": manifest.root,
        "samples": [
            {"id": s.id, "image": s.image_path, "gts": list(s.gt_paths), "split": s.split}
            for s in manifest.samples
        ],
        "skipped": manifest.skipped,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read manifest ({exc})") from exc
    if doc.get("format_version") != MANIFEST_VERSION:
        raise DataError(f"{path}: unsupported manifest version {doc.get('format_version')}")
    samples = [
        Sample(id=s["id"], image_path=s["image"], gt_paths=tuple(s["gts"]), split=s["split"])
        for s in doc["samples"]
    ]
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate sample ids")
    return DatasetManifest(name=doc["name"], root=doc["root"], samples=samples,
                           skipped=list(doc.get("skipped", [])))


def load_sample_image(manifest: DatasetManifest, sample: Sample) -> GrayImage:
    return load_image(Path(manifest.root) / sample.image_path)


def _load_binary_mask(path, size: int) -> np.ndarray:
    mask = load_image(path).pixels > 0
    return resize_nearest(mask, size, size)


def load_training_targets(manifest: DatasetManifest, sample: Sample, size: int = 256) -> np.ndarray:
    """Mean of the annotator masks, nearest-neighbor resized; values are
    multiples of 1/annotator-count in [0, 1]."""
    root = Path(manifest.root)
    masks = [_load_binary_mask(root / g, size) for g in sample.gt_paths]
    return np.mean([m.astype(np.float64) for m in masks], axis=0)


def load_eval_gts(manifest: DatasetManifest, sample: Sample, size: int = 256) -> list[np.ndarray]:
    """Per-annotator binary masks at the evaluation size (not averaged)."""
    root = Path(manifest.root)
    return [_load_binary_mask(root / g, size) for g in sample.gt_paths]
