"""Hybrid detector: resize -> normalize -> CNN features -> flatten -> SVM
scores -> calibrated confidence map -> optional morphological cleanup.

Score calibration is sign-anchored: a decision value of exactly 0 maps to
confidence 0.5, positive scores stretch linearly to 1.0 at the stored 99th
percentile, negative scores to 0.0 at the stored 1st percentile (clamped).
The literal sign rule of the classifier is therefore exactly the 0.5 slice
of the soft map, while PR sweeps still see a full confidence range.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import svm as svm_mod
from .classical import EIGHT_CONNECTED, EdgeMap
from .errors import DataError, UsageError
from .image import RAW8, GrayImage, normalize_unit, resize_bilinear
from .model import (
    INPUT_SIZE,
    CnnModel,
    extract_features,
    flatten_features,
    load_checkpoint,
    save_checkpoint,
)

BUNDLE_VERSION = 1


@dataclass(frozen=True)
class HybridDetector:
    cnn: CnnModel
    svm: svm_mod.SvmModel
    calibration: tuple[float, float]  # (1st, 99th) percentile of decision values
    postprocess: bool = False
    min_component: int = 5


def scores_to_confidence(scores: np.ndarray, calibration: tuple[float, float]) -> np.ndarray:
    lo, hi = calibration
    s = np.asarray(scores, dtype=np.float64)
    if hi - lo < 1e-12:
        return np.full_like(s, 0.5)
    conf = np.full_like(s, 0.5)
    pos = s > 0
    neg = s < 0
    if hi > 0:
        conf[pos] = 0.5 + 0.5 * s[pos] / hi
    else:
        conf[pos] = 1.0
    if lo < 0:
        conf[neg] = 0.5 - 0.5 * s[neg] / lo
    else:
        conf[neg] = 0.0
    return np.clip(conf, 0.0, 1.0)


def _hybrid_scores(det: HybridDetector, img: GrayImage) -> np.ndarray:
    if img.range_tag != RAW8:
        raise UsageError("detect_hybrid expects a raw8 image (Algorithm steps normalize it)")
    if det.svm.w.shape[0] != _tap_channels(det.cnn):
        raise UsageError("SVM feature dimension does not match the CNN feature tap")
    resized = resize_bilinear(img, INPUT_SIZE, INPUT_SIZE)
    unit = normalize_unit(resized)
    fmap = extract_features(det.cnn, unit)
    fmat = flatten_features(fmap)
    return svm_mod.decision_values(det.svm, fmat)


def _tap_channels(cnn: CnnModel) -> int:
    # feature tap is the ReLU after the conv_6 block; its width is the
    # out_ch of the nearest conv below the tap
    for layer in reversed(cnn.layers[: cnn.feature_tap + 1]):
        cfg = layer.config()
        if "out_ch" in cfg:
            return cfg["out_ch"]
    raise UsageError("cannot determine feature-tap channel count")


def detect_hybrid(det: HybridDetector, img: GrayImage, binary: bool = False) -> EdgeMap:
    """Full pipeline on one raw image; output is always 256x256."""
    scores = _hybrid_scores(det, img)
    conf = scores_to_confidence(scores, det.calibration).reshape(INPUT_SIZE, INPUT_SIZE)
    if binary:
        conf = (conf > 0.5).astype(np.float64)
    out = EdgeMap(conf)
    if det.postprocess:
        out = postprocess_morphological(out, det.min_component)
    return out


def calibrate_scores(det: HybridDetector, images) -> HybridDetector:
    """Store the 1st/99th percentiles of decision values over a calibration
    image set (linear-interpolation quantiles)."""
    all_scores = [_hybrid_scores(det, img) for img in images]
    if not all_scores:
        raise UsageError("calibration image set is empty")
    pool = np.concatenate(all_scores)
    lo = float(np.quantile(pool, 0.01))
    hi = float(np.quantile(pool, 0.99))
    return replace(det, calibration=(lo, hi))


def thin(mask: np.ndarray) -> np.ndarray:
    """Two-subiteration (Zhang-Suen) morphological thinning to a 1-pixel
    skeleton; iterates until stable."""
    img = np.asarray(mask).astype(bool)
    changed = True
    while changed:
        changed = False
        for sub in (0, 1):
            p = np.pad(img, 1, mode="constant")
            p2 = p[:-2, 1:-1]; p3 = p[:-2, 2:]; p4 = p[1:-1, 2:]; p5 = p[2:, 2:]
            p6 = p[2:, 1:-1]; p7 = p[2:, :-2]; p8 = p[1:-1, :-2]; p9 = p[:-2, :-2]
            ring = [p2, p3, p4, p5, p6, p7, p8, p9]
            b = sum(n.astype(int) for n in ring)
            a = sum(
                ((~ring[i]) & ring[(i + 1) % 8]).astype(int) for i in range(8)
            )
            if sub == 0:
                cond = (~p2 | ~p4 | ~p6) & (~p4 | ~p6 | ~p8)
            else:
                cond = (~p2 | ~p4 | ~p8) & (~p2 | ~p6 | ~p8)
            remove = img & (b >= 2) & (b <= 6) & (a == 1) & cond
            if remove.any():
                img = img & ~remove
                changed = True
    return img


def remove_small_components(mask: np.ndarray, min_component: int) -> np.ndarray:
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return np.asarray(mask).astype(bool)
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_component
    keep[0] = False
    return keep[labels]


def postprocess_morphological(e: EdgeMap, min_component: int = 5) -> EdgeMap:
    """Binarize at 0.5, drop small 8-connected components, thin to a
    skeleton, and mask the original confidences with the survivors."""
    mask = e.confidence > 0.5
    mask = remove_small_components(mask, min_component)
    mask = thin(mask)
    return EdgeMap(e.confidence * mask)


def save_bundle(det: HybridDetector, bundle_dir) -> None:
    d = Path(bundle_dir)
    d.mkdir(parents=True, exist_ok=True)
    save_checkpoint(det.cnn, d / "cnn.json")
    svm_mod.save_model(det.svm, d / "svm.json")
    (d / "calibration.json").write_text(json.dumps({
        "format_version": BUNDLE_VERSION,
        "low": det.calibration[0], "high": det.calibration[1],
    }, sort_keys=True))
    (d / "manifest.json").write_text(json.dumps({
        "format_version": BUNDLE_VERSION,
        "components": {"cnn": "cnn.json", "svm": "svm.json", "calibration": "calibration.json"},
    }, sort_keys=True))


def load_bundle(bundle_dir, postprocess: bool = False, min_component: int = 5) -> HybridDetector:
    d = Path(bundle_dir)
    manifest_path = d / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"{bundle_dir}: not a detector bundle (missing manifest.json)")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != BUNDLE_VERSION:
        raise DataError(f"{bundle_dir}: unsupported bundle version")
    comp = manifest["components"]
    cnn = load_checkpoint(d / comp["cnn"])
    svm_model = svm_mod.load_model(d / comp["svm"])
    calib_doc = json.loads((d / comp["calibration"]).read_text())
    return HybridDetector(
        cnn=cnn, svm=svm_model,
        calibration=(float(calib_doc["low"]), float(calib_doc["high"])),
        postprocess=postprocess, min_component=min_component,
    )
