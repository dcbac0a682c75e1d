"""Linear SVM: per-pixel sample selection, dual coordinate descent on the
L2-regularized hinge objective, and batched affine scoring.

Objective:  min_w,b  lambda * ||(w, b)||^2 + (1/n) * sum_i hinge(y_i f(x_i))
with f(x) = w.x + b.  The bias is folded in as a constant feature, so it
carries the same ridge penalty as w (LIBLINEAR-style).  Features are
standardized with statistics from the training sample; the statistics are
stored in the model and applied at scoring time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeError, UsageError

MODEL_VERSION = 1
_STD_FLOOR = 1e-12


@dataclass
class SvmModel:
    w: np.ndarray            # weights in standardized feature space
    b: float
    lam: float
    feature_mean: np.ndarray
    feature_std: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.feature_mean = np.asarray(self.feature_mean, dtype=np.float64)
        self.feature_std = np.asarray(self.feature_std, dtype=np.float64)
        if self.lam <= 0:
            raise UsageError(f"lambda must be positive, got {self.lam}")
        if not (self.w.shape == self.feature_mean.shape == self.feature_std.shape):
            raise ShapeError("w, feature_mean, and feature_std must share one shape")


@dataclass
class TrainReport:
    epochs_run: int
    max_violation: float
    duality_gap: float
    primal_objective: float
    warnings: list[str] = field(default_factory=list)


def sample_training_pixels(fmat: np.ndarray, gt: np.ndarray, n_per_class: int, seed: int):
    """Draw up to n_per_class edge and non-edge pixel rows from a flattened
    feature matrix, uniformly without replacement.

    gt is a binary map (any shape flattening to fmat's row count).
    Returns (features, labels, warnings) with labels in {-1, +1}.
    """
    if n_per_class < 1:
        raise UsageError(f"n_per_class must be >= 1, got {n_per_class}")
    fmat = np.asarray(fmat, dtype=np.float64)
    mask = np.asarray(gt).reshape(-1) > 0
    if mask.size != fmat.shape[0]:
        raise ShapeError(f"gt has {mask.size} pixels but features have {fmat.shape[0]} rows")
    rng = np.random.default_rng(seed)
    warnings = []
    parts_x, parts_y = [], []
    for label, idx in ((+1, np.flatnonzero(mask)), (-1, np.flatnonzero(~mask))):
        if idx.size == 0:
            warnings.append(f"no pixels with label {label:+d}; class skipped")
            continue
        take = min(n_per_class, idx.size)
        chosen = np.sort(rng.choice(idx, size=take, replace=False))
        parts_x.append(fmat[chosen])
        parts_y.append(np.full(take, label, dtype=np.float64))
    if not parts_x:
        return np.empty((0, fmat.shape[1])), np.empty(0), warnings
    return np.concatenate(parts_x), np.concatenate(parts_y), warnings


def train_svm(
    features: np.ndarray,
    labels: np.ndarray,
    lam: float = 1e-4,
    max_epochs: int = 200,
    tol: float = 1e-4,
    seed: int = 0,
) -> tuple[SvmModel, TrainReport]:
    """Dual coordinate descent with per-epoch random permutation.

    Stops when the largest projected-gradient violation over an epoch
    drops below tol.  The returned report includes the duality gap of the
    lambda-scaled objective at termination.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ShapeError(f"bad shapes: features {x.shape}, labels {y.shape}")
    if lam <= 0 or tol <= 0 or max_epochs < 1:
        raise UsageError("lam and tol must be positive, max_epochs >= 1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise UsageError("training set must contain both classes")

    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), _STD_FLOOR)
    z = np.hstack([(x - mean) / std, np.ones((x.shape[0], 1))])

    n = z.shape[0]
    c = 1.0 / (2.0 * lam * n)  # box bound of the scaled dual
    qii = np.einsum("ij,ij->i", z, z)
    alpha = np.zeros(n)
    w = np.zeros(z.shape[1])
    rng = np.random.default_rng(seed)

    epochs_run = 0
    max_violation = np.inf
    for _ in range(max_epochs):
        epochs_run += 1
        max_violation = 0.0
        for i in rng.permutation(n):
            g = y[i] * (z[i] @ w) - 1.0
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= c:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                max_violation = max(max_violation, abs(pg))
                new_a = min(max(alpha[i] - g / qii[i], 0.0), c)
                w += (new_a - alpha[i]) * y[i] * z[i]
                alpha[i] = new_a
        if max_violation < tol:
            break

    margins = 1.0 - y * (z @ w)
    hinge = np.maximum(margins, 0.0).sum()
    primal_scaled = 0.5 * (w @ w) + c * hinge
    dual_scaled = alpha.sum() - 0.5 * (w @ w)
    gap = 2.0 * lam * (primal_scaled - dual_scaled)
    primal = 2.0 * lam * primal_scaled

    model = SvmModel(w=w[:-1].copy(), b=float(w[-1]), lam=lam, feature_mean=mean, feature_std=std)
    report = TrainReport(
        epochs_run=epochs_run, max_violation=float(max_violation),
        duality_gap=float(gap), primal_objective=float(primal),
    )
    return model, report


def decision_values(model: SvmModel, fmat: np.ndarray) -> np.ndarray:
    """Affine scores w.x + b per row, after stored standardization."""
    x = np.asarray(fmat, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.w.shape[0]:
        raise ShapeError(f"features have {x.shape[-1] if x.ndim == 2 else '?'} columns, "
                         f"model expects {model.w.shape[0]}")
    z = (x - model.feature_mean) / model.feature_std
    return z @ model.w + model.b


def predict_labels(model: SvmModel, fmat: np.ndarray) -> np.ndarray:
    """Sign of the decision value; a score of exactly 0 maps to -1."""
    return np.where(decision_values(model, fmat) > 0.0, 1.0, -1.0)


def save_model(model: SvmModel, path) -> None:
    doc = {
        "format_version": MODEL_VERSION,
        "w": model.w.tolist(),
        "b": model.b,
        "lambda": model.lam,
        "feature_mean": model.feature_mean.tolist(),
        "feature_std": model.feature_std.tolist(),
        "n_features": int(model.w.shape[0]),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path) -> SvmModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read SVM model ({exc})") from exc
    if doc.get("format_version") != MODEL_VERSION:
        raise DataError(f"{path}: unsupported SVM model version {doc.get('format_version')}")
    return SvmModel(
        w=np.array(doc["w"]), b=float(doc["b"]), lam=float(doc["lambda"]),
        feature_mean=np.array(doc["feature_mean"]), feature_std=np.array(doc["feature_std"]),
    )
