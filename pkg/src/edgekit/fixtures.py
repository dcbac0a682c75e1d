"""Synthetic-shapes dataset generator for tests and desk-scale benchmarks.

Each image is a flat background with 2-4 filled rectangles/disks (later
shapes occlude earlier ones) plus optional Gaussian noise.  The ground
truth is the analytic region boundary: a pixel is an edge when its region
id differs from the pixel below or to the right, giving 1-pixel contours
unaffected by the noise.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, ingest_directory
from .image import save_gray_png


def _render(rng: np.random.Generator, size: int, noise_sigma: float):
    region = np.zeros((size, size), dtype=int)
    intensity = [float(rng.uniform(20, 235))]
    yy, xx = np.mgrid[0:size, 0:size]
    n_shapes = int(rng.integers(2, 5))
    for k in range(1, n_shapes + 1):
        v = float(rng.uniform(10, 245))
        # keep at least 40 gray levels of contrast against the background
        while abs(v - intensity[0]) < 40:
            v = float(rng.uniform(10, 245))
        intensity.append(v)
        if rng.random() < 0.5:
            h = int(rng.integers(size // 8, size // 2))
            w = int(rng.integers(size // 8, size // 2))
            top = int(rng.integers(0, size - h))
            left = int(rng.integers(0, size - w))
            mask = np.zeros((size, size), dtype=bool)
            mask[top : top + h, left : left + w] = True
        else:
            r = float(rng.uniform(size / 10, size / 3.5))
            cy = float(rng.uniform(r, size - r))
            cx = float(rng.uniform(r, size - r))
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        region[mask] = k

    img = np.asarray(intensity)[region]
    if noise_sigma > 0:
        img = img + rng.normal(0.0, noise_sigma, size=img.shape)
    img = np.clip(np.round(img), 0, 255)

    boundary = np.zeros((size, size), dtype=bool)
    boundary[:-1, :] |= region[:-1, :] != region[1:, :]
    boundary[:, :-1] |= region[:, :-1] != region[:, 1:]
    return img, boundary


def generate_dataset(
    root,
    n_train: int = 30,
    n_test: int = 10,
    n_val: int = 0,
    seed: int = 0,
    size: int = 256,
    noise_sigma: float = 12.0,
    annotators: int = 1,
) -> DatasetManifest:
    """Write a bsds-like synthetic dataset tree under root and ingest it."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    counts = {"train": n_train, "val": n_val, "test": n_test}
    for split, n in counts.items():
        if n == 0:
            continue
        img_dir = root / "images" / split
        gt_dir = root / "groundtruth" / split
        img_dir.mkdir(parents=True, exist_ok=True)
        gt_dir.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            img, boundary = _render(rng, size, noise_sigma)
            sid = f"{split}{i:04d}"
            save_gray_png(img, img_dir / f"{sid}.png", assume_unit=False)
            for a in range(annotators):
                save_gray_png(
                    boundary.astype(float) * 255.0,
                    gt_dir / f"{sid}_gt{a}.png",
                    assume_unit=False,
                )
    return ingest_directory(root, layout="bsds-like", name="synthetic-shapes")
