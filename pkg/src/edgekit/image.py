"""Grayscale image container, PNG/JPEG I/O, resizing and 2-D convolution.

Conventions used throughout the toolkit:

* RGB -> gray uses the BT.601 luma weights 0.299/0.587/0.114, rounded to
  the nearest integer.
* Bilinear resize samples at half-pixel centers.
* convolve2d is cross-correlation (the kernel is NOT flipped) and returns
  an output the same size as the input.  Border handling is either
  "replicate" (edge pixels repeated) or "zero".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError, ShapeError, UsageError

RAW8 = "raw8"
UNIT = "unit"

_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class GrayImage:
    """2-D grayscale raster.

    pixels is a float64 (height, width) array.  range_tag declares the
    value range: "raw8" for [0, 255], "unit" for [0, 1].
    """

    pixels: np.ndarray
    range_tag: str

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise ShapeError(f"pixels must be a non-empty 2-D array, got shape {px.shape}")
        if self.range_tag not in (RAW8, UNIT):
            raise UsageError(f"unknown range_tag {self.range_tag!r}")
        hi = 255.0 if self.range_tag == RAW8 else 1.0
        if px.min() < 0.0 or px.max() > hi:
            raise UsageError(
                f"pixel values outside [0, {hi:g}] for range_tag {self.range_tag!r}"
            )
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def load_image(path) -> GrayImage:
    """Decode a PNG or JPEG file into a raw8 GrayImage.

    Grayscale files are taken verbatim; color images are converted with
    the BT.601 luma weights and rounded to the nearest integer.
    """
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise DataError(f"{path}: unsupported format {im.format!r} (PNG/JPEG only)")
            if im.mode in ("L", "I", "I;16", "1"):
                arr = np.asarray(im.convert("L"), dtype=np.float64)
            else:
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
                arr = np.round(rgb @ _LUMA_WEIGHTS)
    except UnidentifiedImageError as exc:
        raise DataError(f"{path}: not a decodable image ({exc})") from exc
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    return GrayImage(arr, RAW8)


def save_gray_png(arr: np.ndarray, path, *, assume_unit: bool = True) -> None:
    """Write a 2-D array as an 8-bit grayscale PNG.

    Unit-ranged confidence values are scaled by 255 and rounded.
    """
    a = np.asarray(arr, dtype=np.float64)
    if assume_unit:
        a = a * 255.0
    a = np.clip(np.round(a), 0, 255).astype(np.uint8)
    Image.fromarray(a, mode="L").save(path, format="PNG")


def resize_bilinear(img: GrayImage, out_h: int, out_w: int) -> GrayImage:
    """Bilinear resize with half-pixel-centered sample coordinates."""
    if out_h < 1 or out_w < 1:
        raise UsageError(f"target size must be positive, got {out_h}x{out_w}")
    src = img.pixels
    h, w = src.shape
    if (out_h, out_w) == (h, w):
        return GrayImage(src.copy(), img.range_tag)

    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)

    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]

    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bot = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    out = top * (1 - wy) + bot * wy
    return GrayImage(out, img.range_tag)


def resize_nearest(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of a 2-D array (used for binary masks)."""
    if out_h < 1 or out_w < 1:
        raise UsageError(f"target size must be positive, got {out_h}x{out_w}")
    a = np.asarray(arr)
    h, w = a.shape
    yi = np.minimum(((np.arange(out_h) + 0.5) * (h / out_h)).astype(int), h - 1)
    xi = np.minimum(((np.arange(out_w) + 0.5) * (w / out_w)).astype(int), w - 1)
    return a[np.ix_(yi, xi)]


def normalize_unit(img: GrayImage) -> GrayImage:
    """Divide raw8 pixels by 255.  Double normalization is rejected."""
    if img.range_tag != RAW8:
        raise UsageError("normalize_unit requires a raw8 image (already unit-ranged?)")
    return GrayImage(img.pixels / 255.0, UNIT)


def convolve2d(arr: np.ndarray, kernel: np.ndarray, border: str = "replicate") -> np.ndarray:
    """Same-size cross-correlation of a 2-D array with an odd-sized kernel."""
    a = np.asarray(arr, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    if a.ndim != 2 or k.ndim != 2:
        raise ShapeError("convolve2d expects 2-D input and kernel")
    if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise UsageError(f"kernel must be odd-sized in both axes, got {k.shape}")
    kh, kw = k.shape
    if border == "replicate":
        p = np.pad(a, ((kh // 2, kh // 2), (kw // 2, kw // 2)), mode="edge")
    elif border == "zero":
        p = np.pad(a, ((kh // 2, kh // 2), (kw // 2, kw // 2)), mode="constant")
    else:
        raise UsageError(f"unknown border mode {border!r}")
    h, w = a.shape
    # positive and negative kernel terms accumulate separately in kernel
    # order so the sign-symmetric gradient operators cancel exactly on
    # constant input (both partial sums round identically)
    pos = np.zeros_like(a)
    neg = np.zeros_like(a)
    for ki in range(kh):
        for kj in range(kw):
            c = k[ki, kj]
            if c > 0.0:
                pos += c * p[ki : ki + h, kj : kj + w]
            elif c < 0.0:
                neg += (-c) * p[ki : ki + h, kj : kj + w]
    return pos - neg
