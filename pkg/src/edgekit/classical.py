"""Classical baseline edge detectors: Sobel, Prewitt, Roberts, LoG,
zero-crossing, and Canny.

All detectors take a unit-ranged GrayImage and return an EdgeMap of the
same size with confidences in [0, 1].  Sobel/Prewitt/Roberts divide the
gradient magnitude by its theoretical maximum over unit-ranged inputs
(sqrt(2) times the positive-coefficient sum of one kernel), so the scale
is input-independent.  LoG/zerocross normalize the per-image zero-crossing
strength by its maximum.  Canny is inherently thresholded and returns a
binary {0, 1} map at its single operating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ShapeError, UsageError
from .image import UNIT, GrayImage, convolve2d

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T
PREWITT_X = np.array([[-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0]])
PREWITT_Y = PREWITT_X.T
LAPLACIAN_3X3 = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class EdgeMap:
    """Per-pixel edge confidence raster, values in [0, 1]."""

    confidence: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.confidence, dtype=np.float64)
        if c.ndim != 2 or c.size == 0:
            raise ShapeError(f"confidence must be a non-empty 2-D array, got {c.shape}")
        if c.min() < 0.0 or c.max() > 1.0:
            raise UsageError("edge confidences must lie in [0, 1]")
        object.__setattr__(self, "confidence", c)

    @property
    def height(self) -> int:
        return self.confidence.shape[0]

    @property
    def width(self) -> int:
        return self.confidence.shape[1]


def _require_unit(img: GrayImage) -> np.ndarray:
    if img.range_tag != UNIT:
        raise UsageError("detector requires a unit-ranged image (call normalize_unit first)")
    return img.pixels


def _gradient_pair(px: np.ndarray, kx: np.ndarray, ky: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return convolve2d(px, kx, "replicate"), convolve2d(px, ky, "replicate")


def sobel(img: GrayImage) -> EdgeMap:
    px = _require_unit(img)
    gx, gy = _gradient_pair(px, SOBEL_X, SOBEL_Y)
    # max |Gx| = max |Gy| = 4 on unit inputs -> magnitude <= 4*sqrt(2)
    return EdgeMap(np.hypot(gx, gy) / (4.0 * np.sqrt(2.0)))


def prewitt(img: GrayImage) -> EdgeMap:
    px = _require_unit(img)
    gx, gy = _gradient_pair(px, PREWITT_X, PREWITT_Y)
    return EdgeMap(np.hypot(gx, gy) / (3.0 * np.sqrt(2.0)))


def roberts(img: GrayImage) -> EdgeMap:
    """Roberts cross: 2x2 diagonal differences anchored at the top-left
    pixel, with replicate padding on the bottom/right edges."""
    px = _require_unit(img)
    p = np.pad(px, ((0, 1), (0, 1)), mode="edge")
    g1 = p[:-1, :-1] - p[1:, 1:]
    g2 = p[:-1, 1:] - p[1:, :-1]
    return EdgeMap(np.hypot(g1, g2) / np.sqrt(2.0))


_SIGN_EPS = 1e-12  # responses below this are treated as zero-signed


def _zero_crossing_strength(resp: np.ndarray) -> np.ndarray:
    """Max |a - b| over the four opposing-neighbor pairs whose responses
    have strictly opposite signs; 0 where no pair changes sign."""
    resp = np.where(np.abs(resp) < _SIGN_EPS, 0.0, resp)
    p = np.pad(resp, 1, mode="edge")
    pairs = [
        (p[1:-1, :-2], p[1:-1, 2:]),    # left / right
        (p[:-2, 1:-1], p[2:, 1:-1]),    # up / down
        (p[:-2, :-2], p[2:, 2:]),       # up-left / down-right
        (p[:-2, 2:], p[2:, :-2]),       # up-right / down-left
    ]
    strength = np.zeros_like(resp)
    for a, b in pairs:
        crossing = a * b < 0
        diff = np.abs(a - b)
        strength = np.where(crossing, np.maximum(strength, diff), strength)
    return strength


def _normalize_max(strength: np.ndarray) -> EdgeMap:
    m = strength.max()
    return EdgeMap(strength / m if m > 0 else strength)


def log_kernel(sigma: float) -> np.ndarray:
    """Laplacian-of-Gaussian kernel, mean-subtracted so it sums to zero."""
    if sigma <= 0:
        raise UsageError(f"sigma must be positive, got {sigma}")
    half = max(1, int(np.ceil(3.0 * sigma)))
    y, x = np.mgrid[-half : half + 1, -half : half + 1]
    r2 = x * x + y * y
    k = (r2 - 2.0 * sigma**2) / sigma**4 * np.exp(-r2 / (2.0 * sigma**2))
    return k - k.mean()


def log_detector(img: GrayImage, sigma: float = 2.0) -> EdgeMap:
    px = _require_unit(img)
    resp = convolve2d(px, log_kernel(sigma), "replicate")
    return _normalize_max(_zero_crossing_strength(resp))


def zerocross(img: GrayImage, kernel: np.ndarray | None = None) -> EdgeMap:
    px = _require_unit(img)
    k = LAPLACIAN_3X3 if kernel is None else np.asarray(kernel, dtype=np.float64)
    resp = convolve2d(px, k, "replicate")
    return _normalize_max(_zero_crossing_strength(resp))


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    half = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma**2))
    return k / k.sum()


# Neighbor offsets per quantized gradient direction bin (0/45/90/135 deg).
# "forward" is the second offset; the NMS tie rule keeps a pixel when its
# magnitude is >= the backward neighbor and strictly > the forward one, so
# runs of equal magnitude keep exactly one pixel.
_NMS_OFFSETS = {
    0: ((0, -1), (0, 1)),
    1: ((-1, 1), (1, -1)),
    2: ((-1, 0), (1, 0)),
    3: ((-1, -1), (1, 1)),
}


def canny(
    img: GrayImage,
    sigma: float = 1.4,
    low_frac: float = 0.4,
    high_quantile: float = 0.8,
) -> EdgeMap:
    """Gaussian smoothing, Sobel gradients, 4-direction non-maximum
    suppression, and two-threshold hysteresis.  Output is binary."""
    px = _require_unit(img)
    if not (0.0 < low_frac < 1.0):
        raise UsageError(f"low_frac must be in (0, 1), got {low_frac}")
    if not (0.0 < high_quantile < 1.0):
        raise UsageError(f"high_quantile must be in (0, 1), got {high_quantile}")
    if sigma <= 0:
        raise UsageError(f"sigma must be positive, got {sigma}")

    g = gaussian_kernel1d(sigma)
    smooth = convolve2d(convolve2d(px, g[None, :], "replicate"), g[:, None], "replicate")
    gx = convolve2d(smooth, SOBEL_X, "replicate")
    gy = convolve2d(smooth, SOBEL_Y, "replicate")
    mag = np.hypot(gx, gy)
    if mag.max() == 0.0:
        return EdgeMap(np.zeros_like(mag))

    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.floor((angle + 22.5) / 45.0).astype(int) % 4

    padded = np.pad(mag, 1, mode="constant")
    kept = np.zeros_like(mag)
    for b, ((bi, bj), (fi, fj)) in _NMS_OFFSETS.items():
        back = padded[1 + bi : 1 + bi + mag.shape[0], 1 + bj : 1 + bj + mag.shape[1]]
        fwd = padded[1 + fi : 1 + fi + mag.shape[0], 1 + fj : 1 + fj + mag.shape[1]]
        sel = (bins == b) & (mag >= back) & (mag > fwd)
        kept = np.where(sel, mag, kept)

    vals = kept[kept > 0]
    if vals.size == 0:
        return EdgeMap(np.zeros_like(mag))
    high = np.quantile(vals, high_quantile)
    low = low_frac * high

    weak = kept >= low
    strong = kept >= high
    labels, n = ndimage.label(weak, structure=EIGHT_CONNECTED)
    if n == 0:
        return EdgeMap(np.zeros_like(mag))
    keep_ids = np.unique(labels[strong])
    keep_ids = keep_ids[keep_ids > 0]
    out = np.isin(labels, keep_ids).astype(np.float64)
    return EdgeMap(out)


DETECTORS = {
    "sobel": sobel,
    "prewitt": prewitt,
    "roberts": roberts,
    "log": log_detector,
    "zerocross": zerocross,
    "canny": canny,
}
