"""Independent reference implementations used only by the tests.

Each oracle is deliberately written in a different style (explicit loops,
scipy.signal, scipy.sparse) from the library code it checks.
"""

import numpy as np
from scipy import signal
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching


def conv2d_loops(x, w, b, stride=1, padding=0):
    """Six-deep nested-loop cross-correlation."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((n, cout, ho, wo))
    for ni in range(n):
        for co in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0 if b is None else b[co]
                    for ci in range(cin):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc += w[co, ci, ki, kj] * xp[ni, ci, stride * i + ki, stride * j + kj]
                    out[ni, co, i, j] = acc
    return out


def tconv2d_signal(x, w, b, stride=1, padding=0):
    """Transposed convolution via zero-stuffing + scipy.signal full
    convolution (true convolution is the adjoint of correlation)."""
    n, cin, h, wd = x.shape
    _, cout, kh, kw = w.shape
    ho = (h - 1) * stride - 2 * padding + kh
    wo = (wd - 1) * stride - 2 * padding + kw
    out = np.zeros((n, cout, ho, wo))
    for ni in range(n):
        for co in range(cout):
            acc = np.zeros((ho, wo))
            for ci in range(cin):
                stuffed = np.zeros(((h - 1) * stride + 1, (wd - 1) * stride + 1))
                stuffed[::stride, ::stride] = x[ni, ci]
                full = signal.convolve2d(stuffed, w[ci, co], mode="full")
                acc += full[padding : padding + ho, padding : padding + wo]
            out[ni, co] = acc + (0.0 if b is None else b[co])
    return out


def maxpool2d_loops(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // 2, w // 2))
    arg = np.zeros((n, c, h // 2, w // 2), dtype=int)
    for ni in range(n):
        for ci in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    win = x[ni, ci, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
                    flat = win.reshape(-1)  # row-major: first max wins
                    arg[ni, ci, i, j] = int(np.argmax(flat))
                    out[ni, ci, i, j] = flat[arg[ni, ci, i, j]]
    return out, arg


def bilinear_loops(src, out_h, out_w):
    h, w = src.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        for j in range(out_w):
            y = min(max((i + 0.5) * h / out_h - 0.5, 0.0), h - 1.0)
            x = min(max((j + 0.5) * w / out_w - 0.5, 0.0), w - 1.0)
            y0, x0 = int(np.floor(y)), int(np.floor(x))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            dy, dx = y - y0, x - x0
            out[i, j] = (
                src[y0, x0] * (1 - dy) * (1 - dx)
                + src[y0, x1] * (1 - dy) * dx
                + src[y1, x0] * dy * (1 - dx)
                + src[y1, x1] * dy * dx
            )
    return out


def convolve2d_loops(arr, kernel, border):
    h, w = arr.shape
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    out = np.zeros_like(arr, dtype=float)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for ki in range(kh):
                for kj in range(kw):
                    y, x = i + ki - ry, j + kj - rx
                    if border == "replicate":
                        v = arr[min(max(y, 0), h - 1), min(max(x, 0), w - 1)]
                    else:
                        v = arr[y, x] if 0 <= y < h and 0 <= x < w else 0.0
                    acc += kernel[ki, kj] * v
            out[i, j] = acc
    return out


def optimal_matching_tp(pred_bin, gt_bin, max_dist):
    """Maximum bipartite matching size under the distance tolerance."""
    h, w = pred_bin.shape
    radius = max_dist * float(np.hypot(h, w))
    p_pts = np.argwhere(pred_bin > 0)
    g_pts = np.argwhere(gt_bin > 0)
    if len(p_pts) == 0 or len(g_pts) == 0:
        return 0
    rows, cols = [], []
    for ip, p in enumerate(p_pts):
        for ig, g in enumerate(g_pts):
            if np.hypot(*(p - g)) <= radius + 1e-12:
                rows.append(ip)
                cols.append(ig)
    if not rows:
        return 0
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(p_pts), len(g_pts)))
    match = maximum_bipartite_matching(graph, perm_type="column")
    return int((match >= 0).sum())


def batchnorm_twopass(x, gamma, beta, eps):
    """Direct per-channel two-pass mean/variance normalization."""
    out = np.zeros_like(x)
    for c in range(x.shape[1]):
        vals = x[:, c]
        mu = vals.mean()
        var = ((vals - mu) ** 2).mean()
        out[:, c] = gamma[c] * (vals - mu) / np.sqrt(var + eps) + beta[c]
    return out


def finite_diff_grad(f, x, step=1e-4):
    """Central finite differences of scalar f at array x."""
    g = np.zeros_like(x, dtype=float)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        fp = f()
        x[idx] = orig - step
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * step)
        it.iternext()
    return g


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
