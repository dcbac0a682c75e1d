"""Neural-network primitives on float64 numpy arrays: 2-D convolution,
transposed convolution, batch normalization, ReLU, 2x2 max pooling, MSE
loss, and Adam.

Forward/backward pairs are explicit functions; the model container in
model.py chains them.  Convolutions use the cross-correlation convention.
Conv weights are [out_ch, in_ch, kh, kw]; transposed-conv weights are
[in_ch, out_ch, kh, kw], making transposed_conv2d_forward the exact
adjoint of conv2d_forward on the shared weight array.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, UsageError


def _as4d(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4-D [N,C,H,W], got shape {x.shape}")
    return x


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """View [N,C,Ho,Wo,kh,kw] with win[n,c,i,j,ki,kj] = xp[n,c,s*i+ki,s*j+kj]."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d_forward(x, weights, bias, stride: int = 1, padding: int = 0) -> np.ndarray:
    x = _as4d(x, "x")
    w = np.asarray(weights, dtype=np.float64)
    n, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeError(f"input has {cin} channels, weights expect {cin_w}")
    ho, rh = divmod(h + 2 * padding - kh, stride)
    wo, rw = divmod(wd + 2 * padding - kw, stride)
    ho, wo = ho + 1, wo + 1
    if rh or rw or ho < 1 or wo < 1:
        raise ShapeError(
            f"conv output size not integral/positive for input {h}x{wd}, "
            f"kernel {kh}x{kw}, stride {stride}, padding {padding}"
        )
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _windows(xp, kh, kw, stride)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_backward(grad_out, x, weights, stride: int = 1, padding: int = 0):
    """Gradients of conv2d_forward wrt input, weights, and bias."""
    x = _as4d(x, "x")
    g = _as4d(grad_out, "grad_out")
    w = np.asarray(weights, dtype=np.float64)
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    _, _, ho, wo = g.shape
    if g.shape[0] != n or g.shape[1] != cout:
        raise ShapeError(f"grad_out shape {g.shape} inconsistent with forward pass")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _windows(xp, kh, kw, stride)
    grad_w = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
    # grad_cols[n,i,j,ci,ki,kj], scattered back with overlap addition
    grad_cols = np.tensordot(g, w, axes=([1], [0]))
    grad_xp = np.zeros_like(xp)
    for ki in range(kh):
        for kj in range(kw):
            grad_xp[:, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += (
                grad_cols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
            )
    grad_b = g.sum(axis=(0, 2, 3))
    if padding:
        grad_x = grad_xp[:, :, padding:-padding, padding:-padding]
    else:
        grad_x = grad_xp
    return grad_x, grad_w, grad_b


def transposed_conv2d_forward(x, weights, bias, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Adjoint of conv2d_forward.  weights are [in_ch, out_ch, kh, kw];
    output spatial size is (H-1)*stride - 2*padding + kh."""
    x = _as4d(x, "x")
    w = np.asarray(weights, dtype=np.float64)
    n, cin, h, wd = x.shape
    cin_w, cout, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeError(f"input has {cin} channels, weights expect {cin_w}")
    ho = (h - 1) * stride - 2 * padding + kh
    wo = (wd - 1) * stride - 2 * padding + kw
    if ho < 1 or wo < 1:
        raise ShapeError(f"transposed conv output size {ho}x{wo} not positive")
    contrib = np.tensordot(x, w, axes=([1], [0]))  # [n,h,w,cout,kh,kw]
    out_p = np.zeros((n, cout, ho + 2 * padding, wo + 2 * padding))
    for ki in range(kh):
        for kj in range(kw):
            out_p[:, :, ki : ki + stride * h : stride, kj : kj + stride * wd : stride] += (
                contrib[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
            )
    out = out_p[:, :, padding : padding + ho, padding : padding + wo]
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[None, :, None, None]
    return np.ascontiguousarray(out)


def transposed_conv2d_backward(grad_out, x, weights, stride: int = 1, padding: int = 0):
    x = _as4d(x, "x")
    g = _as4d(grad_out, "grad_out")
    w = np.asarray(weights, dtype=np.float64)
    n, cin, h, wd = x.shape
    _, cout, kh, kw = w.shape
    gp = np.pad(g, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _windows(gp, kh, kw, stride)  # [n,cout,h,w,kh,kw]
    grad_w = np.tensordot(x, cols, axes=([0, 2, 3], [0, 2, 3]))
    grad_x = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    grad_b = g.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def batchnorm_forward(x, gamma, beta, running_mean, running_var, eps, momentum, train: bool):
    """Per-channel batch normalization over (N, H, W).

    Returns (y, cache, new_running_mean, new_running_var).  Batch variance
    is the biased estimator; running stats are updated with
    new = (1 - momentum) * old + momentum * batch.
    """
    x = _as4d(x, "x")
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        new_rm = (1.0 - momentum) * np.asarray(running_mean) + momentum * mean
        new_rv = (1.0 - momentum) * np.asarray(running_var) + momentum * var
    else:
        mean = np.asarray(running_mean, dtype=np.float64)
        var = np.asarray(running_var, dtype=np.float64)
        new_rm = np.asarray(running_mean, dtype=np.float64)
        new_rv = np.asarray(running_var, dtype=np.float64)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = (xhat, inv_std, gamma, train)
    return y, cache, new_rm, new_rv


def batchnorm_backward(grad_out, cache):
    xhat, inv_std, gamma, train = cache
    g = _as4d(grad_out, "grad_out")
    grad_gamma = (g * xhat).sum(axis=(0, 2, 3))
    grad_beta = g.sum(axis=(0, 2, 3))
    gi = g * gamma[None, :, None, None]
    if train:
        m = g.shape[0] * g.shape[2] * g.shape[3]
        grad_x = (
            inv_std[None, :, None, None]
            * (
                gi
                - gi.mean(axis=(0, 2, 3))[None, :, None, None]
                - xhat * (gi * xhat).mean(axis=(0, 2, 3))[None, :, None, None]
            )
        )
        del m
    else:
        grad_x = gi * inv_std[None, :, None, None]
    return grad_x, grad_gamma, grad_beta


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(grad_out, x) -> np.ndarray:
    return np.where(np.asarray(x) > 0.0, np.asarray(grad_out, dtype=np.float64), 0.0)


def maxpool2d(x):
    """2x2 max pooling with stride 2.  Ties pick the first window element
    in row-major order.  Returns (out, argmax) where argmax holds the
    0..3 row-major index of the winner per window."""
    x = _as4d(x, "x")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d requires even spatial dims, got {h}x{w}")
    win = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    argmax = win.argmax(axis=-1)
    out = np.take_along_axis(win, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def maxpool2d_backward(grad_out, argmax, in_shape):
    g = _as4d(grad_out, "grad_out")
    n, c, h, w = in_shape
    win = np.zeros((n, c, h // 2, w // 2, 4))
    np.put_along_axis(win, argmax[..., None], g[..., None], axis=-1)
    return (
        win.reshape(n, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h, w)
    )


def mse_loss(pred, target):
    """Mean squared error over all elements; returns (loss, grad_pred)."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"pred shape {p.shape} != target shape {t.shape}")
    diff = p - t
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


class Adam:
    """Adam optimizer over a list of parameter arrays (updated in place)."""

    def __init__(self, params: list[np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise UsageError(f"learning rate must be non-negative, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ShapeError("gradient list length does not match parameter list")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
