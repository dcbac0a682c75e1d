"""Encoder-decoder CNN: construction, training, checkpointing, and the
feature tap feeding the SVM stage.

Architecture (input [N,1,256,256]):

  encoder: conv(1->16,3x3,p1)+BN+ReLU -> conv(16->16,3x3,p1)+BN+ReLU
           -> maxpool2 -> conv(16->32,3x3,p1)+BN+ReLU -> maxpool2
           -> conv(32->64,3x3,p1)+BN+ReLU
  decoder: tconv(64->32,4x4,s2,p1)+BN+ReLU -> tconv(32->16,4x4,s2,p1)+BN+ReLU
           -> conv(16->16,3x3,p1)+BN+ReLU      <- feature tap, [N,16,256,256]
  head:    conv(16->1,1x1) -> sigmoid          -> [N,1,256,256] in (0,1)
"""

from __future__ import annotations

import base64
import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import layers
from .errors import DataError, ShapeError, UsageError
from .image import UNIT, GrayImage

FEATURE_CHANNELS = 16
INPUT_SIZE = 256
CHECKPOINT_VERSION = 1


def _encode_array(a: np.ndarray) -> dict:
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii"),
    }


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(d["shape"])


class Layer:
    """Base layer: forward caches what backward needs; params/grads are
    parallel lists of arrays."""

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def config(self) -> dict:
        return {}

    def state(self) -> dict:
        return {}

    def load_state(self, state: dict) -> None:
        pass


class Conv2d(Layer):
    def __init__(self, in_ch, out_ch, k, stride=1, padding=0, rng=None):
        self.stride, self.padding = stride, padding
        limit = np.sqrt(6.0 / (in_ch * k * k))
        rng = rng or np.random.default_rng(0)
        self.w = rng.uniform(-limit, limit, size=(out_ch, in_ch, k, k))
        self.b = np.zeros(out_ch)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._x = None

    def forward(self, x, train):
        self._x = x
        return layers.conv2d_forward(x, self.w, self.b, self.stride, self.padding)

    def backward(self, grad_out):
        gx, self.gw[...], self.gb[...] = layers.conv2d_backward(
            grad_out, self._x, self.w, self.stride, self.padding
        )
        return gx

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.gw, self.gb]

    def config(self):
        return {
            "in_ch": self.w.shape[1], "out_ch": self.w.shape[0],
            "k": self.w.shape[2], "stride": self.stride, "padding": self.padding,
        }

    def state(self):
        return {"w": _encode_array(self.w), "b": _encode_array(self.b)}

    def load_state(self, state):
        self.w[...] = _decode_array(state["w"])
        self.b[...] = _decode_array(state["b"])


class ConvTranspose2d(Layer):
    def __init__(self, in_ch, out_ch, k, stride=1, padding=0, rng=None):
        self.stride, self.padding = stride, padding
        limit = np.sqrt(6.0 / (in_ch * k * k))
        rng = rng or np.random.default_rng(0)
        self.w = rng.uniform(-limit, limit, size=(in_ch, out_ch, k, k))
        self.b = np.zeros(out_ch)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._x = None

    def forward(self, x, train):
        self._x = x
        return layers.transposed_conv2d_forward(x, self.w, self.b, self.stride, self.padding)

    def backward(self, grad_out):
        gx, self.gw[...], self.gb[...] = layers.transposed_conv2d_backward(
            grad_out, self._x, self.w, self.stride, self.padding
        )
        return gx

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.gw, self.gb]

    def config(self):
        return {
            "in_ch": self.w.shape[0], "out_ch": self.w.shape[1],
            "k": self.w.shape[2], "stride": self.stride, "padding": self.padding,
        }

    def state(self):
        return {"w": _encode_array(self.w), "b": _encode_array(self.b)}

    def load_state(self, state):
        self.w[...] = _decode_array(state["w"])
        self.b[...] = _decode_array(state["b"])


class BatchNorm2d(Layer):
    def __init__(self, channels, eps=1e-5, momentum=0.1):
        self.eps, self.momentum = eps, momentum
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.zeros(channels)
        self.ggamma = np.zeros_like(self.gamma)
        self.gbeta = np.zeros_like(self.beta)
        self._cache = None

    def forward(self, x, train):
        y, self._cache, self.running_mean, self.running_var = layers.batchnorm_forward(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            self.eps, self.momentum, train,
        )
        return y

    def backward(self, grad_out):
        gx, self.ggamma[...], self.gbeta[...] = layers.batchnorm_backward(grad_out, self._cache)
        return gx

    def params(self):
        return [self.gamma, self.beta]

    def grads(self):
        return [self.ggamma, self.gbeta]

    def config(self):
        return {"channels": len(self.gamma), "eps": self.eps, "momentum": self.momentum}

    def state(self):
        return {
            "gamma": _encode_array(self.gamma), "beta": _encode_array(self.beta),
            "running_mean": _encode_array(self.running_mean),
            "running_var": _encode_array(self.running_var),
        }

    def load_state(self, state):
        self.gamma[...] = _decode_array(state["gamma"])
        self.beta[...] = _decode_array(state["beta"])
        self.running_mean = _decode_array(state["running_mean"])
        self.running_var = _decode_array(state["running_var"])


class ReLU(Layer):
    def forward(self, x, train):
        self._x = x
        return layers.relu(x)

    def backward(self, grad_out):
        return layers.relu_backward(grad_out, self._x)


class MaxPool2d(Layer):
    def forward(self, x, train):
        self._shape = x.shape
        out, self._argmax = layers.maxpool2d(x)
        return out

    def backward(self, grad_out):
        return layers.maxpool2d_backward(grad_out, self._argmax, self._shape)


class Sigmoid(Layer):
    def forward(self, x, train):
        # stable logistic: never exponentiates a positive argument
        pos = x >= 0
        e = np.exp(np.where(pos, -x, x))
        self._y = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e))
        return self._y

    def backward(self, grad_out):
        return grad_out * self._y * (1.0 - self._y)


_LAYER_TYPES = {cls.__name__: cls for cls in (
    Conv2d, ConvTranspose2d, BatchNorm2d, ReLU, MaxPool2d, Sigmoid,
)}


class CnnModel:
    """Fixed sequential layer stack with a feature tap for the SVM stage."""

    def __init__(self, stack: list[Layer], feature_tap: int):
        self.layers = stack
        self.feature_tap = feature_tap

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def forward_to_tap(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers[: self.feature_tap + 1]:
            x = layer.forward(x, train)
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]


def build_model(seed: int = 42) -> CnnModel:
    rng = np.random.default_rng(seed)

    def block(conv):
        ch = conv.config()["out_ch"]
        return [conv, BatchNorm2d(ch), ReLU()]

    stack: list[Layer] = []
    stack += block(Conv2d(1, 16, 3, padding=1, rng=rng))
    stack += block(Conv2d(16, 16, 3, padding=1, rng=rng))
    stack.append(MaxPool2d())
    stack += block(Conv2d(16, 32, 3, padding=1, rng=rng))
    stack.append(MaxPool2d())
    stack += block(Conv2d(32, 64, 3, padding=1, rng=rng))
    stack += block(ConvTranspose2d(64, 32, 4, stride=2, padding=1, rng=rng))
    stack += block(ConvTranspose2d(32, 16, 4, stride=2, padding=1, rng=rng))
    stack += block(Conv2d(16, 16, 3, padding=1, rng=rng))
    feature_tap = len(stack) - 1  # ReLU output of the last decoder block
    stack.append(Conv2d(16, 1, 1, rng=rng))
    stack.append(Sigmoid())
    return CnnModel(stack, feature_tap)


def save_checkpoint(model: CnnModel, path) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "feature_tap": model.feature_tap,
        "layers": [
            {"type": type(l).__name__, "config": l.config(), "state": l.state()}
            for l in model.layers
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path) -> CnnModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read checkpoint ({exc})") from exc
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {doc.get('format_version')}")
    stack = []
    for entry in doc["layers"]:
        cls = _LAYER_TYPES.get(entry["type"])
        if cls is None:
            raise DataError(f"{path}: unknown layer type {entry['type']!r}")
        layer = cls(**entry["config"]) if entry["config"] else cls()
        layer.load_state(entry["state"])
        stack.append(layer)
    return CnnModel(stack, doc["feature_tap"])


def _check_input_image(img: GrayImage) -> np.ndarray:
    if img.range_tag != UNIT:
        raise UsageError("model input must be unit-ranged (call normalize_unit)")
    if img.pixels.shape != (INPUT_SIZE, INPUT_SIZE):
        raise ShapeError(f"model input must be {INPUT_SIZE}x{INPUT_SIZE}, got {img.pixels.shape}")
    return img.pixels[None, None]


def forward_edge(model: CnnModel, img: GrayImage) -> np.ndarray:
    """Run the full stack in inference mode; returns the [256,256] head map."""
    return model.forward(_check_input_image(img), train=False)[0, 0]


def extract_features(model: CnnModel, img: GrayImage) -> np.ndarray:
    """Feature-tap activations [16, 256, 256] in inference mode."""
    return model.forward_to_tap(_check_input_image(img), train=False)[0]


def flatten_features(fmap: np.ndarray) -> np.ndarray:
    """[C, 256, 256] -> [65536, C]; row r is pixel (r // 256, r % 256)."""
    fmap = np.asarray(fmap)
    if fmap.ndim != 3 or fmap.shape[1:] != (INPUT_SIZE, INPUT_SIZE):
        raise ShapeError(f"feature map must be [C,{INPUT_SIZE},{INPUT_SIZE}], got {fmap.shape}")
    return fmap.reshape(fmap.shape[0], INPUT_SIZE * INPUT_SIZE).T


def unflatten_features(fmat: np.ndarray, channels: int) -> np.ndarray:
    return np.asarray(fmat).T.reshape(channels, INPUT_SIZE, INPUT_SIZE)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 4
    lr: float = 1e-3
    seed: int = 42
    checkpoint_interval: int = 10  # epochs between checkpoints
    log_path: str | None = None
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.checkpoint_interval < 1:
            raise UsageError("epochs, batch_size, and checkpoint_interval must be positive")
        if self.lr < 0:
            raise UsageError("learning rate must be non-negative")


def train_cnn(model: CnnModel, dataset, cfg: TrainConfig):
    """Supervised MSE training.

    dataset is a sequence of (input_pixels [256,256] unit, target [256,256]
    in [0,1]) pairs.  Returns (model, log) where log is a list of
    (iteration, loss, rmse) rows; rmse = sqrt(loss) by construction.
    """
    samples = list(dataset)
    if not samples:
        raise UsageError("training dataset is empty")
    xs = np.stack([np.asarray(s[0], dtype=np.float64) for s in samples])[:, None]
    ts = np.stack([np.asarray(s[1], dtype=np.float64) for s in samples])[:, None]

    rng = np.random.default_rng(cfg.seed)
    opt = layers.Adam(model.params(), lr=cfg.lr)
    log: list[tuple[int, float, float]] = []
    iteration = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(samples))
        for start in range(0, len(samples), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            pred = model.forward(xs[idx], train=True)
            loss, grad = layers.mse_loss(pred, ts[idx])
            model.backward(grad)
            opt.step(model.grads())
            iteration += 1
            log.append((iteration, loss, float(np.sqrt(loss))))
        if cfg.checkpoint_dir and (epoch + 1) % cfg.checkpoint_interval == 0:
            ckpt = Path(cfg.checkpoint_dir) / f"cnn-epoch{epoch + 1:04d}.json"
            save_checkpoint(model, ckpt)
    if cfg.log_path:
        write_train_log(log, cfg.log_path)
    return model, log


def write_train_log(log, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "rmse"])
        for it, loss, rmse in log:
            writer.writerow([it, f"{loss:.17g}", f"{rmse:.17g}"])
