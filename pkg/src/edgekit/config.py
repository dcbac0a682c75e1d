"""Flat key=value run configuration with flag overrides.

Recognized keys (all optional; unknown keys are rejected):

  seed                 RNG seed for training/sampling        (int, 42)
  epochs               CNN training epochs                   (int, 30)
  batch_size           CNN batch size                        (int, 4)
  lr                   Adam learning rate                    (float, 1e-3)
  checkpoint_interval  epochs between CNN checkpoints        (int, 10)
  n_per_class          SVM pixel samples per class per image (int, 2000)
  lambda               SVM ridge strength                    (float, 1e-4)
  svm_epochs           SVM solver epoch cap                  (int, 200)
  tol                  SVM solver tolerance                  (float, 1e-4)
  max_dist             match tolerance, diagonal fraction    (float, 0.0075)
  grid_size            PR threshold count in [0.01, 0.99]    (int, 33)
  min_component        post-processing component floor       (int, 5)
"""

from __future__ import annotations

from pathlib import Path

from .errors import UsageError

_SCHEMA = {
    "seed": (int, 42),
    "epochs": (int, 30),
    "batch_size": (int, 4),
    "lr": (float, 1e-3),
    "checkpoint_interval": (int, 10),
    "n_per_class": (int, 2000),
    "lambda": (float, 1e-4),
    "svm_epochs": (int, 200),
    "tol": (float, 1e-4),
    "max_dist": (float, 0.0075),
    "grid_size": (int, 33),
    "min_component": (int, 5),
}


def load_config(path=None) -> dict:
    cfg = {k: default for k, (_, default) in _SCHEMA.items()}
    if path is None:
        return cfg
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        typ = _SCHEMA[key][0]
        try:
            cfg[key] = typ(value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return cfg


def apply_overrides(cfg: dict, overrides: dict) -> dict:
    out = dict(cfg)
    for key, value in overrides.items():
        if value is not None:
            out[key] = value
    return out


def write_effective_config(cfg: dict, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={cfg[k]}" for k in sorted(cfg)]
    (out_dir / "effective-config.txt").write_text("\n".join(lines) + "\n")
