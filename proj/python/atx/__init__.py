"""Anomaly Transformer: training, association-based scoring and evaluation."""

import json

import numpy as np

from . import _atx
from ._atx import (
    CompatibilityError,
    ConfigError,
    IoError,
    Model,
    NumericError,
    point_adjust,
    prf,
    roc_auc,
    select_threshold,
)

__all__ = [
    "CompatibilityError",
    "ConfigError",
    "IoError",
    "Model",
    "NumericError",
    "desk_config",
    "desk_spec",
    "evaluate",
    "generate",
    "load",
    "point_adjust",
    "prf",
    "roc_auc",
    "select_threshold",
    "train",
]


def desk_spec(seed=0):
    return json.loads(_atx.desk_spec(seed))


def desk_config():
    return json.loads(_atx.desk_config())


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def generate(spec=None, seed=0):
    """Synthetic train/val/test split; spec is a dict, missing keys take the desk defaults."""
    return _atx.generate(json.dumps(_merge(desk_spec(seed), spec or {})))


def train(train_series, val_series, config=None):
    """Fit a model. config is a partial RunConfig dict merged over desk_config()."""
    cfg = _merge(desk_config(), config or {})
    return _atx.train(np.asarray(train_series, dtype=float), np.asarray(val_series, dtype=float), json.dumps(cfg))


def load(checkpoint):
    """Model from a checkpoint dict, JSON string or path."""
    if isinstance(checkpoint, dict):
        return _atx.load(json.dumps(checkpoint))
    text = str(checkpoint)
    if not text.lstrip().startswith("{"):
        with open(text) as f:
            text = f.read()
    return _atx.load(text)


def evaluate(test_scores, truth, val_scores, config=None, adjacent_weight=None):
    cfg = _merge(desk_config(), config or {})
    return json.loads(
        _atx.evaluate(
            np.asarray(test_scores, dtype=float),
            np.asarray(truth, dtype=np.uint8),
            np.asarray(val_scores, dtype=float),
            json.dumps(cfg),
            None if adjacent_weight is None else np.asarray(adjacent_weight, dtype=float),
        )
    )
