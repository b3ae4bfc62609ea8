"""Versioned JSON model files."""
from __future__ import annotations

import json
import math

import numpy as np

from ..datagen import Normalization
from .models import Network, PerMeasureModel, build_model
from .rbf import RbfModel

FORMAT_VERSION = "msfnet-model/1"


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def _network_weights(model):
    return {f"{k}.{name}": layer.params[name].reshape(-1).tolist()
            for k, layer in enumerate(model.layers) for name in sorted(layer.params)}


def _load_network_weights(model, w, prefix=""):
    for k, layer in enumerate(model.layers):
        for name in layer.params:
            arr = np.array(w[f"{prefix}{k}.{name}"], dtype=float)
            layer.params[name] = arr.reshape(layer.params[name].shape)


def model_to_dict(model) -> dict:
    norm = model.normalization.to_dict() if getattr(model, "normalization", None) is not None else None
    if isinstance(model, RbfModel):
        weights = {
            "centers": model.centers.reshape(-1).tolist(),
            "weights": model.weights.reshape(-1).tolist(),
            "bias": model.bias.tolist(),
            "input_mean": model.input_mean.tolist(),
            "input_scale": model.input_scale.tolist(),
        }
    elif isinstance(model, Network):
        weights = _network_weights(model)
    elif isinstance(model, PerMeasureModel):
        weights = {f"{i}.{key}": v for i, m in enumerate(model.members) for key, v in _network_weights(m).items()}
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {
        "format_version": FORMAT_VERSION,
        "arch": _jsonable(model.arch),
        "normalization": norm,
        "weights": weights,
        "train_meta": _jsonable(model.train_meta),
    }


def model_from_dict(d: dict):
    if not isinstance(d, dict) or "format_version" not in d:
        raise ModelFormatError("not a model document")
    if d["format_version"] != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format {d['format_version']!r}, expected {FORMAT_VERSION!r}")
    try:
        arch = d["arch"]
        norm = Normalization.from_dict(d["normalization"]) if d.get("normalization") else None
        w = d["weights"]
        if arch["kind"] == "rbf":
            n_in, n_out, k = arch["n_in"], arch["n_out"], arch["n_centers"]
            model = RbfModel(np.array(w["centers"], dtype=float).reshape(k, n_in), arch["spread"],
                             np.array(w["weights"], dtype=float).reshape(k, n_out), w["bias"],
                             w["input_mean"], w["input_scale"], normalization=norm)
        else:
            model = build_model(arch, norm)
            if isinstance(model, PerMeasureModel):
                for i, m in enumerate(model.members):
                    _load_network_weights(m, w, f"{i}.")
            else:
                _load_network_weights(model, w)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"corrupt model document: {exc}") from None
    model.train_meta = d.get("train_meta", {})
    return model


def save_model(model, path) -> None:
    text = json.dumps(model_to_dict(model), separators=(",", ":"))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
    return model_from_dict(d)
