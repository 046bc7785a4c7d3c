"""Versioned JSON container for fitted surrogates and hypotheses.

Arrays are stored as nested lists of ``repr``-exact floats, so a
round trip reproduces every coefficient bit for bit.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .hypothesis import HYPOTHESIS_KINDS, Hypothesis
from .surrogates import BernsteinModel, KernelModel, MlpSurrogate

FORMAT = "iceo-model"
VERSION = 1


class FormatError(ValueError):
    pass


def _arr(a):
    a = np.asarray(a)
    return {"dtype": str(a.dtype), "shape": list(a.shape), "data": a.ravel().tolist()}


def _unarr(d):
    return np.asarray(d["data"], dtype=d["dtype"]).reshape(d["shape"])


def _clean_meta(meta: dict) -> dict:
    out = {}
    for k, v in meta.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, np.generic):
            v = v.item()
        elif isinstance(v, (list, tuple)):
            v = [x.item() if isinstance(x, np.generic) else x for x in v]
        out[k] = v
    return out


def to_dict(model) -> dict:
    if isinstance(model, BernsteinModel):
        body = {"kind": "bernstein", "order": model.order, "alphas": _arr(model.alphas),
                "coefficients": _arr(model.coefficients)}
    elif isinstance(model, KernelModel):
        body = {"kind": "krr", "degree": model.degree, "offset": model.offset, "ridge": model.ridge,
                "support": _arr(model.support), "dual_coef": _arr(model.dual_coef)}
    elif isinstance(model, MlpSurrogate):
        body = {"kind": "mlp", "params": {k: _arr(v) for k, v in model.params.items()}}
    elif isinstance(model, Hypothesis):
        body = {"kind": model.kind, "params": {k: _arr(v) for k, v in model.params.items()}}
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    meta = getattr(model, "meta", None) or {}
    return {"format": FORMAT, "version": VERSION, **body, "meta": _clean_meta(meta)}


def from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise FormatError("not an iceo model container")
    if d.get("version") != VERSION:
        raise FormatError(f"unsupported container version {d.get('version')}")
    kind, meta = d["kind"], dict(d.get("meta", {}))
    if kind == "bernstein":
        return BernsteinModel(d["order"], _unarr(d["alphas"]), _unarr(d["coefficients"]), meta)
    if kind == "krr":
        return KernelModel(d["degree"], d["offset"], d["ridge"], _unarr(d["support"]),
                           _unarr(d["dual_coef"]), meta)
    if kind == "mlp":
        return MlpSurrogate({k: _unarr(v) for k, v in d["params"].items()}, meta)
    if kind in HYPOTHESIS_KINDS:
        return HYPOTHESIS_KINDS[kind]({k: _unarr(v) for k, v in d["params"].items()})
    raise FormatError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(to_dict(model), sort_keys=True))


def load_model(path):
    return from_dict(json.loads(Path(path).read_text()))
