"""Versioned JSON containers for fitted models.

Floats are written with ``repr`` precision, so a save/load round trip is
exact. MMF weights are stored as the entries that differ from 1.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import Variant
from .errors import DataFormatError
from .mf import MfModel
from .mmf import MmfModel

FORMAT = "mmfrec-model"
VERSION = 1


def _deviations(a: np.ndarray):
    rows, cols = np.nonzero(a != 1.0)
    return [[int(r), int(c), float(a[r, c])] for r, c in zip(rows, cols)]


def _ones_with(shape, entries):
    a = np.ones(shape)
    for r, c, v in entries:
        a[r, c] = v
    return a


def model_to_dict(model) -> dict:
    base = {
        "format": FORMAT,
        "version": VERSION,
        "kind": model.kind,
        "dim": model.dim,
        "lam": model.lam,
        "global_mean": model.global_mean,
        "user_ids": list(model.user_ids),
        "item_ids": list(model.item_ids),
        "U": model.U.tolist(),
        "loss_trace": list(model.loss_trace),
    }
    if isinstance(model, MfModel):
        base["V"] = model.V.tolist()
        return base
    base.update(
        variant=model.variant.value,
        lam_weights=model.lam_weights,
        attributes=[list(a) for a in model.attributes],
        trained_attributes=np.flatnonzero(model.trained_attrs).tolist(),
        item_ptr=model.item_ptr.tolist(),
        item_attr=model.item_attr.tolist(),
        F=model.F.tolist(),
        omega=_deviations(model.W),
        theta=_deviations(model.T),
    )
    return base


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise DataFormatError(f"not a {FORMAT} file")
    if d.get("version") != VERSION:
        raise DataFormatError(f"unsupported model version {d.get('version')!r}")
    dim = int(d["dim"])
    U = np.array(d["U"], dtype=np.float64).reshape(len(d["user_ids"]), dim)
    if d["kind"] == "mf":
        V = np.array(d["V"], dtype=np.float64).reshape(len(d["item_ids"]), dim)
        return MfModel(U, V, d["user_ids"], d["item_ids"], d["lam"], d["global_mean"], list(d["loss_trace"]))
    if d["kind"] != "mmf":
        raise DataFormatError(f"unknown model kind {d['kind']!r}")
    na = len(d["attributes"])
    nu, ni = len(d["user_ids"]), len(d["item_ids"])
    F = np.array(d["F"], dtype=np.float64).reshape(na, dim)
    trained = np.zeros(na, dtype=bool)
    trained[d["trained_attributes"]] = True
    return MmfModel(
        U, F, _ones_with((nu, na), d["omega"]), _ones_with((ni, na), d["theta"]),
        d["user_ids"], d["item_ids"], [tuple(a) for a in d["attributes"]],
        np.array(d["item_ptr"], dtype=np.int64), np.array(d["item_attr"], dtype=np.int64),
        Variant(d["variant"]), d["lam"], d["lam_weights"], d["global_mean"], trained,
        list(d["loss_trace"]),
    )


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n", encoding="utf-8")


def load_model(path):
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid model file: {exc}", path) from None
    return model_from_dict(d)
