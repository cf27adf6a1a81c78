"""Versioned binary model container.

Layout (all integers little-endian):

    bytes 0..3   magic ``b"GTPC"``
    bytes 4..7   uint32 container version (currently 1)
    bytes 8..15  uint64 length of the JSON header
    header       UTF-8 JSON, see below
    payload      raw tensor bytes, C order, little-endian, concatenated in
                 the order listed in the header

Header fields::

    {
      "version": 1,
      "n_subjects": Q,
      "dtype": "float32" | "float64",
      "p_drop": float,
      "quantized": bool,
      "feature_mean": [5 floats],
      "feature_std": [5 floats],
      "arch": {"pc_widths": [...], "tc": [[c_in, c_out, dilation], ...],
               "head_dilation": int},
      "arrays": [{"name": str, "shape": [...], "dtype": str,
                  "scale": float (quantized weights only)}, ...]
    }

Array names are ``pc{i}.W``, ``pc{i}.b``, ``pc{i}.gamma``, ``pc{i}.beta``,
``pc{i}.running_mean``, ``pc{i}.running_var`` for the point blocks,
``tc{i}.W`` / ``tc{i}.b`` for the temporal convolutions and ``head.W`` /
``head.b``.  Quantized weight tensors are stored as int8 codes plus their
per-tensor scale.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from gaittrack.classifier.network import (
    HEAD_DILATION,
    PC_WIDTHS,
    TC_CHANNELS,
    TC_DILATIONS,
    TcpcnModel,
)

MAGIC = b"GTPC"
VERSION = 1

_LE = {"float32": "<f4", "float64": "<f8", "int8": "|i1"}


def _named_tensors(model: TcpcnModel):
    for i, (lin, bn, _) in enumerate(model.pc_blocks):
        yield f"pc{i}.W", lin, "W"
        yield f"pc{i}.b", lin, "b"
        yield f"pc{i}.gamma", bn, "gamma"
        yield f"pc{i}.beta", bn, "beta"
        yield f"pc{i}.running_mean", bn, "running_mean"
        yield f"pc{i}.running_var", bn, "running_var"
    for i, conv in enumerate(model.tc_convs):
        yield f"tc{i}.W", conv, "W"
        yield f"tc{i}.b", conv, "b"
    yield "head.W", model.head, "W"
    yield "head.b", model.head, "b"


def _get_tensor(layer, key):
    if key in ("running_mean", "running_var"):
        return getattr(layer, key), None
    if hasattr(layer, "quantized") and key in layer.quantized:
        codes, scale = layer.quantized[key]
        return codes, scale
    return layer.params[key], None


def save_model(model: TcpcnModel, path: str | Path) -> None:
    dtype_name = np.dtype(model.dtype).name
    manifest = []
    blobs = []
    for name, layer, key in _named_tensors(model):
        arr, scale = _get_tensor(layer, key)
        entry = {"name": name, "shape": list(arr.shape),
                 "dtype": "int8" if arr.dtype == np.int8 else dtype_name}
        if scale is not None:
            entry["scale"] = scale
        manifest.append(entry)
        blobs.append(np.ascontiguousarray(arr).astype(_LE[entry["dtype"]]).tobytes())
    header = {
        "version": VERSION,
        "n_subjects": model.n_subjects,
        "dtype": dtype_name,
        "p_drop": model.dropout.p,
        "quantized": model.quantized,
        "feature_mean": [float(v) for v in model.feature_mean],
        "feature_std": [float(v) for v in model.feature_std],
        "arch": {"pc_widths": list(PC_WIDTHS),
                 "tc": [[int(c.c_in), int(c.c_out), int(c.dilation)]
                        for c in model.tc_convs],
                 "head_dilation": HEAD_DILATION},
        "arrays": manifest,
    }
    raw = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for blob in blobs:
            fh.write(blob)


def load_model(path: str | Path) -> TcpcnModel:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a model container")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arch = header["arch"]
        if (tuple(arch["pc_widths"]) != PC_WIDTHS
                or [c[1] for c in arch["tc"]] != list(TC_CHANNELS)
                or [c[2] for c in arch["tc"]] != list(TC_DILATIONS)):
            raise ValueError(f"{path}: container architecture does not match "
                             "this implementation")
        dtype = np.dtype(header["dtype"]).type
        model = TcpcnModel(header["n_subjects"], dtype=dtype,
                           p_drop=header["p_drop"])
        model.feature_mean = np.array(header["feature_mean"], dtype=dtype)
        model.feature_std = np.array(header["feature_std"], dtype=dtype)
        model.quantized = header["quantized"]
        tensors = {name: (layer, key) for name, layer, key
                   in _named_tensors(model)}
        for entry in header["arrays"]:
            n_bytes = int(np.prod(entry["shape"])) \
                * np.dtype(_LE[entry["dtype"]]).itemsize
            arr = np.frombuffer(fh.read(n_bytes), dtype=_LE[entry["dtype"]])
            arr = arr.reshape(entry["shape"])
            layer, key = tensors[entry["name"]]
            if "scale" in entry:
                layer.quantized[key] = (arr.astype(np.int8),
                                        float(entry["scale"]))
                layer.params[key] = np.zeros(entry["shape"], dtype=dtype)
            elif key in ("running_mean", "running_var"):
                setattr(layer, key, arr.astype(dtype))
            else:
                layer.params[key] = np.ascontiguousarray(arr.astype(dtype))
    return model
