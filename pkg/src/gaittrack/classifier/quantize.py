"""8-bit weight quantization for faster, smaller deployed models.

Weight tensors (linear and convolution kernels) are stored as int8 codes with
one scale per tensor, ``scale = max|w| / 127``; biases and batch-norm
parameters stay in floating point.  Inference dequantizes on the fly, so the
forward path is unchanged apart from the rounding error, which is bounded by
``scale / 2`` per weight.
"""

from __future__ import annotations

import copy

import numpy as np

from gaittrack.classifier.network import TcpcnModel


def quantize_tensor(w: np.ndarray) -> tuple[np.ndarray, float]:
    """Symmetric per-tensor int8 quantization.  All-zero tensors get scale 1."""
    peak = float(np.max(np.abs(w))) if w.size else 0.0
    scale = peak / 127.0 if peak > 0 else 1.0
    codes = np.clip(np.round(w / scale), -127, 127).astype(np.int8)
    return codes, scale


def dequantize_tensor(codes: np.ndarray, scale: float,
                      dtype=np.float32) -> np.ndarray:
    return codes.astype(dtype) * np.asarray(scale, dtype=dtype)


def quantize(model: TcpcnModel) -> TcpcnModel:
    """Return a copy of the model with int8 weight tensors.

    The quantized model supports inference only; training raises.
    """
    q = copy.deepcopy(model)
    for layer in q.layers():
        for key in layer.weight_keys():
            codes, scale = quantize_tensor(layer.params[key])
            layer.quantized[key] = (codes, scale)
            # keep the shape visible but drop the float payload
            layer.params[key] = np.zeros_like(layer.params[key])
    q.quantized = True
    return q
