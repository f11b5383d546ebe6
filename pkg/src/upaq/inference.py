"""Minimal CPU forward pass for dense and compressed models.

Convolution is direct (no im2col/FFT) with a fixed accumulation order: the
output plane for each output channel starts at the bias and accumulates one
``weight * shifted-input`` product per (in_ch, row, col) step, in that loop
order.  The sparse path for compressed models walks the same loops but skips
zero weights, so it is bit-identical to the densified reference whenever the
summation order matches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .compressed import CompressedModel, decompress_model
from .errors import FormatError, ValidationError
from .model import LayerSpec, ModelGraph


@dataclass
class Activation:
    """One (channels, height, width) float32 activation tensor."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValidationError(f"activation requires 3 dimensions, got {arr.ndim}")
        if not np.isfinite(arr).all():
            raise ValidationError("activation contains non-finite values")
        self.data = arr

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)  # type: ignore[return-value]


def forward(model: ModelGraph, input_act: Activation) -> Activation:
    """Run the dense model; returns the sink layer's activation."""
    return _run(model, input_act, skip_zeros=False)


def forward_compressed(cm: CompressedModel, input_act: Activation, sparse: bool = False) -> Activation:
    """Run a compressed model on dequantized weights.

    The reference path densifies (zeros at pruned positions) and runs the
    dense engine; ``sparse=True`` skips zero weights instead, matching the
    reference bit-for-bit under the shared loop order.
    """
    dense = decompress_model(cm)
    return _run(dense, input_act, skip_zeros=sparse)


def _run(model: ModelGraph, input_act: Activation, skip_zeros: bool) -> Activation:
    if input_act.shape != model.input_shape:
        raise ValidationError(
            f"input shape {input_act.shape} does not match model input {model.input_shape}"
        )
    acts: dict[str, np.ndarray] = {}
    sink_id = model.sink().id
    for layer in model.layers:
        srcs = [acts[s] for s in layer.inputs] if layer.inputs else [input_act.data]
        x = srcs[0]
        if layer.kind == "conv2d":
            out = _conv2d(x, layer, skip_zeros)
        elif layer.kind == "relu":
            out = np.maximum(x, np.float32(0.0))
        elif layer.kind == "add":
            if srcs[0].shape != srcs[1].shape:
                raise ValidationError(f"layer {layer.id!r}: add operand shapes differ")
            out = srcs[0] + srcs[1]
        elif layer.kind == "global_avg_pool":
            c = x.shape[0]
            out = np.empty((c, 1, 1), dtype=np.float32)
            denom = np.float32(x.shape[1] * x.shape[2])
            for ch in range(c):
                # sequential row-major accumulation, matching the engine's
                # fixed-summation-order contract
                acc = np.float32(0.0)
                for v in x[ch].reshape(-1):
                    acc += v
                out[ch, 0, 0] = acc / denom
        elif layer.kind == "linear":
            out = _linear(x, layer)
        else:  # pragma: no cover - validated earlier
            raise ValidationError(f"layer {layer.id!r}: unknown kind {layer.kind!r}")
        acts[layer.id] = out
    return Activation(acts[sink_id])


def _conv2d(x: np.ndarray, layer: LayerSpec, skip_zeros: bool) -> np.ndarray:
    wt = layer.weights
    assert wt is not None
    in_ch, h, w = x.shape
    if in_ch != wt.in_ch:
        raise ValidationError(f"layer {layer.id!r}: expects {wt.in_ch} input channels, got {in_ch}")
    s, p = layer.stride, layer.padding
    oh = (h + 2 * p - wt.kh) // s + 1
    ow = (w + 2 * p - wt.kw) // s + 1
    if oh < 1 or ow < 1:
        raise ValidationError(f"layer {layer.id!r}: kernel larger than padded input")
    if p > 0:
        xp = np.zeros((in_ch, h + 2 * p, w + 2 * p), dtype=np.float32)
        xp[:, p:p + h, p:p + w] = x
    else:
        xp = x
    out = np.empty((wt.out_ch, oh, ow), dtype=np.float32)
    wdata = wt.data
    for o in range(wt.out_ch):
        if layer.bias is not None:
            acc = np.full((oh, ow), layer.bias[o], dtype=np.float32)
        else:
            acc = np.zeros((oh, ow), dtype=np.float32)
        for i in range(in_ch):
            plane = xp[i]
            for r in range(wt.kh):
                for c in range(wt.kw):
                    wv = wdata[o, i, r, c]
                    if skip_zeros and wv == 0.0:
                        continue
                    acc += wv * plane[r::s, c::s][:oh, :ow]
        out[o] = acc
    return out


def _linear(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    wt = layer.weights
    assert wt is not None
    flat = x.reshape(-1)
    if flat.shape[0] != wt.in_ch:
        raise ValidationError(
            f"layer {layer.id!r}: expects {wt.in_ch} input features, got {flat.shape[0]}"
        )
    wmat = wt.data.reshape(wt.out_ch, wt.in_ch)
    if layer.bias is not None:
        acc = layer.bias.copy()
    else:
        acc = np.zeros(wt.out_ch, dtype=np.float32)
    for j in range(wt.in_ch):
        acc += wmat[:, j] * flat[j]
    return acc.reshape(wt.out_ch, 1, 1)


# ---------------------------------------------------------------------------
# activation batches on disk: raw little-endian float32 blob + JSON sidecar
# ---------------------------------------------------------------------------

def sidecar_path(blob_path) -> Path:
    return Path(str(blob_path) + ".json")


def save_activations(path, acts: list[Activation]) -> None:
    """Write a batch as one f32 blob; shapes go to ``<path>.json``."""
    if not acts:
        raise ValidationError("empty activation batch")
    shape = acts[0].shape
    for idx, act in enumerate(acts):
        if act.shape != shape:
            raise ValidationError(f"input {idx}: shape {act.shape} differs from first input {shape}")
    blob = b"".join(a.data.astype("<f4").tobytes() for a in acts)
    Path(path).write_bytes(blob)
    sidecar_path(path).write_text(
        json.dumps({"count": len(acts), "shape": list(shape)}, indent=2) + "\n"
    )


def load_activations(path) -> list[Activation]:
    try:
        meta = json.loads(sidecar_path(path).read_text())
        shape = tuple(meta["shape"])
        count = meta["count"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{sidecar_path(path)}: bad shape sidecar: {exc}") from exc
    per = int(np.prod(shape))
    raw = Path(path).read_bytes()
    expected = count * per * 4
    if len(raw) != expected:
        raise ValidationError(f"{path}: expected {expected} bytes for {count} inputs, got {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f4").astype(np.float32)
    return [Activation(flat[i * per:(i + 1) * per].reshape(shape)) for i in range(count)]
