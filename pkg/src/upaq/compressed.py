"""In-memory form of a compressed model and its reconstruction.

A compressed model keeps the graph topology, biases, and any uncompressed
weights dense at float32, while every compressed conv layer is replaced by
integer weights plus quantization scales: one scale per (out, in) kernel
slice for k x k layers, one scale per 3 x 3 block for 1 x 1 layers that went
through the block transformation.  Group records tie each root and its
leaves to the single shared pattern and bitwidth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import LayerSpec, ModelGraph, Tensor4, check_structure, infer_shapes
from .patterns import KernelPattern
from .quantizer import dequantize


@dataclass(frozen=True)
class CompressedGroup:
    root_id: str
    leaf_ids: tuple[str, ...]
    pattern: KernelPattern
    bitwidth: int

    @property
    def member_ids(self) -> tuple[str, ...]:
        return (self.root_id,) + self.leaf_ids


@dataclass
class QuantizedConv:
    """Integer payload of one compressed conv layer.

    ``q`` holds zeros at pruned positions and the signed quantized values at
    retained positions.  ``block_k`` is None for k x k layers; for 1 x 1
    layers it records the block edge used by the flatten transformation, and
    ``scales`` then has one entry per block instead of per slice.
    """

    shape: tuple[int, int, int, int]
    bitwidth: int
    q: np.ndarray  # int32, shape == shape
    scales: np.ndarray  # float32 1-D
    block_k: int | None = None

    def __post_init__(self) -> None:
        self.q = np.ascontiguousarray(self.q, dtype=np.int32)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float32).reshape(-1)
        self.shape = tuple(int(v) for v in self.shape)  # type: ignore[assignment]


@dataclass
class ProfileInfo:
    """Provenance of a compression run, enough to validate and re-score."""

    name: str
    quant_bits: tuple[int, ...]
    es_weights: tuple[float, float, float]
    seed: int
    candidates: int
    exhaustive: bool
    block_k: int
    cost_mode: str = "analytic"


@dataclass
class CompressedModel:
    """Graph metadata plus per-group quantized payloads."""

    name: str
    input_shape: tuple[int, int, int]
    layers: list[LayerSpec]
    groups: list[CompressedGroup]
    qlayers: dict[str, QuantizedConv]
    profile: ProfileInfo
    base_payload_nbytes: int = 0  # dense payload size of the source model

    def by_id(self, layer_id: str) -> LayerSpec:
        for layer in self.layers:
            if layer.id == layer_id:
                return layer
        raise ValidationError(f"unknown layer id {layer_id!r}")

    def validate(self) -> None:
        check_structure(self.layers, weightless_ids=frozenset(self.qlayers))
        seen: dict[str, str] = {}
        for group in self.groups:
            for member in group.member_ids:
                if member in seen:
                    raise ValidationError(
                        f"layer {member!r} appears in groups rooted at {seen[member]!r} and {group.root_id!r}"
                    )
                seen[member] = group.root_id
                if member not in self.qlayers:
                    raise ValidationError(f"group member {member!r} has no quantized payload")
            if group.bitwidth not in self.profile.quant_bits:
                raise ValidationError(
                    f"group {group.root_id!r}: bitwidth {group.bitwidth} outside profile set {self.profile.quant_bits}"
                )
        for layer_id in self.qlayers:
            if layer_id not in seen:
                raise ValidationError(f"quantized layer {layer_id!r} belongs to no group")
        for group in self.groups:
            for member in group.member_ids:
                _check_payload(self.by_id(member), self.qlayers[member], group)

    def group_for(self, layer_id: str) -> CompressedGroup:
        for group in self.groups:
            if layer_id in group.member_ids:
                return group
        raise ValidationError(f"layer {layer_id!r} is not compressed")


def _check_payload(layer: LayerSpec, qc: QuantizedConv, group: CompressedGroup) -> None:
    out_ch, in_ch, kh, kw = qc.shape
    max_value = 2 ** (qc.bitwidth - 1) - 1
    if qc.q.shape != qc.shape:
        raise ValidationError(f"layer {layer.id!r}: q shape {qc.q.shape} != declared {qc.shape}")
    if qc.bitwidth != group.bitwidth:
        raise ValidationError(f"layer {layer.id!r}: bitwidth differs from its group")
    if int(np.abs(qc.q).max(initial=0)) > max_value:
        raise ValidationError(f"layer {layer.id!r}: quantized value outside symmetric {qc.bitwidth}-bit range")
    mask = group.pattern.mask()
    if qc.block_k is None:
        if (kh, kw) != (group.pattern.d, group.pattern.d):
            raise ValidationError(f"layer {layer.id!r}: kernel dims {kh}x{kw} != pattern d={group.pattern.d}")
        if qc.scales.shape[0] != out_ch * in_ch:
            raise ValidationError(f"layer {layer.id!r}: expected {out_ch * in_ch} slice scales")
        off = qc.q.reshape(out_ch * in_ch, kh, kw)[:, ~mask]
        if off.size and np.any(off != 0):
            raise ValidationError(f"layer {layer.id!r}: nonzero value outside the group pattern")
    else:
        k = qc.block_k
        if (kh, kw) != (1, 1):
            raise ValidationError(f"layer {layer.id!r}: block payload on a non-1x1 layer")
        if group.pattern.d != k:
            raise ValidationError(f"layer {layer.id!r}: pattern d={group.pattern.d} != block edge {k}")
        count = out_ch * in_ch
        n_blocks = math.ceil(count / (k * k))
        if qc.scales.shape[0] != n_blocks:
            raise ValidationError(f"layer {layer.id!r}: expected {n_blocks} block scales")
        flat = qc.q.reshape(-1)
        keep_in_block = mask.reshape(-1)
        for f in range(count):
            if not keep_in_block[f % (k * k)] and flat[f] != 0:
                raise ValidationError(f"layer {layer.id!r}: nonzero value outside the block pattern")


def decompress_model(cm: CompressedModel) -> ModelGraph:
    """Materialize a dense ModelGraph with dequantized float32 weights."""
    layers: list[LayerSpec] = []
    for layer in cm.layers:
        copy = layer.copy()
        if layer.id in cm.qlayers:
            copy.weights = Tensor4(dequantized_weights(cm.qlayers[layer.id]))
        layers.append(copy)
    dense = ModelGraph(name=cm.name, input_shape=cm.input_shape, layers=layers)
    dense.validate()
    return dense


def dequantized_weights(qc: QuantizedConv) -> np.ndarray:
    """Float32 weight tensor reconstructed from one quantized payload."""
    out_ch, in_ch, kh, kw = qc.shape
    if qc.block_k is None:
        flat = qc.q.reshape(out_ch * in_ch, kh * kw)
        deq = np.empty_like(flat, dtype=np.float32)
        for s in range(flat.shape[0]):
            deq[s] = dequantize(flat[s], float(qc.scales[s]))
        return deq.reshape(qc.shape)
    k = qc.block_k
    count = out_ch * in_ch
    flat = qc.q.reshape(-1)
    deq = np.zeros(count, dtype=np.float32)
    for b in range(qc.scales.shape[0]):
        lo = b * k * k
        hi = min(lo + k * k, count)
        deq[lo:hi] = dequantize(flat[lo:hi], float(qc.scales[b]))
    return deq.reshape(qc.shape)


def stored_value_count(qc: QuantizedConv, pattern: KernelPattern) -> int:
    """Structural nonzero slots of one payload: the values actually stored.

    This is the sparsity a pattern-skipping engine sees; a retained weight
    that happens to quantize to integer zero still occupies a slot.
    """
    out_ch, in_ch, _, _ = qc.shape
    if qc.block_k is None:
        return out_ch * in_ch * pattern.n
    k = qc.block_k
    count = out_ch * in_ch
    keep = [r * k + c for r, c in pattern.positions]
    total = 0
    for j in range(qc.scales.shape[0]):
        lo = j * k * k
        total += sum(1 for idx in keep if lo + idx < count)
    return total


def compressed_conv_shapes(cm: CompressedModel) -> dict[str, tuple[int, int, int]]:
    """Activation shapes of the compressed graph (same algorithm as dense)."""
    probe = decompress_model(cm)
    return infer_shapes(probe)
