"""Neutral in-memory representation of a small convolutional model.

A model is an ordered list of layers whose list order is a valid topological
order of the (acyclic) computation graph.  Weights are dense float32 tensors
in row-major ``(out_ch, in_ch, kh, kw)`` layout.  Graphs are treated as
immutable after construction; use :func:`deep_copy` before mutating.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

LAYER_KINDS = ("conv2d", "relu", "add", "global_avg_pool", "linear")
WEIGHTED_KINDS = ("conv2d", "linear")


@dataclass
class Tensor4:
    """Dense 4-D weight tensor, C-contiguous float32 ``(out_ch, in_ch, kh, kw)``.

    Row-major layout means element ``(o, i, r, c)`` sits at flat offset
    ``((o * in_ch + i) * kh + r) * kw + c``.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 4:
            raise ValidationError(f"Tensor4 requires 4 dimensions, got {arr.ndim}")
        if arr.size == 0:
            raise ValidationError("Tensor4 must be non-empty")
        self.data = arr

    @property
    def out_ch(self) -> int:
        return self.data.shape[0]

    @property
    def in_ch(self) -> int:
        return self.data.shape[1]

    @property
    def kh(self) -> int:
        return self.data.shape[2]

    @property
    def kw(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return tuple(self.data.shape)  # type: ignore[return-value]

    def copy(self) -> "Tensor4":
        return Tensor4(self.data.copy())


@dataclass
class LayerSpec:
    """One node of the computation graph.

    ``inputs`` lists producer layer ids; an empty tuple marks a graph source
    fed directly by the model input.  Only conv2d and linear layers carry
    weights (and optionally a bias); linear weights use ``kh == kw == 1``.
    """

    id: str
    kind: str
    inputs: tuple[str, ...] = ()
    weights: Tensor4 | None = None
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int = 0

    def __post_init__(self) -> None:
        self.inputs = tuple(self.inputs)
        if self.bias is not None:
            self.bias = np.ascontiguousarray(self.bias, dtype=np.float32).reshape(-1)

    def copy(self) -> "LayerSpec":
        return LayerSpec(
            id=self.id,
            kind=self.kind,
            inputs=self.inputs,
            weights=self.weights.copy() if self.weights is not None else None,
            bias=self.bias.copy() if self.bias is not None else None,
            stride=self.stride,
            padding=self.padding,
        )


@dataclass
class ModelGraph:
    """A named, validated DAG of layers plus the model input shape (c, h, w)."""

    name: str
    input_shape: tuple[int, int, int]
    layers: list[LayerSpec] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.input_shape = tuple(int(v) for v in self.input_shape)  # type: ignore[assignment]

    def by_id(self, layer_id: str) -> LayerSpec:
        for layer in self.layers:
            if layer.id == layer_id:
                return layer
        raise ValidationError(f"unknown layer id {layer_id!r}")

    def conv_layers(self) -> list[LayerSpec]:
        return [l for l in self.layers if l.kind == "conv2d"]

    def sink(self) -> LayerSpec:
        consumed = {src for l in self.layers for src in l.inputs}
        sinks = [l for l in self.layers if l.id not in consumed]
        if len(sinks) != 1:
            raise ValidationError(f"expected exactly one sink layer, found {len(sinks)}")
        return sinks[0]

    def topo_index(self, layer_id: str) -> int:
        for idx, layer in enumerate(self.layers):
            if layer.id == layer_id:
                return idx
        raise ValidationError(f"unknown layer id {layer_id!r}")

    def validate(self) -> None:
        check_structure(self.layers)
        infer_shapes(self)


def check_structure(layers: list[LayerSpec], weightless_ids: frozenset[str] = frozenset()) -> None:
    """Structural checks shared by dense and compressed graphs.

    ``weightless_ids`` names conv layers whose dense weights are legitimately
    absent (their payload lives in a quantized side table).
    """
    if not layers:
        raise ValidationError("no sink layer (empty layer list)")
    seen: set[str] = set()
    for layer in layers:
        if layer.id in seen:
            raise ValidationError(f"duplicate layer id {layer.id!r}")
        if layer.kind not in LAYER_KINDS:
            raise ValidationError(f"layer {layer.id!r}: unknown kind {layer.kind!r}")
        for src in layer.inputs:
            # inputs must precede their consumer: enforces both acyclicity and
            # that the list order is a valid topological order
            if src not in seen:
                raise ValidationError(
                    f"layer {layer.id!r}: input {src!r} does not precede it in the layer list"
                )
        arity = len(layer.inputs)
        if layer.kind == "add":
            if arity != 2:
                raise ValidationError(f"layer {layer.id!r}: add requires exactly 2 inputs, got {arity}")
        elif arity > 1:
            raise ValidationError(f"layer {layer.id!r}: {layer.kind} takes at most 1 input, got {arity}")
        if layer.kind in WEIGHTED_KINDS:
            if layer.weights is None and layer.id not in weightless_ids:
                raise ValidationError(f"layer {layer.id!r}: {layer.kind} requires weights")
        else:
            if layer.weights is not None:
                raise ValidationError(f"layer {layer.id!r}: {layer.kind} must not carry weights")
            if layer.bias is not None:
                raise ValidationError(f"layer {layer.id!r}: {layer.kind} must not carry a bias")
        if layer.weights is not None and not np.isfinite(layer.weights.data).all():
            raise ValidationError(f"layer {layer.id!r}: non-finite weight values")
        if layer.bias is not None:
            if not np.isfinite(layer.bias).all():
                raise ValidationError(f"layer {layer.id!r}: non-finite bias values")
            if layer.weights is not None and layer.bias.shape[0] != layer.weights.out_ch:
                raise ValidationError(
                    f"layer {layer.id!r}: bias length {layer.bias.shape[0]} != out_ch {layer.weights.out_ch}"
                )
        if layer.kind == "conv2d":
            if layer.stride < 1:
                raise ValidationError(f"layer {layer.id!r}: stride must be >= 1")
            if layer.padding < 0:
                raise ValidationError(f"layer {layer.id!r}: padding must be >= 0")
        seen.add(layer.id)
    consumed = {src for l in layers for src in l.inputs}
    sinks = [l.id for l in layers if l.id not in consumed]
    if len(sinks) != 1:
        raise ValidationError(f"expected exactly one sink layer, found {len(sinks)}: {sinks}")


def infer_shapes(model: ModelGraph) -> dict[str, tuple[int, int, int]]:
    """Propagate activation shapes (c, h, w) through the graph.

    Raises ValidationError naming the offending layer on any mismatch.
    """
    shapes: dict[str, tuple[int, int, int]] = {}
    for layer in model.layers:
        if layer.inputs:
            in_shapes = [shapes[src] for src in layer.inputs]
        else:
            in_shapes = [model.input_shape]
        c, h, w = in_shapes[0]
        if layer.kind == "conv2d":
            wt = layer.weights
            assert wt is not None
            if wt.in_ch != c:
                raise ValidationError(
                    f"layer {layer.id!r}: expects {wt.in_ch} input channels, got {c}"
                )
            oh = (h + 2 * layer.padding - wt.kh) // layer.stride + 1
            ow = (w + 2 * layer.padding - wt.kw) // layer.stride + 1
            if oh < 1 or ow < 1:
                raise ValidationError(f"layer {layer.id!r}: kernel larger than padded input")
            shapes[layer.id] = (wt.out_ch, oh, ow)
        elif layer.kind == "relu":
            shapes[layer.id] = (c, h, w)
        elif layer.kind == "add":
            if in_shapes[0] != in_shapes[1]:
                raise ValidationError(
                    f"layer {layer.id!r}: add operands differ: {in_shapes[0]} vs {in_shapes[1]}"
                )
            shapes[layer.id] = (c, h, w)
        elif layer.kind == "global_avg_pool":
            shapes[layer.id] = (c, 1, 1)
        elif layer.kind == "linear":
            wt = layer.weights
            assert wt is not None
            if wt.kh != 1 or wt.kw != 1:
                raise ValidationError(f"layer {layer.id!r}: linear weights must be (out, in, 1, 1)")
            if c * h * w != wt.in_ch:
                raise ValidationError(
                    f"layer {layer.id!r}: expects {wt.in_ch} input features, got {c * h * w}"
                )
            shapes[layer.id] = (wt.out_ch, 1, 1)
        else:  # pragma: no cover - kinds checked in check_structure
            raise ValidationError(f"layer {layer.id!r}: unknown kind {layer.kind!r}")
    return shapes


def deep_copy(model: ModelGraph) -> ModelGraph:
    """Return a copy sharing no mutable storage with the original."""
    return ModelGraph(
        name=model.name,
        input_shape=model.input_shape,
        layers=[layer.copy() for layer in model.layers],
    )
