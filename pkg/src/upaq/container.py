"""On-disk containers for dense (.upaq) and compressed (.upaqc) models.

Both formats are: 5-byte magic, u32 little-endian header length, a canonical
JSON header (sorted keys, no whitespace) holding the graph plus byte offsets,
then a single binary payload.  All multi-byte values are little-endian.

Dense payload: float32 weight and bias arrays, laid out per layer in list
order (weights then bias).  Compressed payload: per layer in list order, the
float32 bias, then either dense float32 weights (uncompressed layers) or the
float32 scale table followed by bit-packed two's-complement integers (4/8/16
bit lanes, each slice or block padded to a byte boundary); after the layer
sections come the per-group pattern masks, one bit per kernel cell in
row-major order, LSB first.

Compression ratios compare payload lengths only; headers are excluded.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .compressed import CompressedGroup, CompressedModel, ProfileInfo, QuantizedConv
from .errors import FormatError
from .model import LayerSpec, ModelGraph, Tensor4
from .patterns import KernelPattern

MAGIC_DENSE = b"UPAQ1"
MAGIC_COMPRESSED = b"UPQC1"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# bit packing
# ---------------------------------------------------------------------------

def pack_ints(values, bits: int) -> bytes:
    """Pack signed integers as two's-complement fields, LSB first, byte-padded."""
    mask = (1 << bits) - 1
    acc = 0
    pos = 0
    out = bytearray()
    for v in values:
        acc |= (int(v) & mask) << pos
        pos += bits
        while pos >= 8:
            out.append(acc & 0xFF)
            acc >>= 8
            pos -= 8
    if pos > 0:
        out.append(acc & 0xFF)
    return bytes(out)


def unpack_ints(data: bytes, count: int, bits: int) -> list[int]:
    """Inverse of :func:`pack_ints` for ``count`` fields."""
    if len(data) * 8 < count * bits:
        raise FormatError(f"packed section holds {len(data)} bytes, needs {count} x {bits}-bit fields")
    half = 1 << (bits - 1)
    full = 1 << bits
    out = []
    acc = 0
    pos = 0
    it = iter(data)
    for _ in range(count):
        while pos < bits:
            acc |= next(it) << pos
            pos += 8
        raw = acc & (full - 1)
        acc >>= bits
        pos -= bits
        out.append(raw - full if raw >= half else raw)
    return out


def pack_mask(pattern: KernelPattern) -> bytes:
    """d*d-cell bitmask, row-major cell order, LSB first within each byte."""
    nbits = pattern.d * pattern.d
    buf = bytearray(math.ceil(nbits / 8))
    for r, c in pattern.positions:
        bit = r * pattern.d + c
        buf[bit // 8] |= 1 << (bit % 8)
    return bytes(buf)


def _positions_from_mask(mask: bytes, d: int) -> tuple[tuple[int, int], ...]:
    positions = []
    for bit in range(d * d):
        if mask[bit // 8] >> (bit % 8) & 1:
            positions.append((bit // d, bit % d))
    return tuple(positions)


# ---------------------------------------------------------------------------
# dense container
# ---------------------------------------------------------------------------

def dense_payload_nbytes(model: ModelGraph) -> int:
    """Payload size of the dense container: 4 bytes per weight and bias value."""
    total = 0
    for layer in model.layers:
        if layer.weights is not None:
            total += 4 * layer.weights.data.size
        if layer.bias is not None:
            total += 4 * layer.bias.size
    return total


def serialize_model(model: ModelGraph) -> bytes:
    model.validate()
    blob = bytearray()
    layer_entries = []
    for layer in model.layers:
        entry = {
            "id": layer.id,
            "kind": layer.kind,
            "stride": layer.stride,
            "padding": layer.padding,
            "inputs": list(layer.inputs),
            "weights": None,
            "bias": None,
        }
        if layer.weights is not None:
            raw = layer.weights.data.astype("<f4").tobytes()
            entry["weights"] = {
                "shape": list(layer.weights.shape),
                "offset": len(blob),
                "nbytes": len(raw),
            }
            blob += raw
        if layer.bias is not None:
            raw = layer.bias.astype("<f4").tobytes()
            entry["bias"] = {"offset": len(blob), "nbytes": len(raw)}
            blob += raw
        layer_entries.append(entry)
    header = {
        "format_version": FORMAT_VERSION,
        "name": model.name,
        "input_shape": list(model.input_shape),
        "layers": layer_entries,
        "payload_nbytes": len(blob),
    }
    return _assemble(MAGIC_DENSE, header, bytes(blob))


def deserialize_model(data: bytes) -> ModelGraph:
    header, blob = _split(data, MAGIC_DENSE, "dense model")
    layers = []
    for entry in header["layers"]:
        weights = None
        if entry["weights"] is not None:
            weights = Tensor4(
                _read_f32(blob, entry["weights"], entry["id"]).reshape(entry["weights"]["shape"])
            )
        bias = None
        if entry["bias"] is not None:
            bias = _read_f32(blob, entry["bias"], entry["id"])
        layers.append(
            LayerSpec(
                id=entry["id"],
                kind=entry["kind"],
                inputs=tuple(entry["inputs"]),
                weights=weights,
                bias=bias,
                stride=entry["stride"],
                padding=entry["padding"],
            )
        )
    model = ModelGraph(
        name=header["name"],
        input_shape=tuple(header["input_shape"]),
        layers=layers,
    )
    model.validate()
    return model


def save_model(model: ModelGraph, path) -> None:
    Path(path).write_bytes(serialize_model(model))


def load_model(path) -> ModelGraph:
    return deserialize_model(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# compressed container
# ---------------------------------------------------------------------------

def packed_layer_nbytes(qc: QuantizedConv, pattern: KernelPattern) -> int:
    """Packed-integer byte count for one layer (each unit byte-padded)."""
    out_ch, in_ch, _, _ = qc.shape
    if qc.block_k is None:
        per_slice = math.ceil(pattern.n * qc.bitwidth / 8)
        return out_ch * in_ch * per_slice
    k = qc.block_k
    count = out_ch * in_ch
    keep = sorted(r * k + c for r, c in pattern.positions)
    total = 0
    for j in range(qc.scales.shape[0]):
        lo = j * k * k
        survivors = sum(1 for idx in keep if lo + idx < count)
        total += math.ceil(survivors * qc.bitwidth / 8)
    return total


def compressed_payload_nbytes(cm: CompressedModel) -> int:
    """Payload size of the compressed container, by direct accounting."""
    total = 0
    for layer in cm.layers:
        if layer.bias is not None:
            total += 4 * layer.bias.size
        if layer.weights is not None:
            total += 4 * layer.weights.data.size
        if layer.id in cm.qlayers:
            qc = cm.qlayers[layer.id]
            total += 4 * qc.scales.size
            total += packed_layer_nbytes(qc, cm.group_for(layer.id).pattern)
    for group in cm.groups:
        total += math.ceil(group.pattern.d ** 2 / 8)
    return total


def _packed_values(qc: QuantizedConv, pattern: KernelPattern):
    """Retained integers in canonical order, one list per slice or block."""
    out_ch, in_ch, kh, kw = qc.shape
    if qc.block_k is None:
        flat = qc.q.reshape(out_ch * in_ch, kh, kw)
        for s in range(out_ch * in_ch):
            yield [int(flat[s, r, c]) for r, c in pattern.positions]
    else:
        k = qc.block_k
        count = out_ch * in_ch
        q_flat = qc.q.reshape(-1)
        keep = sorted(r * k + c for r, c in pattern.positions)
        for j in range(qc.scales.shape[0]):
            lo = j * k * k
            yield [int(q_flat[lo + idx]) for idx in keep if lo + idx < count]


def serialize_compressed(cm: CompressedModel) -> bytes:
    cm.validate()
    blob = bytearray()
    layer_entries = []
    for layer in cm.layers:
        entry = {
            "id": layer.id,
            "kind": layer.kind,
            "stride": layer.stride,
            "padding": layer.padding,
            "inputs": list(layer.inputs),
            "bias": None,
            "weights": None,
            "quantized": None,
        }
        if layer.bias is not None:
            raw = layer.bias.astype("<f4").tobytes()
            entry["bias"] = {"offset": len(blob), "nbytes": len(raw)}
            blob += raw
        if layer.weights is not None:
            raw = layer.weights.data.astype("<f4").tobytes()
            entry["weights"] = {
                "shape": list(layer.weights.shape),
                "offset": len(blob),
                "nbytes": len(raw),
            }
            blob += raw
        if layer.id in cm.qlayers:
            qc = cm.qlayers[layer.id]
            pattern = cm.group_for(layer.id).pattern
            scales_raw = qc.scales.astype("<f4").tobytes()
            scales_ref = {"offset": len(blob), "nbytes": len(scales_raw)}
            blob += scales_raw
            packed = bytearray()
            for values in _packed_values(qc, pattern):
                packed += pack_ints(values, qc.bitwidth)
            packed_ref = {"offset": len(blob), "nbytes": len(packed)}
            blob += packed
            entry["quantized"] = {
                "shape": list(qc.shape),
                "bitwidth": qc.bitwidth,
                "block_k": qc.block_k,
                "scales": scales_ref,
                "packed": packed_ref,
            }
        layer_entries.append(entry)
    group_entries = []
    for group in cm.groups:
        mask = pack_mask(group.pattern)
        group_entries.append(
            {
                "root": group.root_id,
                "leaves": list(group.leaf_ids),
                "bitwidth": group.bitwidth,
                "pattern": {
                    "kind": group.pattern.kind,
                    "d": group.pattern.d,
                    "mask_offset": len(blob),
                    "mask_nbytes": len(mask),
                },
            }
        )
        blob += mask
    header = {
        "format_version": FORMAT_VERSION,
        "name": cm.name,
        "input_shape": list(cm.input_shape),
        "profile": {
            "name": cm.profile.name,
            "quant_bits": list(cm.profile.quant_bits),
            "es_weights": list(cm.profile.es_weights),
            "seed": cm.profile.seed,
            "candidates": cm.profile.candidates,
            "exhaustive": cm.profile.exhaustive,
            "block_k": cm.profile.block_k,
            "cost_mode": cm.profile.cost_mode,
        },
        "base_payload_nbytes": cm.base_payload_nbytes,
        "layers": layer_entries,
        "groups": group_entries,
        "payload_nbytes": len(blob),
    }
    return _assemble(MAGIC_COMPRESSED, header, bytes(blob))


def deserialize_compressed(data: bytes) -> CompressedModel:
    header, blob = _split(data, MAGIC_COMPRESSED, "compressed model")
    groups = []
    patterns: dict[str, KernelPattern] = {}
    for entry in header["groups"]:
        pat = entry["pattern"]
        mask = _read_raw(blob, pat["mask_offset"], pat["mask_nbytes"], entry["root"])
        pattern = KernelPattern(
            kind=pat["kind"], d=pat["d"], positions=_positions_from_mask(mask, pat["d"])
        )
        group = CompressedGroup(
            root_id=entry["root"],
            leaf_ids=tuple(entry["leaves"]),
            pattern=pattern,
            bitwidth=entry["bitwidth"],
        )
        groups.append(group)
        for member in group.member_ids:
            patterns[member] = pattern

    layers = []
    qlayers: dict[str, QuantizedConv] = {}
    for entry in header["layers"]:
        weights = None
        if entry["weights"] is not None:
            weights = Tensor4(
                _read_f32(blob, entry["weights"], entry["id"]).reshape(entry["weights"]["shape"])
            )
        bias = None
        if entry["bias"] is not None:
            bias = _read_f32(blob, entry["bias"], entry["id"])
        layers.append(
            LayerSpec(
                id=entry["id"],
                kind=entry["kind"],
                inputs=tuple(entry["inputs"]),
                weights=weights,
                bias=bias,
                stride=entry["stride"],
                padding=entry["padding"],
            )
        )
        if entry["quantized"] is not None:
            if entry["id"] not in patterns:
                raise FormatError(f"quantized layer {entry['id']!r} missing from the group table")
            qlayers[entry["id"]] = _read_quantized(blob, entry, patterns[entry["id"]])

    profile = header["profile"]
    cm = CompressedModel(
        name=header["name"],
        input_shape=tuple(header["input_shape"]),
        layers=layers,
        groups=groups,
        qlayers=qlayers,
        profile=ProfileInfo(
            name=profile["name"],
            quant_bits=tuple(profile["quant_bits"]),
            es_weights=tuple(profile["es_weights"]),
            seed=profile["seed"],
            candidates=profile["candidates"],
            exhaustive=profile["exhaustive"],
            block_k=profile["block_k"],
            cost_mode=profile["cost_mode"],
        ),
        base_payload_nbytes=header["base_payload_nbytes"],
    )
    cm.validate()
    return cm


def _read_quantized(blob: bytes, entry: dict, pattern: KernelPattern) -> QuantizedConv:
    meta = entry["quantized"]
    shape = tuple(meta["shape"])
    bits = meta["bitwidth"]
    scales = _read_f32(blob, meta["scales"], entry["id"])
    packed = _read_raw(blob, meta["packed"]["offset"], meta["packed"]["nbytes"], entry["id"])
    out_ch, in_ch, kh, kw = shape
    q = np.zeros(shape, dtype=np.int32)
    cursor = 0
    if meta["block_k"] is None:
        per_slice = math.ceil(pattern.n * bits / 8)
        flat = q.reshape(out_ch * in_ch, kh, kw)
        for s in range(out_ch * in_ch):
            values = unpack_ints(packed[cursor:cursor + per_slice], pattern.n, bits)
            cursor += per_slice
            for (r, c), v in zip(pattern.positions, values):
                flat[s, r, c] = v
    else:
        k = meta["block_k"]
        count = out_ch * in_ch
        keep = sorted(r * k + c for r, c in pattern.positions)
        q_flat = q.reshape(-1)
        for j in range(scales.size):
            lo = j * k * k
            idxs = [lo + idx for idx in keep if lo + idx < count]
            nbytes = math.ceil(len(idxs) * bits / 8)
            values = unpack_ints(packed[cursor:cursor + nbytes], len(idxs), bits)
            cursor += nbytes
            for f, v in zip(idxs, values):
                q_flat[f] = v
    if cursor != len(packed):
        raise FormatError(f"layer {entry['id']!r}: packed section has {len(packed) - cursor} stray bytes")
    return QuantizedConv(shape=shape, bitwidth=bits, q=q, scales=scales, block_k=meta["block_k"])


def save_compressed(cm: CompressedModel, path) -> None:
    Path(path).write_bytes(serialize_compressed(cm))


def load_compressed(path) -> CompressedModel:
    return deserialize_compressed(Path(path).read_bytes())


def sniff_format(path) -> str:
    """Return 'dense' or 'compressed' from a file's magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(5)
    if magic == MAGIC_DENSE:
        return "dense"
    if magic == MAGIC_COMPRESSED:
        return "compressed"
    raise FormatError(f"{path}: unrecognized magic {magic!r}")


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _assemble(magic: bytes, header: dict, blob: bytes) -> bytes:
    header_raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return magic + struct.pack("<I", len(header_raw)) + header_raw + blob


def _split(data: bytes, magic: bytes, what: str) -> tuple[dict, bytes]:
    if len(data) < 9 or data[:5] != magic:
        raise FormatError(f"not a {what} container (bad magic)")
    (header_len,) = struct.unpack("<I", data[5:9])
    if len(data) < 9 + header_len:
        raise FormatError(f"{what} container truncated inside the header")
    try:
        header = json.loads(data[9:9 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{what} header is not valid JSON: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"format-version mismatch: file has {version}, expected {FORMAT_VERSION}")
    blob = data[9 + header_len:]
    if len(blob) != header.get("payload_nbytes"):
        raise FormatError(
            f"{what} payload truncated: expected {header.get('payload_nbytes')} bytes, got {len(blob)}"
        )
    return header, blob


def _read_raw(blob: bytes, offset: int, nbytes: int, layer_id: str) -> bytes:
    if offset < 0 or nbytes < 0 or offset + nbytes > len(blob):
        raise FormatError(f"layer {layer_id!r}: section [{offset}, {offset + nbytes}) outside payload")
    return blob[offset:offset + nbytes]


def _read_f32(blob: bytes, ref: dict, layer_id: str) -> np.ndarray:
    raw = _read_raw(blob, ref["offset"], ref["nbytes"], layer_id)
    return np.frombuffer(raw, dtype="<f4").astype(np.float32)
