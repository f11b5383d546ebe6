"""Per-group search over (pattern, bitwidth) driven by an efficiency score.

For every root-leaf group the search samples candidate patterns, quantizes
the masked root slices at each allowed bitwidth, scores the resulting model
against the dense baseline, and keeps the strict argmax.  The winning
pattern and bitwidth are then replicated to the leaves, each leaf keeping
its own per-slice (or per-block) scales.  1 x 1 layers are first regrouped
into 3 x 3 blocks so the same pattern machinery applies.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .compressed import CompressedGroup, CompressedModel, ProfileInfo, QuantizedConv
from .container import dense_payload_nbytes
from .cost import AnalyticCostModel
from .errors import ValidationError
from .grouping import RootGroup, find_root_groups
from .model import ModelGraph, Tensor4, deep_copy
from .patterns import (
    KernelPattern,
    apply_pattern,
    enumerate_all_patterns,
    generate_pattern,
    split_seed,
)
from .quantizer import SQNR_CAP_DB, dequantize, mp_quantize

BLOCK_K = 3  # block edge for the 1x1 -> k x k transformation

SQNR_TERM_SCALE = 40.0  # dB divisor that normalizes the SQNR addend


@dataclass
class CompressionProfile:
    """Search configuration: sparsity per kernel size, bitwidths, weights.

    ``n_map`` pins the retained count for specific kernel sizes; sizes not in
    the map fall back to a per-profile rule (hck keeps roughly two thirds of
    the kernel edge, lck keeps the full edge).
    """

    name: str
    quant_bits: tuple[int, ...]
    n_map: dict[int, int] = field(default_factory=dict)
    candidates: int = 16
    es_weights: tuple[float, float, float] = (0.3, 0.4, 0.3)
    seed: int = 0
    exhaustive: bool = False
    block_k: int = BLOCK_K

    def validate(self) -> None:
        if not self.quant_bits:
            raise ValidationError("profile declares no quantization bitwidths")
        for b in self.quant_bits:
            if b not in (4, 8, 16):
                raise ValidationError(f"profile bitwidth {b} outside supported {{4, 8, 16}}")
        if self.candidates < 1:
            raise ValidationError("candidate count must be >= 1")
        a, b, g = self.es_weights
        for w in (a, b, g):
            if not (0.0 <= w <= 1.0):
                raise ValidationError(f"efficiency-score weight {w} outside [0, 1]")
        if a + b + g <= 0.0:
            raise ValidationError("efficiency-score weights must not all be zero")
        if self.block_k < 2:
            raise ValidationError("block edge for 1x1 transformation must be >= 2")
        for d, n in self.n_map.items():
            if not (1 <= n <= d):
                raise ValidationError(f"profile keeps n={n} of a {d}x{d} kernel edge")

    def n_for(self, d: int) -> int:
        if d in self.n_map:
            n = self.n_map[d]
        elif self.name == "hck":
            n = max(1, (2 * d) // 3)
        elif self.name == "lck":
            n = d
        else:
            raise ValidationError(f"profile {self.name!r} defines no retained count for d={d}")
        if not (1 <= n <= d):
            raise ValidationError(f"retained count {n} incompatible with kernel edge {d}")
        return n


def hck_profile(seed: int = 0, candidates: int = 16, exhaustive: bool = False) -> CompressionProfile:
    """High-compression preset: 2 of 3x3 retained, 4/8-bit lanes."""
    return CompressionProfile(
        name="hck", quant_bits=(4, 8), n_map={3: 2}, candidates=candidates,
        seed=seed, exhaustive=exhaustive,
    )


def lck_profile(seed: int = 0, candidates: int = 16, exhaustive: bool = False) -> CompressionProfile:
    """Accuracy-leaning preset: 3 of 3x3 retained, 8/16-bit lanes."""
    return CompressionProfile(
        name="lck", quant_bits=(8, 16), n_map={3: 3}, candidates=candidates,
        seed=seed, exhaustive=exhaustive,
    )


PROFILE_FACTORIES = {"hck": hck_profile, "lck": lck_profile}


@dataclass
class ModelCost:
    latency: float
    energy: float | None


@dataclass
class EfficiencyScore:
    """Weighted sum of reconstruction quality and baseline-relative cost."""

    sqnr_term: float
    latency_term: float
    energy_term: float
    total: float


@dataclass
class GroupDecision:
    """Winning (pattern, bitwidth) for one group plus the quantized payloads."""

    root_id: str
    leaf_ids: tuple[str, ...]
    pattern: KernelPattern
    bitwidth: int
    score: EfficiencyScore
    payloads: dict[str, QuantizedConv]


def model_cost(model, cost, bits: dict[str, int] | None = None) -> ModelCost:
    return ModelCost(latency=cost.latency(model, bits), energy=cost.energy(model, bits))


def calculate_es(
    candidate: ModelGraph,
    mean_sqnr_db: float,
    cost,
    baseline: ModelCost,
    weights: tuple[float, float, float],
    bits: dict[str, int] | None = None,
) -> EfficiencyScore:
    """Score one candidate model against the dense baseline.

    The SQNR addend is the capped mean dB over the group's slices divided by
    40; the cost addends are baseline/candidate ratios, so improvements push
    them above 1.  When a cost model cannot report energy the energy addend
    is zero.
    """
    cand = model_cost(candidate, cost, bits)
    if cand.latency <= 0.0:
        raise ValueError("candidate model has zero latency cost")
    alpha, beta, gamma = weights
    sqnr_term = min(mean_sqnr_db, SQNR_CAP_DB) / SQNR_TERM_SCALE
    latency_term = baseline.latency / cand.latency
    if baseline.energy is None or cand.energy is None:
        energy_term = 0.0
    else:
        if cand.energy <= 0.0:
            raise ValueError("candidate model has zero energy cost")
        energy_term = baseline.energy / cand.energy
    total = alpha * sqnr_term + beta * latency_term + gamma * energy_term
    return EfficiencyScore(sqnr_term, latency_term, energy_term, total)


def blocks_from_1x1(weights: Tensor4, k: int) -> list[np.ndarray]:
    """Regroup a 1x1 conv's weights into k x k blocks.

    Weights are flattened in (out, in) row-major order and chopped into
    consecutive chunks of k*k values; each chunk reshapes row-major into a
    k x k block.  A trailing partial chunk is zero-padded with the real
    values occupying the leading row-major cells.
    """
    if k < 2:
        raise ValueError("block edge must be >= 2")
    if weights.kh != 1 or weights.kw != 1:
        raise ValueError("block transformation applies to 1x1 kernels only")
    flat = weights.data.reshape(-1)
    blocks: list[np.ndarray] = []
    for lo in range(0, flat.shape[0], k * k):
        chunk = flat[lo:lo + k * k]
        if chunk.shape[0] < k * k:
            padded = np.zeros(k * k, dtype=np.float32)
            padded[: chunk.shape[0]] = chunk
            chunk = padded
        blocks.append(chunk.reshape(k, k).copy())
    return blocks


def flatten_blocks_to_1x1(blocks: list[np.ndarray], original_count: int) -> np.ndarray:
    """Inverse of :func:`blocks_from_1x1`: first ``original_count`` values back.

    Returns the flat row-major weight vector; pad cells beyond the original
    count are discarded.  Callers reshape to the layer's (out, in, 1, 1).
    """
    if not blocks:
        raise ValueError("no blocks to flatten")
    k = blocks[0].shape[0]
    for b in blocks:
        if b.shape != (k, k):
            raise ValueError(f"inconsistent block shape {b.shape}, expected {(k, k)}")
    capacity = len(blocks) * k * k
    if not (capacity - k * k < original_count <= capacity):
        raise ValueError(f"{len(blocks)} blocks of {k}x{k} cannot hold {original_count} values")
    flat = np.concatenate([b.reshape(-1) for b in blocks])
    return flat[:original_count].astype(np.float32, copy=True)


def _quantize_kxk(weights: Tensor4, pattern: KernelPattern, bits: int):
    """Mask and quantize every slice.

    Returns (QuantizedConv, mean sqnr_db, dense float32 reconstruction).
    """
    out_ch, in_ch, kh, kw = weights.shape
    q = np.zeros(weights.shape, dtype=np.int32)
    scales = np.empty(out_ch * in_ch, dtype=np.float32)
    deq = np.zeros(weights.shape, dtype=np.float32)
    db = []
    for o in range(out_ch):
        for i in range(in_ch):
            masked = apply_pattern(weights.data[o, i], pattern)
            qr = mp_quantize(masked, bits)
            q[o, i] = qr.q_values
            scales[o * in_ch + i] = qr.scale
            deq[o, i] = dequantize(qr.q_values, qr.scale)
            db.append(qr.sqnr_db)
    qc = QuantizedConv(shape=weights.shape, bitwidth=bits, q=q, scales=scales)
    return qc, float(np.mean(db)), deq


def _quantize_1x1(weights: Tensor4, pattern: KernelPattern, bits: int, k: int):
    """Blockwise variant of :func:`_quantize_kxk` for 1x1 layers."""
    count = weights.out_ch * weights.in_ch
    blocks = blocks_from_1x1(weights, k)
    q_flat = np.zeros(count, dtype=np.int32)
    scales = np.empty(len(blocks), dtype=np.float32)
    deq_blocks = []
    db = []
    for j, block in enumerate(blocks):
        masked = apply_pattern(block, pattern)
        qr = mp_quantize(masked, bits)
        scales[j] = qr.scale
        db.append(qr.sqnr_db)
        deq_blocks.append(dequantize(qr.q_values, qr.scale))
        qb = qr.q_values.reshape(-1)
        lo = j * k * k
        hi = min(lo + k * k, count)
        q_flat[lo:hi] = qb[: hi - lo]
    deq = flatten_blocks_to_1x1(deq_blocks, count).reshape(weights.shape)
    qc = QuantizedConv(shape=weights.shape, bitwidth=bits, q=q_flat.reshape(weights.shape),
                       scales=scales, block_k=k)
    return qc, float(np.mean(db)), deq


def _candidate_patterns(n: int, d: int, profile: CompressionProfile, rng: np.random.Generator):
    if profile.exhaustive:
        return enumerate_all_patterns(n, d)
    return [generate_pattern(n, d, rng) for _ in range(profile.candidates)]


def _search_group(
    group: RootGroup,
    model: ModelGraph,
    profile: CompressionProfile,
    cost,
    baseline: ModelCost,
    rng: np.random.Generator,
    quantize,
    d: int,
) -> GroupDecision:
    """Shared search loop: candidates are scored on the root, first strict
    maximum wins, then the decision is replicated to the leaves."""
    n = profile.n_for(d)
    root_layer = model.by_id(group.root_id)
    assert root_layer.weights is not None
    candidate_model = deep_copy(model)
    candidate_root = candidate_model.by_id(group.root_id)

    best: tuple[KernelPattern, int, EfficiencyScore, QuantizedConv] | None = None
    for pattern in _candidate_patterns(n, d, profile, rng):
        for bits in profile.quant_bits:
            qc, mean_db, deq = quantize(root_layer.weights, pattern, bits)
            candidate_root.weights = Tensor4(deq)
            score = calculate_es(
                candidate_model, mean_db, cost, baseline, profile.es_weights,
                bits={group.root_id: bits},
            )
            if best is None or score.total > best[2].total:
                best = (pattern, bits, score, qc)
    assert best is not None
    pattern, bits, score, root_qc = best

    payloads = {group.root_id: root_qc}
    for leaf_id in group.leaf_ids:
        leaf = model.by_id(leaf_id)
        assert leaf.weights is not None
        payloads[leaf_id], _, _ = quantize(leaf.weights, pattern, bits)
    return GroupDecision(
        root_id=group.root_id, leaf_ids=group.leaf_ids,
        pattern=pattern, bitwidth=bits, score=score, payloads=payloads,
    )


def compress_kxk_group(
    group: RootGroup,
    model: ModelGraph,
    profile: CompressionProfile,
    cost,
    rng: np.random.Generator,
    baseline: ModelCost | None = None,
) -> GroupDecision:
    """Search one group of k x k conv layers (k > 1)."""
    root = model.by_id(group.root_id)
    assert root.weights is not None
    if root.weights.kh != root.weights.kw:
        raise ValidationError(f"layer {group.root_id!r}: non-square kernels are unsupported")
    d = root.weights.kw
    if d <= 1:
        raise ValidationError("k x k compression requires spatial dimension > 1")
    if baseline is None:
        baseline = model_cost(model, cost)
    return _search_group(group, model, profile, cost, baseline, rng, _quantize_kxk, d)


def compress_1x1_group(
    group: RootGroup,
    model: ModelGraph,
    profile: CompressionProfile,
    cost,
    rng: np.random.Generator,
    baseline: ModelCost | None = None,
) -> GroupDecision:
    """Search one group of 1x1 conv layers via the block transformation."""
    root = model.by_id(group.root_id)
    assert root.weights is not None
    if (root.weights.kh, root.weights.kw) != (1, 1):
        raise ValidationError(f"layer {group.root_id!r}: expected a 1x1 kernel")
    k = profile.block_k
    if baseline is None:
        baseline = model_cost(model, cost)

    def quantize(weights, pattern, bits):
        return _quantize_1x1(weights, pattern, bits, k)

    return _search_group(group, model, profile, cost, baseline, rng, quantize, k)


def compress_model(
    model: ModelGraph,
    profile: CompressionProfile,
    cost=None,
    workers: int = 1,
) -> CompressedModel:
    """Compress every conv group of a model under one profile.

    Groups are independent search tasks: each draws its randomness from a
    seed split on (profile seed, root id) and scores candidates against the
    immutable dense baseline, so output bytes do not depend on ``workers``.
    """
    cm, _ = compress_with_decisions(model, profile, cost=cost, workers=workers)
    return cm


def compress_with_decisions(
    model: ModelGraph,
    profile: CompressionProfile,
    cost=None,
    workers: int = 1,
) -> tuple[CompressedModel, list[GroupDecision]]:
    """Like :func:`compress_model`, but also returns the per-group decisions
    (pattern, bitwidth, efficiency-score terms) for reporting."""
    model.validate()
    profile.validate()
    if cost is None:
        cost = AnalyticCostModel()
    groups = find_root_groups(model)
    baseline = model_cost(model, cost)

    def run(group: RootGroup) -> GroupDecision:
        rng = np.random.default_rng(split_seed(profile.seed, group.root_id))
        root = model.by_id(group.root_id)
        assert root.weights is not None
        if root.weights.kw > 1:
            return compress_kxk_group(group, model, profile, cost, rng, baseline)
        return compress_1x1_group(group, model, profile, cost, rng, baseline)

    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            decisions = list(pool.map(run, groups))
    else:
        decisions = [run(g) for g in groups]

    layers = []
    qlayers: dict[str, QuantizedConv] = {}
    compressed_ids = {m for dec in decisions for m in dec.payloads}
    for layer in model.layers:
        copy = layer.copy()
        if layer.id in compressed_ids:
            copy.weights = None
        layers.append(copy)
    for dec in decisions:
        qlayers.update(dec.payloads)

    cm = CompressedModel(
        name=model.name,
        input_shape=model.input_shape,
        layers=layers,
        groups=[
            CompressedGroup(dec.root_id, dec.leaf_ids, dec.pattern, dec.bitwidth)
            for dec in decisions
        ],
        qlayers=qlayers,
        profile=ProfileInfo(
            name=profile.name,
            quant_bits=tuple(profile.quant_bits),
            es_weights=tuple(profile.es_weights),
            seed=profile.seed,
            candidates=profile.candidates,
            exhaustive=profile.exhaustive,
            block_k=profile.block_k,
            cost_mode=getattr(cost, "mode", "analytic"),
        ),
        base_payload_nbytes=dense_payload_nbytes(model),
    )
    cm.validate()
    return cm, decisions


def compression_decisions(cm: CompressedModel, decisions: list[GroupDecision] | None = None) -> list[dict]:
    """JSON-friendly view of the per-group decisions stored in a model.

    When the live ``decisions`` from the search are supplied, each entry also
    carries the efficiency-score terms (they are not part of the container).
    """
    scores = {d.root_id: d.score for d in decisions} if decisions else {}
    out = []
    for group in cm.groups:
        entry = {
            "root": group.root_id,
            "leaves": list(group.leaf_ids),
            "pattern": {
                "kind": group.pattern.kind,
                "d": group.pattern.d,
                "positions": [list(p) for p in group.pattern.positions],
            },
            "bitwidth": group.bitwidth,
        }
        score = scores.get(group.root_id)
        if score is not None:
            entry["es"] = {
                "sqnr_term": score.sqnr_term,
                "latency_term": score.latency_term,
                "energy_term": score.energy_term,
                "total": score.total,
            }
        out.append(entry)
    return out
