import json
import struct

import numpy as np
import pytest

import upaq
from oracles import read_container, recount_compressed_payload, recount_dense_payload
from upaq.compressed import dequantized_weights
from upaq.container import (
    compressed_payload_nbytes,
    dense_payload_nbytes,
    deserialize_compressed,
    deserialize_model,
    load_model,
    pack_ints,
    pack_mask,
    save_compressed,
    save_model,
    serialize_compressed,
    serialize_model,
    unpack_ints,
)
from upaq.errors import FormatError, ValidationError
from upaq.patterns import enumerate_all_patterns


# ---------------------------------------------------------------------------
# bit packing
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("bits,lo,hi", [(4, -7, 7), (8, -127, 127), (16, -32767, 32767)])
def test_pack_roundtrip_extremes(bits, lo, hi):
    values = [lo, hi, 0, lo + 1, hi - 1, -1, 1]
    assert unpack_ints(pack_ints(values, bits), len(values), bits) == values


def test_pack_roundtrip_random():
    rng = np.random.default_rng(7)
    for bits in (4, 8, 16):
        half = 2 ** (bits - 1) - 1
        for _ in range(50):
            n = int(rng.integers(1, 40))
            values = [int(v) for v in rng.integers(-half, half + 1, n)]
            packed = pack_ints(values, bits)
            assert len(packed) == (n * bits + 7) // 8
            assert unpack_ints(packed, n, bits) == values


def test_mask_roundtrip_all_patterns():
    from upaq.container import _positions_from_mask

    for d in range(1, 6):
        for n in range(1, d + 1):
            for pat in enumerate_all_patterns(n, d):
                mask = pack_mask(pat)
                assert len(mask) == (d * d + 7) // 8
                assert _positions_from_mask(mask, d) == tuple(sorted(pat.positions))


# ---------------------------------------------------------------------------
# dense container
# ---------------------------------------------------------------------------

def test_dense_roundtrip_is_byte_identical(toy_cnn, tmp_path):
    model, _ = toy_cnn
    path = tmp_path / "toycnn_v1.upaq"
    save_model(model, path)
    reloaded = load_model(path)
    assert serialize_model(reloaded) == path.read_bytes()
    assert [l.id for l in reloaded.layers] == [l.id for l in model.layers]
    for a, b in zip(model.layers, reloaded.layers):
        if a.weights is not None:
            assert np.array_equal(a.weights.data, b.weights.data)


def test_fixture_file_shape(toy_cnn, tmp_path):
    model, _ = toy_cnn
    path = tmp_path / "toycnn_v1.upaq"
    save_model(model, path)
    reloaded = load_model(path)
    assert len(reloaded.layers) == 6
    assert reloaded.input_shape == (1, 16, 16)


def test_truncated_blob_rejected(toy_cnn):
    model, _ = toy_cnn
    data = serialize_model(model)
    with pytest.raises(FormatError, match="truncated"):
        deserialize_model(data[:-8])


def test_bad_magic_rejected(toy_cnn):
    model, _ = toy_cnn
    data = serialize_model(model)
    with pytest.raises(FormatError, match="magic"):
        deserialize_model(b"NOPE!" + data[5:])


def test_format_version_mismatch(toy_cnn):
    model, _ = toy_cnn
    data = serialize_model(model)
    (hlen,) = struct.unpack("<I", data[5:9])
    header = json.loads(data[9:9 + hlen])
    header["format_version"] = 99
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    patched = data[:5] + struct.pack("<I", len(raw)) + raw + data[9 + hlen:]
    with pytest.raises(FormatError, match="format-version mismatch"):
        deserialize_model(patched)


def test_nan_weight_refuses_to_serialize(toy_cnn):
    model, _ = toy_cnn
    broken = upaq.deep_copy(model)
    broken.by_id("conv1").weights.data[0, 0, 0, 0] = np.nan
    with pytest.raises(ValidationError, match="non-finite"):
        serialize_model(broken)


def test_unwritable_path_raises_oserror(toy_cnn):
    model, _ = toy_cnn
    with pytest.raises(OSError):
        save_model(model, "/nonexistent_dir_upaq/m.upaq")


def test_dense_payload_matches_independent_recount(toy_cnn, tmp_path):
    model, _ = toy_cnn
    path = tmp_path / "m.upaq"
    save_model(model, path)
    assert recount_dense_payload(path) == dense_payload_nbytes(model)


# ---------------------------------------------------------------------------
# compressed container
# ---------------------------------------------------------------------------

def test_compressed_roundtrip_bytes(toy_cnn_hck, tmp_path):
    data = serialize_compressed(toy_cnn_hck)
    cm2 = deserialize_compressed(data)
    assert serialize_compressed(cm2) == data


def test_compressed_roundtrip_preserves_dequantized_weights(toy_cnn_hck, tmp_path):
    path = tmp_path / "m.upaqc"
    save_compressed(toy_cnn_hck, path)
    reloaded = upaq.load_compressed(path)
    for layer_id, qc in toy_cnn_hck.qlayers.items():
        assert np.array_equal(dequantized_weights(qc), dequantized_weights(reloaded.qlayers[layer_id]))


def test_compressed_payload_matches_recounts(toy_cnn_hck, toy_cnn_lck, tmp_path):
    from upaq.evaluate import recount_payload_nbytes

    for name, cm in (("hck", toy_cnn_hck), ("lck", toy_cnn_lck)):
        path = tmp_path / f"{name}.upaqc"
        save_compressed(cm, path)
        _, header, payload = read_container(path)
        assert header["payload_nbytes"] == len(payload)
        assert compressed_payload_nbytes(cm) == len(payload)
        assert recount_payload_nbytes(cm) == len(payload)
        assert recount_compressed_payload(path) == len(payload)


def test_compressed_1x1_roundtrip(toy_1x1):
    model, _ = toy_1x1
    cm = upaq.compress_model(model, upaq.lck_profile(seed=42))
    data = serialize_compressed(cm)
    cm2 = deserialize_compressed(data)
    assert serialize_compressed(cm2) == data
    for lid in cm.qlayers:
        assert np.array_equal(dequantized_weights(cm.qlayers[lid]), dequantized_weights(cm2.qlayers[lid]))


def test_truncated_compressed_rejected(toy_cnn_hck):
    data = serialize_compressed(toy_cnn_hck)
    with pytest.raises(FormatError, match="truncated"):
        deserialize_compressed(data[:-4])
