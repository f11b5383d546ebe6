import math

import numpy as np
import pytest

from oracles import quantize_reference
from upaq.quantizer import SQNR_CAP, SQNR_CAP_DB, dequantize, mp_quantize

WORKED_X = np.array([[1.0, -2.0], [0.5, 0.0]], dtype=np.float32)


def test_worked_example_8bit():
    qr = mp_quantize(WORKED_X, 8)
    assert qr.scale == pytest.approx(2.0 / 127.0, rel=0, abs=0)
    assert qr.q_values.reshape(-1).tolist() == [64, -127, 32, 0]


def test_worked_example_matches_reference_script():
    q, scale, _ = quantize_reference([1.0, -2.0, 0.5, 0.0], 8)
    assert q == [64, -127, 32, 0]
    qr = mp_quantize(WORKED_X, 8)
    assert qr.q_values.reshape(-1).tolist() == q
    assert qr.scale == scale


def test_reference_agrees_on_random_slices():
    rng = np.random.default_rng(11)
    for bits in (4, 8, 16):
        for _ in range(200):
            x = rng.normal(size=(3, 3)).astype(np.float32)
            qr = mp_quantize(x, bits)
            q_ref, scale_ref, sqnr_ref = quantize_reference(x.reshape(-1).tolist(), bits)
            assert qr.q_values.reshape(-1).tolist() == q_ref
            assert qr.scale == scale_ref
            assert qr.sqnr_linear == pytest.approx(sqnr_ref, rel=1e-12)


def test_all_zero_slice_fallback():
    qr = mp_quantize(np.zeros((3, 3), dtype=np.float32), 4)
    assert qr.scale == 1.0
    assert not qr.q_values.any()
    assert qr.sqnr_linear == SQNR_CAP
    assert qr.sqnr_db == SQNR_CAP_DB


def test_exact_multiples_reach_the_cap():
    x = np.array([[-1.5, 0.0], [1.5, 0.0]], dtype=np.float32)  # +/- alpha and zeros
    qr = mp_quantize(x, 8)
    assert np.array_equal(dequantize(qr.q_values, qr.scale), x)
    assert qr.sqnr_linear == SQNR_CAP


def test_dequantize_worked_example():
    q = np.array([[64, -127], [32, 0]], dtype=np.int32)
    out = dequantize(q, 2.0 / 127.0)
    expect = np.array([[64 * 2.0 / 127.0, -2.0], [32 * 2.0 / 127.0, 0.0]], dtype=np.float32)
    assert np.array_equal(out, expect)


def test_16bit_roundtrip_bound_on_random_slices():
    rng = np.random.default_rng(12)
    for _ in range(100):
        x = rng.uniform(-1, 1, (3, 3)).astype(np.float32)
        qr = mp_quantize(x, 16)
        bound = qr.scale / 2.0
        assert np.all(np.abs(x.astype(np.float64) - dequantize(qr.q_values, qr.scale).astype(np.float64)) <= bound + 1e-7)


@pytest.mark.parametrize("bits", [4, 8, 16])
def test_roundtrip_bound_and_sqnr_floor(bits):
    rng = np.random.default_rng(13)
    for _ in range(500):
        d = int(rng.integers(2, 6))
        # max-abs <= 1: the f32 dequantize error then stays below the 1e-7 slack
        x = (rng.uniform(-1.0, 1.0, (d, d)) * rng.uniform(0.05, 1.0)).astype(np.float32)
        qr = mp_quantize(x, bits)
        xhat = dequantize(qr.q_values, qr.scale).astype(np.float64)
        assert np.all(np.abs(x.astype(np.float64) - xhat) <= qr.scale / 2.0 + 1e-7)
        floor = float(np.var(x.astype(np.float64))) / (qr.scale / 2.0) ** 2
        assert qr.sqnr_linear >= floor * (1.0 - 1e-9)


def test_scale_shrinks_with_more_bits():
    rng = np.random.default_rng(14)
    for _ in range(50):
        x = rng.normal(size=(3, 3)).astype(np.float32)
        scales = [mp_quantize(x, b).scale for b in (4, 8, 16)]
        assert scales[2] < scales[1] < scales[0]


def test_negation_symmetry_exact():
    rng = np.random.default_rng(15)
    for bits in (4, 8, 16):
        for _ in range(200):
            x = rng.normal(size=(3, 3)).astype(np.float32)
            assert np.array_equal(mp_quantize(-x, bits).q_values, -mp_quantize(x, bits).q_values)


def test_sqnr_monotone_in_bits_on_fixture_slices(toy_cnn):
    model, _ = toy_cnn
    for layer in model.conv_layers():
        w = layer.weights
        for o in range(w.out_ch):
            for i in range(w.in_ch):
                dbs = [mp_quantize(w.data[o, i], b).sqnr_db for b in (4, 8, 16)]
                assert dbs[0] <= dbs[1] <= dbs[2]


def test_unsupported_bitwidth_and_nonfinite_input():
    with pytest.raises(ValueError, match="unsupported bitwidth"):
        mp_quantize(np.zeros((2, 2), dtype=np.float32), 5)
    bad = np.array([[np.inf, 0.0], [0.0, 0.0]], dtype=np.float32)
    with pytest.raises(ValueError, match="non-finite"):
        mp_quantize(bad, 8)


def test_half_away_from_zero_tie_handling():
    # 0.5/scale lands exactly on a representable tie for alpha = max_value/2
    x = np.array([[63.5, -63.5], [127.0, 0.0]], dtype=np.float32)
    qr = mp_quantize(x, 8)
    assert qr.scale == 1.0
    assert qr.q_values.reshape(-1).tolist() == [64, -64, 127, 0]
    assert 10.0 * math.log10(qr.sqnr_linear) == pytest.approx(qr.sqnr_db)
