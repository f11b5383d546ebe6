"""Symmetric per-slice quantizer with SQNR reporting.

Maps a float32 kernel slice onto signed integers centered at zero:
``scale = max_abs / (2^(b-1) - 1)``, values rounded half away from zero and
clipped to the symmetric range.  SQNR compares the slice against its
dequantized reconstruction using population variance over all d*d cells
(pattern zeros included), and is capped when the error variance vanishes so
downstream scoring stays finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPPORTED_BITS = (4, 8, 16)

SQNR_CAP = 1e12  # linear; 120 dB
SQNR_CAP_DB = 120.0
ERR_VAR_FLOOR = 1e-30  # below this error variance, SQNR is reported as the cap


@dataclass
class QuantResult:
    """Quantized slice: integers, per-slice scale, and reconstruction quality."""

    q_values: np.ndarray  # int32, same shape as the input slice
    scale: float
    bitwidth: int
    sqnr_linear: float
    sqnr_db: float


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # np.round ties to even; quantization needs ties away from zero for
    # exact negation symmetry
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def mp_quantize(kernel_slice: np.ndarray, bits: int) -> QuantResult:
    """Quantize one 2-D slice at the given bitwidth.

    An all-zero slice falls back to scale 1 with all-zero integers and a
    capped SQNR; this keeps the zero case well-defined without special-casing
    callers.
    """
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"unsupported bitwidth {bits}; expected one of {SUPPORTED_BITS}")
    x = np.asarray(kernel_slice, dtype=np.float32)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D slice, got {x.ndim} dimensions")
    if not np.isfinite(x).all():
        raise ValueError("non-finite input to quantizer")

    x64 = x.astype(np.float64)
    alpha = max(abs(float(x64.min())), abs(float(x64.max())))
    max_value = 2 ** (bits - 1) - 1
    if alpha == 0.0:
        scale = 1.0
        q = np.zeros(x.shape, dtype=np.int32)
    else:
        scale = alpha / max_value
        q = _round_half_away(x64 / scale)
        q = np.clip(q, -max_value, max_value).astype(np.int32)

    err = x64 - q.astype(np.float64) * scale
    signal_var = float(np.var(x64))
    err_var = float(np.var(err))
    if err_var < ERR_VAR_FLOOR:
        sqnr_linear = SQNR_CAP
        sqnr_db = SQNR_CAP_DB
    else:
        sqnr_linear = signal_var / err_var
        sqnr_db = 10.0 * np.log10(sqnr_linear)
    return QuantResult(q_values=q, scale=scale, bitwidth=bits, sqnr_linear=sqnr_linear, sqnr_db=sqnr_db)


def dequantize(q_values: np.ndarray, scale: float) -> np.ndarray:
    """Map integers back to real space: ``q * scale``, as float32."""
    q = np.asarray(q_values)
    return (q.astype(np.float64) * float(scale)).astype(np.float32)
