"""Local affine quantization, kept self-contained on purpose.

The exporter re-implements the scale/zero-point formulas instead of
importing the engine package, so the emitted IR is the only coupling
between the two; the golden tests pin these functions to the engine's
published values.
"""

from __future__ import annotations

import numpy as np


def round_half_away(v):
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def fit_params(values, bits: int) -> dict:
    """Scale/zero-point over [min, max] with q(min) = 0; constant spans
    degenerate to scale 1 so everything maps to code 0."""
    arr = np.asarray(values, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    qmax = (1 << bits) - 1
    scale = (hi - lo) / qmax
    if scale == 0.0:
        return {"scale": 1.0, "zero_point": -int(round_half_away(lo)), "bits": bits}
    zp = -int(round_half_away(lo / scale))
    return {"scale": scale, "zero_point": zp, "bits": bits}


def quantize(values, params: dict):
    q = round_half_away(np.asarray(values, dtype=np.float64) / params["scale"]) + params["zero_point"]
    return np.clip(q, 0, (1 << params["bits"]) - 1).astype(np.int64)


def quantize_columns(X, bits: int) -> tuple[np.ndarray, list[dict]]:
    """Per-column calibration + quantization, one params dict per feature."""
    X = np.asarray(X, dtype=np.float64)
    params = [fit_params(X[:, j], bits) for j in range(X.shape[1])]
    cols = [quantize(X[:, j], params[j]) for j in range(X.shape[1])]
    return np.stack(cols, axis=1), params
