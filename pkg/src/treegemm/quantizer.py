"""Uniform asymmetric quantization of tabular data and leaf-value vectors.

Features are calibrated independently (one scale/zero-point per column);
leaf values are calibrated globally (one pair for the whole matrix). The
affine map is q = clamp(round(x / scale) + zero_point, 0, 2^bits - 1) with
round half-away-from-zero, and calibration pins q(min) = 0 and
q(max) = 2^bits - 1 exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


def _round_half_away(v):
    """Round half away from zero (np.round rounds half to even)."""
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


@dataclass(frozen=True)
class QuantParams:
    """Affine quantization parameters for one feature or one leaf matrix.

    scale: raw units per integer step, > 0.
    zero_point: integer offset so the calibration minimum maps to 0.
    bits: width of the unsigned output range [0, 2^bits - 1].
    """

    scale: float
    zero_point: int
    bits: int

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InvalidInputError(f"scale must be a positive finite real, got {self.scale}")
        if self.bits < 1:
            raise InvalidInputError(f"bits must be >= 1, got {self.bits}")

    @property
    def qmax(self) -> int:
        return (1 << self.bits) - 1

    def to_dict(self) -> dict:
        return {"scale": float(self.scale), "zero_point": int(self.zero_point), "bits": int(self.bits)}

    @classmethod
    def from_dict(cls, d: dict) -> "QuantParams":
        return cls(scale=float(d["scale"]), zero_point=int(d["zero_point"]), bits=int(d["bits"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "QuantParams":
        return cls.from_dict(json.loads(s))


@dataclass
class QuantizedDataset:
    """Integer feature matrix plus the per-column parameters that produced it."""

    values: np.ndarray                  # (rows, features) int64
    per_feature_params: list[QuantParams]
    labels: np.ndarray | None = None    # class indices or regression targets, never quantized

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


def _fit_column(col: np.ndarray, bits: int) -> QuantParams:
    """Calibrate one column: scale from the min/max span, zero-point so min -> 0.

    A constant column has no span; it falls back to scale 1 so every value
    maps to 0 and downstream stays total.
    """
    lo = float(col.min())
    hi = float(col.max())
    qmax = (1 << bits) - 1
    scale = (hi - lo) / qmax
    if scale == 0.0:
        # Constant column, or a span too small for float64 to spread over the
        # code range: no representable scale can saturate it, so degenerate.
        return QuantParams(scale=1.0, zero_point=-int(_round_half_away(lo)), bits=bits)
    # q(lo) = 0 holds identically (the zero-point cancels its own rounding),
    # but when |lo| dwarfs the span, hi/scale and lo/scale are so large that
    # their rounded difference can fall one short of qmax. Shrink the scale
    # geometrically (doubling the relative step from 1 ulp) until the top of
    # the range saturates; clamping absorbs any overshoot. Clean spans exit
    # on the first pass with the exact span / qmax value.
    zp = -int(_round_half_away(lo / scale))
    for attempt in range(60):
        q_hi = int(_round_half_away(hi / scale)) + zp
        if q_hi >= qmax:
            break
        scale *= 1.0 - 2.0 ** (-52 + attempt)
        zp = -int(_round_half_away(lo / scale))
    return QuantParams(scale=scale, zero_point=zp, bits=bits)


def quantize(x, params: QuantParams):
    """Quantize a scalar or array to the unsigned integer grid of `params`.

    Out-of-calibration-range inputs clamp into [0, 2^bits - 1]; that bound is
    what the downstream bit-width provisioning relies on.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("cannot quantize non-finite values")
    q = _round_half_away(arr / params.scale) + params.zero_point
    q = np.clip(q, 0, params.qmax).astype(np.int64)
    return int(q) if np.isscalar(x) or arr.ndim == 0 else q


def dequantize(q, params: QuantParams):
    """Inverse affine map: (q - zero_point) * scale."""
    arr = np.asarray(q, dtype=np.float64)
    x = (arr - params.zero_point) * params.scale
    return float(x) if arr.ndim == 0 else x


def train_quantizer(X, bits: int) -> tuple[QuantizedDataset, list[QuantParams]]:
    """Calibrate and quantize a feature matrix, one QuantParams per column.

    Args:
        X: real-valued matrix, rows = examples, columns = features.
        bits: target bit-width p >= 1.

    Returns:
        (QuantizedDataset, per-column params). Every output column lies in
        [0, 2^bits - 1], with the column min at 0 and the column max at
        2^bits - 1 (constant columns collapse to 0).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.size == 0:
        raise InvalidInputError("cannot calibrate an empty matrix")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("calibration data contains non-finite values")
    if bits < 1:
        raise InvalidInputError(f"bits must be >= 1, got {bits}")
    params = [_fit_column(X[:, j], bits) for j in range(X.shape[1])]
    cols = [quantize(X[:, j], params[j]) for j in range(X.shape[1])]
    values = np.stack(cols, axis=1)
    return QuantizedDataset(values=values, per_feature_params=params), params


def quantize_rows(X, params: list[QuantParams]) -> np.ndarray:
    """Quantize inference rows with previously calibrated per-column params."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != len(params):
        raise InvalidInputError(f"expected {len(params)} columns, got {X.shape[1]}")
    return np.stack([quantize(X[:, j], params[j]) for j in range(X.shape[1])], axis=1)


def quantize_leaves(L, bits: int) -> tuple[np.ndarray, QuantParams]:
    """Quantize a leaf-value matrix with a single global scale/zero-point.

    Unlike features, leaves share one calibration over the entire matrix; the
    returned integers all lie in [0, 2^bits - 1].
    """
    L = np.asarray(L, dtype=np.float64)
    if L.size == 0:
        raise InvalidInputError("cannot quantize an empty leaf matrix")
    if not np.all(np.isfinite(L)):
        raise InvalidInputError("leaf matrix contains non-finite values")
    params = _fit_column(L.reshape(-1), bits)
    return quantize(L, params), params
