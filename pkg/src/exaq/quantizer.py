"""Uniform mid-bin codec over [C, 0], calibration, and spec construction.

A spec quantizes max-subtracted (x <= 0) values with 2^M codes over [C, 0]:

    step      D = -C / 2^M
    encode    k = clamp(floor((x - C) / D), 0, 2^M - 1)
    decode    q_k = C + (k + 0.5) * D

Values below C saturate to code 0; x = 0 lands in the top code. Mid-bin
reconstruction keeps the rounding residual inside [-D/2, D/2], which is the
noise model the analytic MSE uses. Consequence: 0 itself is never exactly
representable (the top level is -D/2), and clipped values reconstruct to
C + D/2 rather than C.

Codes are kept one per byte here; packing into LUT keys is a separate concern.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .tensor_io import TensorF32


@dataclass(frozen=True)
class QuantSpec:
    bits: int
    clip: float
    delta: float
    levels: np.ndarray = field(repr=False)
    mode: str = "exaq"

    def __post_init__(self):
        if self.bits not in (2, 3, 4):
            raise ValueError(f"bits must be 2, 3 or 4, got {self.bits}")
        if not self.clip < 0:
            raise ValueError(f"clip must be < 0, got {self.clip}")
        if self.mode not in ("exaq", "naive"):
            raise ValueError(f"mode must be 'exaq' or 'naive', got {self.mode!r}")
        expected = -self.clip / (1 << self.bits)
        if not np.isclose(self.delta, expected, rtol=1e-12, atol=0.0):
            raise ValueError(f"delta {self.delta} != -clip/2^bits = {expected}")
        levels = np.asarray(self.levels, dtype=np.float64)
        ref = self.clip + (np.arange(1 << self.bits) + 0.5) * self.delta
        if levels.shape != ref.shape or not np.allclose(levels, ref, rtol=1e-12, atol=0.0):
            raise ValueError("levels must follow the mid-bin rule clip + (k+0.5)*delta")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @classmethod
    def from_clip(cls, bits: int, clip: float, mode: str = "exaq") -> "QuantSpec":
        delta = -clip / (1 << bits)
        levels = clip + (np.arange(1 << bits) + 0.5) * delta
        return cls(bits=bits, clip=float(clip), delta=float(delta), levels=levels, mode=mode)

    @property
    def n_levels(self) -> int:
        return 1 << self.bits

    def quantize(self, shifted: np.ndarray) -> np.ndarray:
        return quantize_row(shifted, self)

    def dequantize(self, codes: np.ndarray) -> np.ndarray:
        return dequantize(codes, self)


@dataclass(frozen=True)
class CalibStats:
    """Aggregate post-shift statistics over a calibration stream."""

    sigma: float
    mu: float
    min_avg: float
    n_tensors: int

    def __post_init__(self):
        if self.n_tensors < 1:
            raise ValueError("need at least one calibration tensor")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.min_avg > 0:
            raise ValueError("post-shift minima cannot be positive")


def shift_by_max(row: np.ndarray) -> np.ndarray:
    """Subtract the row maximum; output max is exactly 0."""
    row = np.asarray(row, dtype=np.float64)
    if row.size == 0:
        raise ValueError("empty row")
    if not np.all(np.isfinite(row)):
        raise ValueError("row contains non-finite values")
    return row - row.max()


def calibrate(tensors: Iterable[TensorF32]) -> CalibStats:
    """Row-wise max subtraction per tensor, then averaged per-tensor statistics.

    sigma and mu are the means of the per-tensor post-shift std (population)
    and mean; min_avg is the mean of per-tensor post-shift minima.
    """
    sigmas, mus, mins = [], [], []
    for t in tensors:
        shifted = np.vstack([shift_by_max(r) for r in t.rows()])
        sigmas.append(shifted.std())
        mus.append(shifted.mean())
        mins.append(shifted.min())
    if not sigmas:
        raise ValueError("empty calibration sequence")
    return CalibStats(
        sigma=float(np.mean(sigmas)),
        mu=float(np.mean(mus)),
        min_avg=float(np.mean(mins)),
        n_tensors=len(sigmas),
    )


def make_spec_exaq(stats: CalibStats, M: int, model) -> QuantSpec:
    """Clip from the linear sigma->C predictor; degenerate sigma uses the intercept."""
    from .clip_optimizer import predict_clip  # deferred; the modules are siblings

    predicted = predict_clip(model, stats.sigma)
    if predicted.clip >= 0:
        raise ValueError(
            f"predicted clip {predicted.clip:.4g} is not negative; "
            f"model unusable at sigma={stats.sigma:.4g}"
        )
    return QuantSpec.from_clip(M, predicted.clip, mode="exaq")


def make_spec_naive(stats: CalibStats, M: int) -> QuantSpec:
    """Full-range baseline: clip at the averaged post-shift minimum.

    Post-shift maxima are identically 0, so the averaged observed range is
    [min_avg, 0] and min_avg is the clip.
    """
    if stats.min_avg >= 0:
        raise ValueError("min_avg must be negative for the naive spec")
    return QuantSpec.from_clip(M, stats.min_avg, mode="naive")


def make_spec_dynamic(shifted_row: np.ndarray, M: int, model) -> QuantSpec:
    """Experimental per-row spec: clip predicted from this row's own std.

    Static calibration is the supported path; this exists for experiments
    comparing per-row against calibrated clipping.
    """
    row = np.asarray(shifted_row, dtype=np.float64)
    if np.any(row > 0):
        raise ValueError("expected a max-subtracted row")
    stats = CalibStats(sigma=float(row.std()), mu=float(row.mean()),
                       min_avg=float(row.min()), n_tensors=1)
    return make_spec_exaq(stats, M, model)


def quantize_row(shifted: np.ndarray, spec: QuantSpec) -> np.ndarray:
    """Encode max-subtracted values to codes in [0, 2^M - 1]."""
    x = np.asarray(shifted, dtype=np.float64)
    if np.any(x > 0):
        raise ValueError("quantizer input must be <= 0 (apply shift_by_max first)")
    k = np.floor((x - spec.clip) / spec.delta)
    return np.clip(k, 0, spec.n_levels - 1).astype(np.uint8)


def dequantize(codes: np.ndarray, spec: QuantSpec) -> np.ndarray:
    """Mid-bin reconstruction levels[k] per code."""
    k = np.asarray(codes)
    if np.any(k < 0) or np.any(k >= spec.n_levels):
        raise ValueError(f"codes out of range [0, {spec.n_levels - 1}]")
    return spec.levels[k.astype(np.intp)]
