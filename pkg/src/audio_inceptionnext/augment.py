"""SpecAugment-style frequency masking, time masking and time warping on (T, F) spectrograms."""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields, replace
from typing import Dict, List, Optional

import numpy as np

from .dsp import Spectrogram

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentPolicy:
    """Mask/warp sizes. ``mask_value=None`` fills masks with the spectrogram mean."""

    freq_mask_max: int = 27
    freq_masks: int = 2
    time_mask_max: int = 25
    time_masks: int = 2
    time_warp_w: int = 5
    mask_value: Optional[float] = None
    enabled: bool = True

    @classmethod
    def disabled(cls) -> "AugmentPolicy":
        return cls(enabled=False)

    def scaled_to(self, frames: int, bins: int) -> "AugmentPolicy":
        """Clamp mask widths to the spectrogram; time masks never exceed T/8."""
        return replace(
            self,
            freq_mask_max=min(self.freq_mask_max, bins),
            time_mask_max=min(self.time_mask_max, frames // 8),
        )

    def validate(self, frames: int, bins: int) -> None:
        if min(self.freq_mask_max, self.freq_masks, self.time_mask_max, self.time_masks, self.time_warp_w) < 0:
            raise ValueError("augment policy sizes and counts must be non-negative")
        if self.freq_mask_max > bins:
            raise ValueError(f"freq_mask_max {self.freq_mask_max} exceeds F={bins}")
        if self.time_mask_max > frames:
            raise ValueError(f"time_mask_max {self.time_mask_max} exceeds T={frames}")

    def to_dict(self) -> Dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _check_axis(kind: str, max_width: int, count: int, extent: int, label: str) -> None:
    if max_width < 0 or count < 0:
        raise ValueError(f"{kind} mask width and count must be non-negative")
    if max_width > extent:
        raise ValueError(f"{kind}_mask_max {max_width} exceeds {label}={extent}")


def _fill(values: np.ndarray, policy: AugmentPolicy) -> np.float32:
    return np.float32(values.mean() if policy.mask_value is None else policy.mask_value)


def _mask_axis(spec: Spectrogram, axis: int, max_width: int, count: int, fill, rng) -> Spectrogram:
    values = spec.values.copy()
    extent = values.shape[axis]
    for _ in range(count):
        width = int(rng.integers(0, max_width + 1))
        start = int(rng.integers(0, extent - width + 1))
        if axis == 0:
            values[start : start + width, :] = fill
        else:
            values[:, start : start + width] = fill
    return Spectrogram(values, spec.config)


def freq_mask(spec: Spectrogram, policy: AugmentPolicy, rng: np.random.Generator) -> Spectrogram:
    """Set ``freq_masks`` random column bands of width ``U{0..freq_mask_max}`` to the fill value."""
    _check_axis("freq", policy.freq_mask_max, policy.freq_masks, spec.values.shape[1], "F")
    fill = _fill(spec.values, policy)
    return _mask_axis(spec, 1, policy.freq_mask_max, policy.freq_masks, fill, rng)


def time_mask(spec: Spectrogram, policy: AugmentPolicy, rng: np.random.Generator) -> Spectrogram:
    """Set ``time_masks`` random row bands of width ``U{0..time_mask_max}`` to the fill value."""
    _check_axis("time", policy.time_mask_max, policy.time_masks, spec.values.shape[0], "T")
    fill = _fill(spec.values, policy)
    return _mask_axis(spec, 0, policy.time_mask_max, policy.time_masks, fill, rng)


def warp_time_axis(values: np.ndarray, anchor: int, shift: int) -> np.ndarray:
    """Piecewise-linear resample of the rows so that output row ``anchor + shift`` is input row ``anchor``.

    Rows 0 and T-1 stay fixed; rows in between are linearly interpolated.
    """
    t = values.shape[0]
    dest = min(max(anchor + shift, 1), t - 2)
    out_pos = np.arange(t, dtype=np.float64)
    src = np.interp(out_pos, [0.0, dest, t - 1.0], [0.0, float(anchor), t - 1.0])
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, t - 1)
    frac = (src - lo)[:, None]
    warped = values[lo] * (1.0 - frac) + values[hi] * frac
    return warped.astype(values.dtype)


def time_warp(
    spec: Spectrogram, policy: AugmentPolicy, rng: np.random.Generator, events: Optional[List[str]] = None
) -> Spectrogram:
    """Random piecewise-linear warp of the time axis.

    Skipped (input returned, ``"time_warp_skipped"`` appended to ``events``)
    when ``T <= 2 * time_warp_w`` or the warp width is zero.
    """
    w = policy.time_warp_w
    t = spec.values.shape[0]
    if w == 0 or t <= 2 * w:
        if w > 0:
            logger.debug("time warp skipped: T=%d <= 2*w=%d", t, 2 * w)
            if events is not None:
                events.append("time_warp_skipped")
        return spec
    anchor = int(rng.integers(w, t - w))
    shift = int(rng.integers(-w, w + 1))
    if shift == 0:
        return Spectrogram(spec.values.copy(), spec.config)
    return Spectrogram(warp_time_axis(spec.values, anchor, shift), spec.config)


def augment(
    spec: Spectrogram, policy: AugmentPolicy, rng: np.random.Generator, events: Optional[List[str]] = None
) -> Spectrogram:
    """Time warp, then frequency masks, then time masks. Identity when the policy is disabled."""
    if not policy.enabled:
        return spec
    if policy.mask_value is None:
        policy = replace(policy, mask_value=float(spec.values.mean()))
    out = time_warp(spec, policy, rng, events)
    out = freq_mask(out, policy, rng)
    return time_mask(out, policy, rng)
