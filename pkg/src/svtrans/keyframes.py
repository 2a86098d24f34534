"""Key-frame position selection.

Two strategies: a fixed-interval progression {1, k+1, 2k+1, ...} and an
adaptive one that smooths the consecutive-frame PSNR curve with a
unit-sum Hann window, takes local maxima, and keeps them greedily from the
highest smoothed value down subject to a minimum spacing. High PSNR
between neighbours marks a static stretch, so the maximum at curve entry t
(frames t, t+1) selects frame t+1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import PsnrCurve


@dataclass(frozen=True)
class KeyFrameIndex:
    """Strictly increasing 1-based key positions, at least one."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("need at least one key frame")
        if list(idx) != sorted(set(idx)):
            raise ValueError("indices must be sorted and unique")
        if idx[0] < 1:
            raise ValueError("indices are 1-based")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i):
        return i in set(self.indices)


@dataclass(frozen=True)
class SelectionConfig:
    mode: str = "fixed"  # fixed | adaptive
    k: int = 33
    w: int = 13
    d_min: int | None = None  # defaults to k
    include_endpoints: bool = False

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if self.k < 2:
            raise ValueError("interval k must be >= 2")
        if self.w < 1 or self.w % 2 == 0:
            raise ValueError("window length w must be odd and >= 1")
        if self.spacing < 2:
            raise ValueError("minimum spacing must be >= 2")

    @property
    def spacing(self) -> int:
        return self.k if self.d_min is None else self.d_min


def fixed_interval(t: int, k: int) -> KeyFrameIndex:
    """Arithmetic progression from 1 with step k, truncated at t."""
    if t < 1:
        raise ValueError("sequence length must be >= 1")
    if k < 2:
        raise ValueError("interval k must be >= 2")
    return KeyFrameIndex(tuple(range(1, t + 1, k)))


def hann_window(w: int) -> np.ndarray:
    """Raised-cosine window of length w normalized to unit sum."""
    if w < 1 or w % 2 == 0:
        raise ValueError("window length must be odd and >= 1")
    if w == 1:
        return np.ones(1)
    n = np.arange(w, dtype=np.float64)
    win = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / (w - 1))
    return win / win.sum()


def smooth_curve(curve, w: int) -> np.ndarray:
    """Hann smoothing with reflect padding; output length unchanged."""
    values = curve.as_array() if isinstance(curve, PsnrCurve) else np.asarray(curve, dtype=np.float64)
    if w > len(values):
        raise ValueError(f"window {w} longer than curve of length {len(values)}")
    win = hann_window(w)
    if w == 1:
        return values.copy()
    pad = w // 2
    padded = np.pad(values, pad, mode="reflect")
    return np.convolve(padded, win, mode="valid")


def local_maxima(curve) -> list:
    """0-based positions of interior local maxima.

    Runs of equal values count once, reported at the run's center
    (left-center for even runs); a run touching either end of the curve is
    not a maximum.
    """
    values = np.asarray(curve, dtype=np.float64)
    n = len(values)
    maxima = []
    start = 0
    while start < n:
        end = start
        while end + 1 < n and values[end + 1] == values[start]:
            end += 1
        rises = start > 0 and values[start - 1] < values[start]
        falls = end < n - 1 and values[end + 1] < values[start]
        if rises and falls:
            maxima.append((start + end) // 2)
        start = end + 1
    return maxima


def select_adaptive(curve, cfg: SelectionConfig, t: int) -> KeyFrameIndex:
    """Adaptive key positions from the consecutive-frame PSNR curve.

    Smooth, find local maxima, map curve entry p to frame p+2 (1-based),
    then keep candidates greedily in descending smoothed value (ties to the
    lower frame) subject to the minimum spacing. Endpoints 1 and t are
    forced in afterwards when configured. Without any interior maxima the
    selection falls back to the fixed-interval progression.
    """
    values = curve.as_array() if isinstance(curve, PsnrCurve) else np.asarray(curve, dtype=np.float64)
    if t < 2 or len(values) != t - 1:
        raise ValueError(f"curve length {len(values)} does not match {t} frames")
    smoothed = smooth_curve(values, cfg.w)
    maxima = local_maxima(smoothed)
    if not maxima:
        base = fixed_interval(t, cfg.k)
        if cfg.include_endpoints:
            return KeyFrameIndex(tuple(sorted(set(base.indices) | {1, t})))
        return base
    candidates = sorted(maxima, key=lambda p: (-smoothed[p], p))
    kept = []
    for p in candidates:
        frame = p + 2  # curve entry p (0-based) pairs frames p+1, p+2
        if all(abs(frame - q) >= cfg.spacing for q in kept):
            kept.append(frame)
    if cfg.include_endpoints:
        kept.extend(i for i in (1, t) if i not in kept)
    return KeyFrameIndex(tuple(sorted(kept)))


def select_keyframes(curve, cfg: SelectionConfig, t: int) -> KeyFrameIndex:
    """Dispatch on cfg.mode; fixed mode needs no curve."""
    if cfg.mode == "fixed":
        base = fixed_interval(t, cfg.k)
        if cfg.include_endpoints:
            return KeyFrameIndex(tuple(sorted(set(base.indices) | {1, t})))
        return base
    return select_adaptive(curve, cfg, t)
