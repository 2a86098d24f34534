"""Redundant-frame detection, dropping, and copy-back restoration.

A frame is redundant when BOTH its global luma MSE and its motion-region
MSE against the last non-redundant frame fall under their thresholds. The
motion region is the set of pixels whose absolute gray difference exceeds
the mask threshold m; an empty region contributes motion MSE 0. Frame 1 is
never redundant. Comparisons use <= (boundary equality counts as
redundant). Detection runs on luma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from .frames import FrameError, VideoSequence, to_luma


@dataclass(frozen=True)
class RedundancyConfig:
    tau_int: float = 0.5
    tau_mot: float = 15.0
    m: int = 2

    def __post_init__(self):
        if self.tau_int < 0 or self.tau_mot < 0 or self.m < 0:
            raise ValueError("thresholds must be >= 0")


@dataclass(frozen=True)
class RedundancyIndex:
    """Strictly increasing 1-based positions of redundant frames; never 1."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if list(idx) != sorted(set(idx)):
            raise ValueError("indices must be sorted and unique")
        if idx and idx[0] < 2:
            raise ValueError("frame 1 can never be redundant")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i):
        return i in set(self.indices)

    def validate_for(self, t: int) -> None:
        if self.indices and self.indices[-1] > t:
            raise ValueError(f"index {self.indices[-1]} out of range for {t} frames")


@dataclass(frozen=True)
class MotionMask:
    mask: np.ndarray

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def shape(self):
        return self.mask.shape


def motion_mask(cur: np.ndarray, last: np.ndarray, m: int) -> MotionMask:
    """Pixels whose absolute gray difference exceeds m."""
    a, b = to_luma(cur), to_luma(last)
    if a.shape != b.shape:
        raise FrameError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = np.abs(a.astype(np.int64) - b.astype(np.int64))
    return MotionMask(diff > m)


def motion_region_mse(cur: np.ndarray, last: np.ndarray, mask: MotionMask) -> float:
    """Mean squared luma difference over masked pixels; 0 for an empty mask."""
    a, b = to_luma(cur), to_luma(last)
    if a.shape != b.shape:
        raise FrameError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if mask.shape != a.shape:
        raise FrameError(f"mask shape {mask.shape} does not match frames {a.shape}")
    n = mask.count
    if n == 0:
        return 0.0
    d = a.astype(np.float64) - b.astype(np.float64)
    return float((d[mask.mask] ** 2).sum() / n)


def detect_redundant(seq: VideoSequence, cfg: RedundancyConfig, keep=()) -> RedundancyIndex:
    """Sequential scan marking frames redundant against the last kept frame.

    `keep` lists 1-based positions that must survive regardless (the end
    node exempts key-frame positions); a kept frame becomes the new
    reference like any other non-redundant frame.
    """
    keep = set(int(k) for k in keep)
    lumas = [to_luma(f) for f in seq.frames]
    npix = lumas[0].size
    ref = lumas[0]
    redundant = []
    for t in range(2, len(seq) + 1):
        cur = lumas[t - 1]
        if t in keep:
            ref = cur
            continue
        total_sq, motion_sq, motion_n = _accel.pair_stats(cur, ref, cfg.m)
        global_mse = total_sq / npix
        motion_mse = motion_sq / motion_n if motion_n else 0.0
        if global_mse <= cfg.tau_int and motion_mse <= cfg.tau_mot:
            redundant.append(t)
        else:
            ref = cur
    return RedundancyIndex(tuple(redundant))


def drop_redundant(seq: VideoSequence, idx: RedundancyIndex) -> VideoSequence:
    """Remove the indexed frames, preserving order."""
    idx.validate_for(len(seq))
    dropped = set(idx)
    frames = [f for i, f in enumerate(seq.frames, start=1) if i not in dropped]
    return seq.replace_frames(frames)


def restore_redundant(seq: VideoSequence, idx: RedundancyIndex, total: int | None = None) -> VideoSequence:
    """Refill redundant positions by copying the preceding surviving frame."""
    if total is None:
        total = len(seq) + len(idx)
    if len(seq) + len(idx) != total:
        raise FrameError(
            f"{len(seq)} surviving + {len(idx)} redundant != {total} total frames"
        )
    idx.validate_for(total)
    dropped = set(idx)
    frames = []
    it = iter(seq.frames)
    for t in range(1, total + 1):
        if t in dropped:
            frames.append(frames[-1])
        else:
            frames.append(next(it))
    return seq.replace_frames(frames)


def surviving_positions(total: int, idx: RedundancyIndex) -> list:
    """1-based original positions that survive dropping."""
    dropped = set(idx)
    return [t for t in range(1, total + 1) if t not in dropped]
