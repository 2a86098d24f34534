"""Bicubic 4x spatial resampling (Keys kernel, a = -0.5).

Grid convention: output pixel x of the 4x-downsampled image sits at source
coordinate 4x + 1.5 in 0-based sample centers (align-centers for scale 4);
upsampling inverts it, mapping output X to source (X - 1.5) / 4. Edges are
clamp-to-edge. Arithmetic runs in float64; quantization to uint8 happens
only at storage boundaries.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from .frames import FrameError, VideoSequence, quantize_u8

KERNEL_A = -0.5
SCALE = 4


def kernel_weight(t: float) -> float:
    """Keys piecewise-cubic interpolation kernel with a = -0.5."""
    a = KERNEL_A
    t = abs(float(t))
    if t < 1.0:
        return (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0
    if t < 2.0:
        return a * (t**3 - 5.0 * t**2 + 8.0 * t - 4.0)
    return 0.0


_kernel_vec = np.vectorize(kernel_weight, otypes=[np.float64])


def _tap_table(out_len: int, src_len: int, down: bool):
    """Per-output source indices (out,4) and weights (out,4) for one axis."""
    o = np.arange(out_len, dtype=np.float64)
    src = SCALE * o + 1.5 if down else (o - 1.5) / SCALE
    base = np.floor(src).astype(np.int64)
    idx = base[:, None] + np.arange(-1, 3, dtype=np.int64)[None, :]
    wts = _kernel_vec(src[:, None] - idx)
    idx = np.clip(idx, 0, src_len - 1)
    return np.ascontiguousarray(idx), np.ascontiguousarray(wts)


def _resample_plane(plane: np.ndarray, out_h: int, out_w: int, down: bool) -> np.ndarray:
    plane = np.ascontiguousarray(plane, dtype=np.float64)
    idx, wts = _tap_table(out_h, plane.shape[0], down)
    tmp = _accel.resample_rows(plane, idx, wts)
    idx, wts = _tap_table(out_w, plane.shape[1], down)
    return _accel.resample_rows(np.ascontiguousarray(tmp.T), idx, wts).T


def downsample_plane(plane: np.ndarray) -> np.ndarray:
    """4x bicubic downsample of one real-valued plane (no quantization)."""
    h, w = plane.shape
    if h % SCALE or w % SCALE:
        raise FrameError(f"dimensions {w}x{h} not divisible by {SCALE}")
    return _resample_plane(plane, h // SCALE, w // SCALE, down=True)


def upsample_plane(plane: np.ndarray) -> np.ndarray:
    """4x bicubic upsample of one real-valued plane (no quantization)."""
    h, w = plane.shape
    return _resample_plane(plane, h * SCALE, w * SCALE, down=False)


def _per_channel(frame: np.ndarray, fn) -> np.ndarray:
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim == 2:
        return fn(arr)
    return np.stack([fn(arr[:, :, c]) for c in range(arr.shape[2])], axis=2)


def downsample_4x(frame: np.ndarray) -> np.ndarray:
    """4x bicubic downsample of a uint8 frame, quantized back to uint8."""
    return quantize_u8(_per_channel(frame, downsample_plane))


def upsample_4x(frame: np.ndarray) -> np.ndarray:
    """4x bicubic upsample of a uint8 frame, quantized back to uint8."""
    return quantize_u8(_per_channel(frame, upsample_plane))


def downsample_sequence(seq: VideoSequence) -> VideoSequence:
    return seq.replace_frames(downsample_4x(f) for f in seq.frames)


def upsample_sequence(seq: VideoSequence) -> VideoSequence:
    return seq.replace_frames(upsample_4x(f) for f in seq.frames)
