"""Quality metrics (luma MSE / PSNR / SSIM), the consecutive-frame PSNR
curve, and bits-per-pixel accounting rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from .frames import FrameError, VideoSequence, to_luma

PSNR_CAP_DB = 100.0
PEAK = 255.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _luma_pair(a: np.ndarray, b: np.ndarray):
    a, b = to_luma(a), to_luma(b)
    if a.shape != b.shape:
        raise FrameError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a.astype(np.float64), b.astype(np.float64)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared luma difference over all pixels."""
    fa, fb = _luma_pair(a, b)
    d = fa - fb
    return float(np.mean(d * d))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(255^2 / MSE) in dB, capped at 100 for identical frames."""
    return psnr_from_mse(mse(a, b))


def psnr_from_mse(err: float) -> float:
    if err <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(PEAK * PEAK / err))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM over all fully-interior 11x11 Gaussian windows.

    Standard parameterization: sigma 1.5, K1 0.01, K2 0.03, dynamic range
    255, weighted moments without sample-covariance correction.
    """
    fa, fb = _luma_pair(a, b)
    h, w = fa.shape
    if min(h, w) < SSIM_WINDOW:
        raise FrameError(f"frame {w}x{h} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    win = _gaussian_window()
    mu_a = _accel.corr_valid(fa, win)
    mu_b = _accel.corr_valid(fb, win)
    aa = _accel.corr_valid(fa * fa, win)
    bb = _accel.corr_valid(fb * fb, win)
    ab = _accel.corr_valid(fa * fb, win)
    var_a = aa - mu_a * mu_a
    var_b = bb - mu_b * mu_b
    cov = ab - mu_a * mu_b
    c1 = (SSIM_K1 * PEAK) ** 2
    c2 = (SSIM_K2 * PEAK) ** 2
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    return float(s.mean())


@dataclass(frozen=True)
class PsnrCurve:
    """PSNR between consecutive frames: entry t (1-based) pairs frames t, t+1."""

    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __len__(self):
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def interframe_psnr_curve(seq: VideoSequence) -> PsnrCurve:
    if len(seq) < 2:
        raise FrameError("need at least two frames for an inter-frame curve")
    return PsnrCurve(tuple(psnr(seq[i], seq[i + 1]) for i in range(len(seq) - 1)))


# ---------------------------------------------------------------------------
# Bits-per-pixel accounting. The denominator is always the original HR pixel
# volume: width * height * frame_count, eliminated frames included.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BppRow:
    label: str
    total_bits: int
    width: int
    height: int
    frame_count: int

    @property
    def bpp(self) -> float:
        return self.total_bits / (self.width * self.height * self.frame_count)

    @staticmethod
    def from_bpp(label: str, bpp: float, width: int, height: int, frame_count: int) -> "BppRow":
        return BppRow(label, int(round(bpp * width * height * frame_count)), width, height, frame_count)


def _check_denominators(rows) -> None:
    dims = {(r.width, r.height, r.frame_count) for r in rows}
    if len(dims) != 1:
        raise ValueError(f"inconsistent bpp denominators: {sorted(dims)}")


def system_bpp(components) -> BppRow:
    """Sum of the component rows (LR stream + key frames + header)."""
    components = list(components)
    if not components:
        raise ValueError("no component rows")
    _check_denominators(components)
    first = components[0]
    return BppRow(
        "system",
        sum(r.total_bits for r in components),
        first.width,
        first.height,
        first.frame_count,
    )


def bpp_saving(baseline: BppRow, system: BppRow) -> float:
    """Fraction of the baseline bpp saved: (baseline - system) / baseline."""
    _check_denominators([baseline, system])
    return (baseline.bpp - system.bpp) / baseline.bpp
