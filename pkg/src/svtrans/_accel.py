"""Hot numeric kernels, twice: numba @njit and pure numpy.

The numba path is used when available; set SVTRANS_NO_NUMBA=1 to force the
numpy fallback (benchmarks/bench_kernels.py times both). Public names are
bound once at import.
"""

import os

import numpy as np

_DISABLED = os.environ.get("SVTRANS_NO_NUMBA", "").strip() not in ("", "0")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap

USING_NUMBA = HAS_NUMBA and not _DISABLED


# ---------------------------------------------------------------------------
# Separable 4-tap resampling along rows. idx is (out_len, 4) int64 source rows,
# wts is (out_len, 4) float64; both precomputed by the caller for the axis.
# ---------------------------------------------------------------------------

def _resample_rows_np(img, idx, wts):
    # gather: out[o, :] = sum_k wts[o, k] * img[idx[o, k], :]
    out = np.zeros((idx.shape[0], img.shape[1]), dtype=np.float64)
    for k in range(4):
        out += wts[:, k : k + 1] * img[idx[:, k], :]
    return out


@njit(cache=True)
def _resample_rows_nb(img, idx, wts):  # pragma: no cover - numba compiled
    out_h = idx.shape[0]
    w = img.shape[1]
    out = np.empty((out_h, w), dtype=np.float64)
    for o in range(out_h):
        i0, i1, i2, i3 = idx[o, 0], idx[o, 1], idx[o, 2], idx[o, 3]
        w0, w1, w2, w3 = wts[o, 0], wts[o, 1], wts[o, 2], wts[o, 3]
        for x in range(w):
            out[o, x] = (
                w0 * img[i0, x] + w1 * img[i1, x] + w2 * img[i2, x] + w3 * img[i3, x]
            )
    return out


# ---------------------------------------------------------------------------
# Per-pair redundancy statistics: total squared luma difference, squared
# difference over the motion mask (|diff| > m) and the mask popcount.
# ---------------------------------------------------------------------------

def _pair_stats_np(cur, ref, m):
    diff = cur.astype(np.int64) - ref.astype(np.int64)
    sq = (diff * diff).astype(np.float64)
    mask = np.abs(diff) > m
    return float(sq.sum()), float(sq[mask].sum()), int(mask.sum())


@njit(cache=True)
def _pair_stats_nb(cur, ref, m):  # pragma: no cover - numba compiled
    h, w = cur.shape
    total = 0.0
    motion = 0.0
    count = 0
    mm = np.int64(m)
    for y in range(h):
        for x in range(w):
            d = np.int64(cur[y, x]) - np.int64(ref[y, x])
            sq = float(d * d)
            total += sq
            if d > mm or -d > mm:
                motion += sq
                count += 1
    return total, motion, count


# ---------------------------------------------------------------------------
# Valid-mode separable correlation with a 1-D window, used by SSIM. Returns
# an array shrunk by (len(win)-1) along both axes.
# ---------------------------------------------------------------------------

def _corr_valid_np(img, win):
    k = win.shape[0]
    v = np.lib.stride_tricks.sliding_window_view(img, k, axis=1)
    tmp = v @ win
    v = np.lib.stride_tricks.sliding_window_view(tmp, k, axis=0)
    return v @ win


@njit(cache=True)
def _corr_valid_nb(img, win):  # pragma: no cover - numba compiled
    k = win.shape[0]
    h, w = img.shape
    oh, ow = h - k + 1, w - k + 1
    tmp = np.empty((h, ow), dtype=np.float64)
    for y in range(h):
        for x in range(ow):
            acc = 0.0
            for i in range(k):
                acc += win[i] * img[y, x + i]
            tmp[y, x] = acc
    out = np.empty((oh, ow), dtype=np.float64)
    for y in range(oh):
        for x in range(ow):
            acc = 0.0
            for i in range(k):
                acc += win[i] * tmp[y + i, x]
            out[y, x] = acc
    return out


if USING_NUMBA:
    resample_rows = _resample_rows_nb
    pair_stats = _pair_stats_nb
    corr_valid = _corr_valid_nb
else:
    resample_rows = _resample_rows_np
    pair_stats = _pair_stats_np
    corr_valid = _corr_valid_np

# Both backends, importable by name for benchmarks and cross-checks.
BACKENDS = {
    "numpy": {
        "resample_rows": _resample_rows_np,
        "pair_stats": _pair_stats_np,
        "corr_valid": _corr_valid_np,
    },
}
if HAS_NUMBA:
    BACKENDS["numba"] = {
        "resample_rows": _resample_rows_nb,
        "pair_stats": _pair_stats_nb,
        "corr_valid": _corr_valid_nb,
    }
