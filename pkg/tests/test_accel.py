import numpy as np
import pytest

from svtrans import _accel


needs_numba = pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba unavailable")


@needs_numba
def test_backends_registered():
    assert set(_accel.BACKENDS) == {"numpy", "numba"}


@needs_numba
def test_resample_rows_backends_agree(rng):
    img = rng.uniform(0, 255, (37, 23))
    base = np.clip(rng.integers(0, 37, (12, 1)) + np.arange(-1, 3), 0, 36).astype(np.int64)
    wts = rng.uniform(-0.1, 0.6, (12, 4))
    a = _accel.BACKENDS["numpy"]["resample_rows"](img, base, wts)
    b = _accel.BACKENDS["numba"]["resample_rows"](img, np.ascontiguousarray(base), np.ascontiguousarray(wts))
    assert np.max(np.abs(a - b)) < 1e-12


@needs_numba
def test_pair_stats_backends_agree(rng):
    cur = rng.integers(0, 256, (31, 17), dtype=np.uint8)
    ref = rng.integers(0, 256, (31, 17), dtype=np.uint8)
    for m in (0, 2, 80):
        a = _accel.BACKENDS["numpy"]["pair_stats"](cur, ref, m)
        b = _accel.BACKENDS["numba"]["pair_stats"](cur, ref, m)
        assert a[0] == b[0] and a[1] == b[1] and a[2] == b[2]


@needs_numba
def test_corr_valid_backends_agree(rng):
    img = rng.uniform(0, 255, (29, 41))
    win = rng.uniform(0, 1, 11)
    win /= win.sum()
    a = _accel.BACKENDS["numpy"]["corr_valid"](img, win)
    b = _accel.BACKENDS["numba"]["corr_valid"](img, win)
    assert a.shape == b.shape == (19, 31)
    assert np.max(np.abs(a - b)) < 1e-9


def test_env_flag_selects_backend(tmp_path):
    import subprocess
    import sys

    code = (
        "from svtrans import _accel; "
        "print(_accel.USING_NUMBA)"
    )
    on = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env={"PATH": "/usr/bin:/bin"})
    off = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True,
        text=True,
        env={"PATH": "/usr/bin:/bin", "SVTRANS_NO_NUMBA": "1"},
    )
    assert off.stdout.strip() == "False"
    if _accel.HAS_NUMBA:
        assert on.stdout.strip() == "True"
