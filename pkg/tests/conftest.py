import numpy as np
import pytest

from svtrans.frames import VideoSequence, quantize_u8


def rand_frame(rng, h, w, channels=1):
    shape = (h, w) if channels == 1 else (h, w, 3)
    return rng.integers(0, 256, shape, dtype=np.uint8)


def rand_sequence(rng, h, w, t, channels=1, fps=25):
    return VideoSequence(tuple(rand_frame(rng, h, w, channels) for _ in range(t)), fps)


def smooth_background(rng, h, w):
    """Image-like background: random field blurred with a small box filter."""
    base = rng.integers(0, 256, (h + 8, w + 8)).astype(np.float64)
    k = 5
    c = np.cumsum(np.cumsum(base, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    box = (c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]) / (k * k)
    return quantize_u8(box[: h, : w])


def surveillance_clip(rng, h, w, t, move_schedule=None, with_duplicates=True):
    """Static textured scene with a small moving block, surveillance style.

    move_schedule[i] says whether frame i+1 moves relative to its
    predecessor; default is always-move. Duplicate frames are sprinkled in
    when the schedule holds still.
    """
    if move_schedule is None:
        move_schedule = [True] * (t - 1)
    assert len(move_schedule) == t - 1
    bg = smooth_background(rng, h, w)
    size = max(2, min(h, w) // 6)
    y, x = h // 4, w // 4
    frames = []
    cur = bg.copy()
    cur[y : y + size, x : x + size] = 255
    frames.append(cur)
    for moved in move_schedule:
        if moved:
            y = (y + int(rng.integers(1, 3))) % (h - size)
            x = (x + int(rng.integers(1, 3))) % (w - size)
            cur = bg.copy()
            cur[y : y + size, x : x + size] = 255
            frames.append(cur)
        else:
            if with_duplicates and rng.random() < 0.7:
                frames.append(frames[-1].copy())
            else:
                jitter = frames[-1].astype(np.int16)
                yy, xx = rng.integers(0, h), rng.integers(0, w)
                jitter[yy, xx] = np.clip(jitter[yy, xx] + int(rng.integers(-1, 2)), 0, 255)
                frames.append(jitter.astype(np.uint8))
    return VideoSequence(tuple(frames), 10)


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)
