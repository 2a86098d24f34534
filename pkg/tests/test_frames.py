import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svtrans.frames import (
    FrameError,
    VideoSequence,
    decode_raw_bytes,
    read_image_dir,
    read_raw,
    to_luma,
    write_image_dir,
    write_raw,
)

from conftest import rand_frame, rand_sequence


def test_to_luma_gray_passthrough(rng):
    f = rand_frame(rng, 8, 8)
    assert to_luma(f) is f


def test_to_luma_equal_channels():
    f = np.full((8, 8, 3), 128, dtype=np.uint8)
    assert np.all(to_luma(f) == 128)


def test_to_luma_black_and_red():
    black = np.zeros((8, 8, 3), dtype=np.uint8)
    assert np.all(to_luma(black) == 0)
    red = np.zeros((8, 8, 3), dtype=np.uint8)
    red[:, :, 0] = 255
    assert np.all(to_luma(red) == 76)  # 0.299 * 255 = 76.245


def test_to_luma_idempotent_and_range(rng):
    f = rand_frame(rng, 12, 9, channels=3)
    y = to_luma(f)
    assert y.ndim == 2
    assert to_luma(y) is y
    assert y.min() >= 0 and y.max() <= 255


def test_frame_validation():
    with pytest.raises(FrameError):
        VideoSequence((np.zeros((2, 8), dtype=np.uint8),))
    with pytest.raises(FrameError):
        VideoSequence((np.zeros((8, 8), dtype=np.float64),))
    with pytest.raises(FrameError):
        VideoSequence(())


def test_mixed_dimensions_rejected(rng):
    with pytest.raises(FrameError, match="mixed dimensions"):
        VideoSequence((rand_frame(rng, 16, 16), rand_frame(rng, 8, 8)))


def test_raw_roundtrip_gray(tmp_path, rng):
    seq = rand_sequence(rng, 8, 8, 2)
    path = tmp_path / "clip.raw"
    write_raw(seq, path)
    back = read_raw(path)
    assert len(back) == 2 and back.fps == seq.fps
    for a, b in zip(seq.frames, back.frames):
        assert np.array_equal(a, b)


def test_raw_read_then_write_bit_exact_yuv420(tmp_path, rng):
    # arbitrary 4:2:0 file bytes survive a read->write cycle untouched
    w, h, t = 12, 8, 3
    payload = rng.integers(0, 256, t * (w * h + 2 * (w // 2) * (h // 2)), dtype=np.uint8).tobytes()
    path = tmp_path / "in.raw"
    path.write_bytes(payload)
    (tmp_path / "in.raw.hdr").write_text(f"width={w}\nheight={h}\nfps=25\nframes={t}\n")
    seq = read_raw(path)
    assert seq.channels == 3
    out = tmp_path / "out.raw"
    write_raw(seq, out)
    assert out.read_bytes() == payload


def test_raw_truncation_error(tmp_path, rng):
    w = h = 8
    path = tmp_path / "clip.raw"
    path.write_bytes(bytes(int(1.5 * w * h)))
    (tmp_path / "clip.raw.hdr").write_text(f"width={w}\nheight={h}\nfps=25\nframes=2\n")
    with pytest.raises(FrameError, match="size"):
        read_raw(path)


def test_raw_missing_sidecar(tmp_path):
    path = tmp_path / "clip.raw"
    path.write_bytes(bytes(64))
    with pytest.raises(FrameError, match="sidecar"):
        read_raw(path)


def test_image_dir_roundtrip_color(tmp_path, rng):
    seq = rand_sequence(rng, 10, 7, 3, channels=3, fps=30)
    write_image_dir(seq, tmp_path / "clip")
    names = sorted(p.name for p in (tmp_path / "clip").glob("*.png"))
    assert names == ["000001.png", "000002.png", "000003.png"]
    back = read_image_dir(tmp_path / "clip")
    assert back.fps == 30
    for a, b in zip(seq.frames, back.frames):
        assert np.array_equal(a, b)


def test_image_dir_mixed_dimensions(tmp_path, rng):
    write_image_dir(rand_sequence(rng, 16, 16, 1), tmp_path / "clip")
    from PIL import Image

    Image.fromarray(rand_frame(rng, 8, 8)).save(tmp_path / "clip" / "000002.png")
    with pytest.raises(FrameError, match="mixed dimensions"):
        read_image_dir(tmp_path / "clip")


def test_unreadable_path(tmp_path):
    with pytest.raises(FrameError, match="no such"):
        read_raw(tmp_path / "missing.raw")
    with pytest.raises(FrameError, match="no such"):
        read_image_dir(tmp_path / "missing")


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_raw_roundtrip_property(tmp_path_factory, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    h = 2 * data.draw(st.integers(2, 8))
    w = 2 * data.draw(st.integers(2, 8))
    t = data.draw(st.integers(1, 4))
    channels = data.draw(st.sampled_from([1, 3]))
    frames = []
    for _ in range(t):
        f = rand_frame(rng, h, w, channels)
        if channels == 3:
            # 4:2:0 representable chroma: constant over 2x2 blocks
            for c in (1, 2):
                f[:, :, c] = np.repeat(np.repeat(f[::2, ::2, c], 2, axis=0), 2, axis=1)
        frames.append(f)
    seq = VideoSequence(tuple(frames), 25)
    path = tmp_path_factory.mktemp("roundtrip") / "clip.raw"
    write_raw(seq, path)
    back = read_raw(path)
    for a, b in zip(seq.frames, back.frames):
        assert np.array_equal(a, b)


def test_decode_raw_bytes_infers_layout(rng):
    w, h = 8, 6
    gray = rng.integers(0, 256, 2 * w * h, dtype=np.uint8).tobytes()
    assert decode_raw_bytes(gray, w, h, 2).channels == 1
    yuv = rng.integers(0, 256, 2 * (w * h + 2 * (w // 2) * (h // 2)), dtype=np.uint8).tobytes()
    assert decode_raw_bytes(yuv, w, h, 2).channels == 3
