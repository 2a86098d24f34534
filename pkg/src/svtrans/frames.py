"""Frame / sequence data model and raw-planar + image-directory I/O.

Frames are numpy uint8 arrays shaped (h, w) for luma-only or (h, w, 3) for
color. Sequences are immutable tuples of frames sharing dimensions. Frame
indices are 1-based everywhere a caller can see them.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class FrameError(ValueError):
    """Invalid frame or sequence data."""


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves away from zero (not banker's)."""
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5))


def quantize_u8(x: np.ndarray) -> np.ndarray:
    """Real-valued samples -> uint8 storage: round half away, clamp to [0,255]."""
    return np.clip(round_half_away(np.asarray(x, dtype=np.float64)), 0, 255).astype(np.uint8)


def validate_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.dtype != np.uint8:
        raise FrameError(f"frame must be uint8, got {frame.dtype}")
    if frame.ndim == 2:
        h, w = frame.shape
    elif frame.ndim == 3 and frame.shape[2] == 3:
        h, w = frame.shape[:2]
    else:
        raise FrameError(f"frame must be (h,w) or (h,w,3), got shape {frame.shape}")
    if w < 4 or h < 4:
        raise FrameError(f"frame too small: {w}x{h} (minimum 4x4)")
    return frame


def frame_channels(frame: np.ndarray) -> int:
    return 1 if frame.ndim == 2 else frame.shape[2]


def to_luma(frame: np.ndarray) -> np.ndarray:
    """Single-channel luma view of a frame.

    1-channel input is returned unchanged; 3-channel input is combined with
    the fixed (0.299, 0.587, 0.114) weights, rounded half away from zero.
    """
    frame = validate_frame(frame)
    if frame.ndim == 2:
        return frame
    r, g, b = LUMA_WEIGHTS
    y = r * frame[:, :, 0].astype(np.float64) + g * frame[:, :, 1] + b * frame[:, :, 2]
    return quantize_u8(y)


@dataclass(frozen=True)
class VideoSequence:
    """Ordered frames with identical dimensions plus a frame rate."""

    frames: tuple
    fps: Fraction = Fraction(25, 1)

    def __post_init__(self):
        if len(self.frames) < 1:
            raise FrameError("sequence needs at least one frame")
        frames = tuple(validate_frame(f) for f in self.frames)
        shape0 = frames[0].shape
        for i, f in enumerate(frames):
            if f.shape != shape0:
                raise FrameError(
                    f"mixed dimensions: frame 1 is {shape0}, frame {i + 1} is {f.shape}"
                )
        for f in frames:
            f.flags.writeable = False
        object.__setattr__(self, "frames", frames)
        if self.fps <= 0:
            raise FrameError("fps must be positive")

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def width(self) -> int:
        return self.frames[0].shape[1]

    @property
    def height(self) -> int:
        return self.frames[0].shape[0]

    @property
    def channels(self) -> int:
        return frame_channels(self.frames[0])

    def replace_frames(self, frames) -> "VideoSequence":
        return VideoSequence(tuple(frames), self.fps)


def sequence_from_arrays(arrays, fps=Fraction(25, 1)) -> VideoSequence:
    return VideoSequence(tuple(np.ascontiguousarray(a, dtype=np.uint8) for a in arrays), Fraction(fps))


# ---------------------------------------------------------------------------
# Raw planar format. Byte stream is frame-major, planes luma -> chroma.
# 1-channel frames: one full plane per frame. 3-channel frames: 4:2:0 with
# quarter-size chroma planes (decimated top-left on write, replicated 2x2 on
# read), so read-then-write is always bit-exact.
# Sidecar text header at <path>.hdr: width=/height=/fps=/frames= lines.
# ---------------------------------------------------------------------------

def _sidecar_path(path) -> Path:
    return Path(str(path) + ".hdr")


def write_raw(seq: VideoSequence, path) -> None:
    path = Path(path)
    chunks = []
    for f in seq.frames:
        if f.ndim == 2:
            chunks.append(f.tobytes())
        else:
            if seq.width % 2 or seq.height % 2:
                raise FrameError("3-channel raw output needs even dimensions (4:2:0 chroma)")
            chunks.append(f[:, :, 0].tobytes())
            chunks.append(np.ascontiguousarray(f[::2, ::2, 1]).tobytes())
            chunks.append(np.ascontiguousarray(f[::2, ::2, 2]).tobytes())
    path.write_bytes(b"".join(chunks))
    hdr = (
        f"width={seq.width}\n"
        f"height={seq.height}\n"
        f"fps={seq.fps.numerator}/{seq.fps.denominator}\n"
        f"frames={len(seq)}\n"
    )
    _sidecar_path(path).write_text(hdr)


def read_raw_header(path) -> dict:
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise FrameError(f"missing sidecar header {sidecar}")
    fields = {}
    for line in sidecar.read_text().splitlines():
        line = line.strip()
        if not line or "=" not in line:
            continue
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    for key in ("width", "height", "fps", "frames"):
        if key not in fields:
            raise FrameError(f"sidecar {sidecar} missing '{key}=' line")
    fps = Fraction(fields["fps"])
    return {
        "width": int(fields["width"]),
        "height": int(fields["height"]),
        "fps": fps,
        "frames": int(fields["frames"]),
    }


def decode_raw_bytes(data: bytes, width: int, height: int, count: int, fps=Fraction(25, 1)) -> VideoSequence:
    """Decode a raw planar byte stream; layout (gray vs 4:2:0) inferred from size."""
    gray_size = width * height
    yuv_size = gray_size + 2 * ((width // 2) * (height // 2))
    even = width % 2 == 0 and height % 2 == 0
    if count < 1:
        raise FrameError("frame count must be >= 1")
    if len(data) == count * gray_size:
        per, channels = gray_size, 1
    elif even and len(data) == count * yuv_size:
        per, channels = yuv_size, 3
    else:
        raise FrameError(
            f"raw stream size {len(data)} is not {count} frames of "
            f"{width}x{height} (gray {count * gray_size}"
            + (f" or 4:2:0 {count * yuv_size}" if even else "")
            + " bytes)"
        )
    frames = []
    cw, ch = width // 2, height // 2
    for i in range(count):
        chunk = data[i * per : (i + 1) * per]
        if channels == 1:
            frames.append(np.frombuffer(chunk, dtype=np.uint8).reshape(height, width).copy())
        else:
            y = np.frombuffer(chunk[:gray_size], dtype=np.uint8).reshape(height, width)
            u = np.frombuffer(chunk[gray_size : gray_size + cw * ch], dtype=np.uint8).reshape(ch, cw)
            v = np.frombuffer(chunk[gray_size + cw * ch :], dtype=np.uint8).reshape(ch, cw)
            up = np.repeat(np.repeat(u, 2, axis=0), 2, axis=1)
            vp = np.repeat(np.repeat(v, 2, axis=0), 2, axis=1)
            frames.append(np.stack([y, up, vp], axis=2).copy())
    return VideoSequence(tuple(frames), fps)


def read_raw(path) -> VideoSequence:
    path = Path(path)
    if not path.exists():
        raise FrameError(f"no such file: {path}")
    meta = read_raw_header(path)
    data = path.read_bytes()
    return decode_raw_bytes(data, meta["width"], meta["height"], meta["frames"], meta["fps"])


# ---------------------------------------------------------------------------
# Image-directory format: one lossless PNG per frame, zero-padded 6-digit
# 1-based filenames (000001.png, ...).
# ---------------------------------------------------------------------------

def write_image_dir(seq: VideoSequence, directory) -> None:
    from PIL import Image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames, start=1):
        mode = "L" if frame.ndim == 2 else "RGB"
        Image.fromarray(np.asarray(frame), mode=mode).save(directory / f"{i:06d}.png")
    (directory / "fps.txt").write_text(f"{seq.fps.numerator}/{seq.fps.denominator}\n")


def read_image_dir(directory) -> VideoSequence:
    from PIL import Image

    directory = Path(directory)
    if not directory.is_dir():
        raise FrameError(f"no such directory: {directory}")
    names = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
    if not names:
        raise FrameError(f"no frame images in {directory}")
    frames = []
    for p in names:
        img = Image.open(p)
        arr = np.asarray(img)
        if arr.ndim == 3 and arr.shape[2] == 4:
            arr = arr[:, :, :3]
        frames.append(np.ascontiguousarray(arr, dtype=np.uint8))
    fps = Fraction(25, 1)
    fps_file = directory / "fps.txt"
    if fps_file.exists():
        fps = Fraction(fps_file.read_text().strip())
    return VideoSequence(tuple(frames), fps)


def read_sequence(path, fmt: str | None = None) -> VideoSequence:
    """Read either format: a raw file (with sidecar) or an image directory."""
    path = Path(path)
    if fmt is None:
        fmt = "images" if path.is_dir() else "raw"
    if fmt == "images":
        return read_image_dir(path)
    if fmt == "raw":
        return read_raw(path)
    raise FrameError(f"unknown sequence format {fmt!r}")


def write_sequence(seq: VideoSequence, path, fmt: str | None = None) -> None:
    path = Path(path)
    if fmt is None:
        fmt = "raw" if path.suffix.lower() in (".raw", ".yuv") else "images"
    if fmt == "raw":
        write_raw(seq, path)
    elif fmt == "images":
        write_image_dir(seq, path)
    else:
        raise FrameError(f"unknown sequence format {fmt!r}")
