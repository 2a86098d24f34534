"""Transmitted code stream: a little-endian binary container with CRC32 on
every section, plus codec adapters (bit-exact raw mode and external
command-template mode).

Layout:

    magic "SVB1" | version u16
    header_len u32 | header blob | header_crc u32
    for each section (LR stream, then one per key frame):
        length u32 | payload | crc u32

The header blob carries HR dims, frame rate, original frame count T,
channel count, codec ids, the key/redundancy index lists (sorted u32), and
the declared payload sizes, so any single corrupted byte is caught either
by a CRC or by the size table.
"""

from __future__ import annotations

import struct
import subprocess
import tempfile
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .frames import FrameError, VideoSequence, decode_raw_bytes, write_raw, read_raw
from .keyframes import KeyFrameIndex
from .redundancy import RedundancyIndex

MAGIC = b"SVB1"
VERSION = 1

CODEC_RAW = 0
CODEC_EXTERNAL = 1


class BundleError(ValueError):
    """Malformed, truncated, or corrupted container data."""


class CodecError(RuntimeError):
    """External codec command failed."""


# ---------------------------------------------------------------------------
# Codec adapters
# ---------------------------------------------------------------------------

def _frame_planes(frame: np.ndarray) -> bytes:
    if frame.ndim == 2:
        return frame.tobytes()
    return b"".join(np.ascontiguousarray(frame[:, :, c]).tobytes() for c in range(frame.shape[2]))


def _frame_from_planes(data: bytes, width: int, height: int, channels: int) -> np.ndarray:
    if len(data) != width * height * channels:
        raise BundleError("raw frame payload has wrong size")
    if channels == 1:
        return np.frombuffer(data, dtype=np.uint8).reshape(height, width).copy()
    planes = [
        np.frombuffer(data[c * width * height : (c + 1) * width * height], dtype=np.uint8).reshape(height, width)
        for c in range(channels)
    ]
    return np.stack(planes, axis=2).copy()


def _run_template(template: str, mapping: dict) -> None:
    cmd = template.format(**mapping)
    proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
    if proc.returncode != 0:
        raise CodecError(f"codec command failed ({proc.returncode}): {cmd}\n{proc.stderr.strip()}")


@dataclass
class CodecAdapter:
    """Raw mode stores full planes verbatim; external mode shells out to
    configured encode/decode command templates over temporary files.

    Template placeholders: {input} {output} {width} {height} {fps} {frames}.
    Video commands exchange raw planar files (with sidecar header on decode
    output), image commands exchange PNG files.
    """

    mode: str = "raw"
    video_encode: str | None = None
    video_decode: str | None = None
    image_encode: str | None = None
    image_decode: str | None = None

    def __post_init__(self):
        if self.mode not in ("raw", "external"):
            raise ValueError(f"unknown codec mode {self.mode!r}")
        if self.mode == "external":
            missing = [
                name
                for name in ("video_encode", "video_decode", "image_encode", "image_decode")
                if not getattr(self, name)
            ]
            if missing:
                raise ValueError(f"external codec mode needs command templates: {missing}")

    @property
    def codec_id(self) -> int:
        return CODEC_RAW if self.mode == "raw" else CODEC_EXTERNAL

    @staticmethod
    def from_config(cfg: dict) -> "CodecAdapter":
        codec = cfg.get("codec", {})
        mode = codec.get("mode", "raw")
        video = codec.get("video", {})
        image = codec.get("image", {})
        return CodecAdapter(
            mode=mode,
            video_encode=video.get("encode"),
            video_decode=video.get("decode"),
            image_encode=image.get("encode"),
            image_decode=image.get("decode"),
        )

    # -- video stream ------------------------------------------------------

    def encode_video(self, seq: VideoSequence) -> bytes:
        if self.mode == "raw":
            return b"".join(_frame_planes(f) for f in seq.frames)
        with tempfile.TemporaryDirectory(prefix="svtcodec_") as tmp:
            src = Path(tmp) / "in.raw"
            dst = Path(tmp) / "out.bin"
            write_raw(seq, src)
            _run_template(
                self.video_encode,
                {
                    "input": src,
                    "output": dst,
                    "width": seq.width,
                    "height": seq.height,
                    "fps": float(seq.fps),
                    "frames": len(seq),
                },
            )
            if not dst.exists():
                raise CodecError("video encoder produced no output")
            return dst.read_bytes()

    def decode_video(self, data: bytes, width: int, height: int, channels: int, count: int, fps: Fraction) -> VideoSequence:
        if self.mode == "raw":
            per = width * height * channels
            if len(data) != per * count:
                raise BundleError("raw video payload size mismatch")
            frames = [
                _frame_from_planes(data[i * per : (i + 1) * per], width, height, channels)
                for i in range(count)
            ]
            return VideoSequence(tuple(frames), fps)
        with tempfile.TemporaryDirectory(prefix="svtcodec_") as tmp:
            src = Path(tmp) / "in.bin"
            dst = Path(tmp) / "out.raw"
            src.write_bytes(data)
            _run_template(
                self.video_decode,
                {
                    "input": src,
                    "output": dst,
                    "width": width,
                    "height": height,
                    "fps": float(fps),
                    "frames": count,
                },
            )
            if not dst.exists():
                raise CodecError("video decoder produced no output")
            seq = read_raw(dst)
            if seq.width != width or seq.height != height or len(seq) != count:
                raise CodecError(
                    f"video decoder returned {seq.width}x{seq.height}x{len(seq)}, "
                    f"expected {width}x{height}x{count}"
                )
            return VideoSequence(seq.frames, fps)

    # -- still images (key frames) ------------------------------------------

    def encode_image(self, frame: np.ndarray) -> bytes:
        if self.mode == "raw":
            return _frame_planes(frame)
        from PIL import Image

        with tempfile.TemporaryDirectory(prefix="svtcodec_") as tmp:
            src = Path(tmp) / "in.png"
            dst = Path(tmp) / "out.bin"
            mode = "L" if frame.ndim == 2 else "RGB"
            Image.fromarray(np.asarray(frame), mode=mode).save(src)
            _run_template(
                self.image_encode,
                {"input": src, "output": dst, "width": frame.shape[1], "height": frame.shape[0], "fps": 0, "frames": 1},
            )
            if not dst.exists():
                raise CodecError("image encoder produced no output")
            return dst.read_bytes()

    def decode_image(self, data: bytes, width: int, height: int, channels: int) -> np.ndarray:
        if self.mode == "raw":
            return _frame_from_planes(data, width, height, channels)
        from PIL import Image

        with tempfile.TemporaryDirectory(prefix="svtcodec_") as tmp:
            src = Path(tmp) / "in.bin"
            dst = Path(tmp) / "out.png"
            src.write_bytes(data)
            _run_template(
                self.image_decode,
                {"input": src, "output": dst, "width": width, "height": height, "fps": 0, "frames": 1},
            )
            if not dst.exists():
                raise CodecError("image decoder produced no output")
            arr = np.asarray(Image.open(dst))
            if arr.ndim == 3 and arr.shape[2] == 4:
                arr = arr[:, :, :3]
            if channels == 1 and arr.ndim == 3:
                arr = arr[:, :, 0]
            if channels == 3 and arr.ndim == 2:
                arr = np.stack([arr] * 3, axis=2)
            if arr.shape[:2] != (height, width):
                raise CodecError(f"image decoder returned {arr.shape}, expected {height}x{width}")
            return np.ascontiguousarray(arr, dtype=np.uint8)


# ---------------------------------------------------------------------------
# Container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BundleMeta:
    width: int  # HR dims
    height: int
    fps: Fraction
    total_frames: int
    channels: int
    lr_codec: int
    key_codec: int
    key_indices: tuple
    red_indices: tuple

    @property
    def lr_width(self) -> int:
        return self.width // 4

    @property
    def lr_height(self) -> int:
        return self.height // 4

    @property
    def surviving(self) -> int:
        return self.total_frames - len(self.red_indices)


@dataclass(frozen=True)
class UnpackedBundle:
    meta: BundleMeta
    lr: VideoSequence
    keyframes: tuple
    section_bits: dict = field(default_factory=dict)


def _validate_indices(key_indices, red_indices, total: int) -> None:
    keys = tuple(int(i) for i in key_indices)
    reds = tuple(int(i) for i in red_indices)
    if list(keys) != sorted(set(keys)) or (keys and (keys[0] < 1 or keys[-1] > total)):
        raise BundleError(f"key indices invalid for {total} frames: {keys}")
    if list(reds) != sorted(set(reds)) or (reds and (reds[0] < 2 or reds[-1] > total)):
        raise BundleError(f"redundancy indices invalid for {total} frames: {reds}")
    if set(keys) & set(reds):
        raise BundleError(f"key and redundancy indices overlap: {sorted(set(keys) & set(reds))}")


def _header_blob(meta: BundleMeta, payload_sizes) -> bytes:
    parts = [
        struct.pack(
            "<IIIIIBBB",
            meta.width,
            meta.height,
            meta.fps.numerator,
            meta.fps.denominator,
            meta.total_frames,
            meta.channels,
            meta.lr_codec,
            meta.key_codec,
        ),
        struct.pack("<I", len(meta.key_indices)),
        struct.pack(f"<{len(meta.key_indices)}I", *meta.key_indices),
        struct.pack("<I", len(meta.red_indices)),
        struct.pack(f"<{len(meta.red_indices)}I", *meta.red_indices),
        struct.pack("<I", len(payload_sizes)),
        struct.pack(f"<{len(payload_sizes)}I", *payload_sizes),
    ]
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise BundleError(
                f"truncated container: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def _parse_header(blob: bytes) -> tuple:
    r = _Reader(blob)
    width, height, fps_n, fps_d, total, channels, lr_codec, key_codec = struct.unpack(
        "<IIIIIBBB", r.take(23)
    )
    if fps_d == 0:
        raise BundleError("zero fps denominator")
    n_keys = r.u32()
    keys = struct.unpack(f"<{n_keys}I", r.take(4 * n_keys))
    n_red = r.u32()
    reds = struct.unpack(f"<{n_red}I", r.take(4 * n_red))
    n_sections = r.u32()
    sizes = struct.unpack(f"<{n_sections}I", r.take(4 * n_sections))
    if r.pos != len(blob):
        raise BundleError("header blob has trailing bytes")
    meta = BundleMeta(
        width=width,
        height=height,
        fps=Fraction(fps_n, fps_d),
        total_frames=total,
        channels=channels,
        lr_codec=lr_codec,
        key_codec=key_codec,
        key_indices=tuple(keys),
        red_indices=tuple(reds),
    )
    return meta, sizes


def pack(
    lr_nonredundant: VideoSequence,
    keyframes,
    key_index: KeyFrameIndex,
    red_index: RedundancyIndex,
    codec: CodecAdapter,
    hr_width: int,
    hr_height: int,
    total_frames: int,
    fps: Fraction,
) -> bytes:
    """Serialize the transmitted stream; raises on index invariant violations."""
    keyframes = list(keyframes)
    _validate_indices(tuple(key_index), tuple(red_index), total_frames)
    if len(keyframes) != len(key_index):
        raise BundleError(f"{len(keyframes)} key frames for {len(key_index)} key indices")
    if len(lr_nonredundant) != total_frames - len(red_index):
        raise BundleError("surviving LR frame count does not match redundancy index")
    if hr_width != lr_nonredundant.width * 4 or hr_height != lr_nonredundant.height * 4:
        raise BundleError("LR dimensions are not HR/4")
    for f in keyframes:
        if f.shape[:2] != (hr_height, hr_width):
            raise BundleError("key frame dimensions do not match HR dimensions")

    lr_payload = codec.encode_video(lr_nonredundant)
    key_payloads = [codec.encode_image(f) for f in keyframes]
    payloads = [lr_payload] + key_payloads

    meta = BundleMeta(
        width=hr_width,
        height=hr_height,
        fps=fps,
        total_frames=total_frames,
        channels=lr_nonredundant.channels,
        lr_codec=codec.codec_id,
        key_codec=codec.codec_id,
        key_indices=tuple(key_index),
        red_indices=tuple(red_index),
    )
    blob = _header_blob(meta, [len(p) for p in payloads])
    out = [MAGIC, struct.pack("<H", VERSION)]
    out.append(struct.pack("<I", len(blob)))
    out.append(blob)
    out.append(struct.pack("<I", zlib.crc32(blob)))
    for p in payloads:
        out.append(struct.pack("<I", len(p)))
        out.append(p)
        out.append(struct.pack("<I", zlib.crc32(p)))
    return b"".join(out)


def unpack(data: bytes, codec: CodecAdapter) -> UnpackedBundle:
    """Parse and decode a container; any corruption raises BundleError."""
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise BundleError("bad magic")
    version = r.u16()
    if version != VERSION:
        raise BundleError(f"unsupported container version {version}")
    header_len = r.u32()
    blob = r.take(header_len)
    if r.u32() != zlib.crc32(blob):
        raise BundleError("header CRC mismatch")
    meta, declared_sizes = _parse_header(blob)
    _validate_indices(meta.key_indices, meta.red_indices, meta.total_frames)
    if len(declared_sizes) != 1 + len(meta.key_indices):
        raise BundleError("section count does not match key index count")
    if codec.codec_id != meta.lr_codec:
        raise BundleError(
            f"bundle uses codec id {meta.lr_codec}, adapter provides {codec.codec_id}"
        )
    payloads = []
    for expect in declared_sizes:
        size = r.u32()
        if size != expect:
            raise BundleError(f"section size {size} contradicts declared {expect}")
        payload = r.take(size)
        if r.u32() != zlib.crc32(payload):
            raise BundleError("section CRC mismatch")
        payloads.append(payload)
    if r.pos != len(data):
        raise BundleError(f"{len(data) - r.pos} trailing bytes after last section")

    lr = codec.decode_video(
        payloads[0], meta.lr_width, meta.lr_height, meta.channels, meta.surviving, meta.fps
    )
    keyframes = tuple(
        codec.decode_image(p, meta.width, meta.height, meta.channels) for p in payloads[1:]
    )
    section_bits = measure_bits(data)
    return UnpackedBundle(meta=meta, lr=lr, keyframes=keyframes, section_bits=section_bits)


def measure_bits(data: bytes) -> dict:
    """Bit counts per region: LR payload, key payloads, and everything else
    (header, index lists, length/CRC framing). Sums to len(data)*8 exactly."""
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise BundleError("bad magic")
    r.u16()
    header_len = r.u32()
    blob = r.take(header_len)
    r.u32()
    _, declared_sizes = _parse_header(blob)
    lr_bits = 0
    key_bits = 0
    for i, _expect in enumerate(declared_sizes):
        size = r.u32()
        payload = r.take(size)
        r.u32()
        if i == 0:
            lr_bits += len(payload) * 8
        else:
            key_bits += len(payload) * 8
    if r.pos != len(data):
        raise BundleError("trailing bytes")
    total_bits = len(data) * 8
    return {
        "lr_bits": lr_bits,
        "key_bits": key_bits,
        "header_bits": total_bits - lr_bits - key_bits,
        "total_bits": total_bits,
    }
