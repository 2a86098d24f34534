"""Self-contained external codec commands (JPEG via Pillow).

These run as subprocesses through the codec command templates, standing in
for a system encoder such as ffmpeg/x265 when none is installed. Video
mode packs one JPEG per frame into a length-prefixed stream; image mode
converts PNG <-> JPEG.

    python -m svtrans.codec_tool encode-video --input in.raw --output out.bin
    python -m svtrans.codec_tool decode-video --input out.bin --output back.raw --fps 10
    python -m svtrans.codec_tool encode-image --input in.png --output out.jpg
    python -m svtrans.codec_tool decode-image --input out.jpg --output back.png
"""

from __future__ import annotations

import argparse
import io
import struct
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .frames import VideoSequence, read_raw, write_raw

VIDEO_MAGIC = b"SVJ1"


def _to_image(frame: np.ndarray) -> Image.Image:
    return Image.fromarray(np.asarray(frame), mode="L" if frame.ndim == 2 else "RGB")


def encode_video(src, dst, quality: int) -> None:
    seq = read_raw(src)
    chunks = [VIDEO_MAGIC, struct.pack("<I", len(seq))]
    for frame in seq.frames:
        buf = io.BytesIO()
        _to_image(frame).save(buf, format="JPEG", quality=quality, optimize=True)
        data = buf.getvalue()
        chunks.append(struct.pack("<I", len(data)))
        chunks.append(data)
    Path(dst).write_bytes(b"".join(chunks))


def decode_video(src, dst, fps: Fraction) -> None:
    data = Path(src).read_bytes()
    if data[:4] != VIDEO_MAGIC:
        raise ValueError("not a JPEG-stream video payload")
    (count,) = struct.unpack("<I", data[4:8])
    pos = 8
    frames = []
    for _ in range(count):
        (size,) = struct.unpack("<I", data[pos : pos + 4])
        pos += 4
        arr = np.asarray(Image.open(io.BytesIO(data[pos : pos + size])))
        frames.append(np.ascontiguousarray(arr, dtype=np.uint8))
        pos += size
    write_raw(VideoSequence(tuple(frames), fps), dst)


def encode_image(src, dst, quality: int) -> None:
    img = Image.open(src)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    img.save(dst, format="JPEG", quality=quality, optimize=True)


def decode_image(src, dst) -> None:
    Image.open(src).save(dst, format="PNG")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="svtrans-codec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("encode-video", "decode-video", "encode-image", "decode-image"):
        p = sub.add_parser(name)
        p.add_argument("--input", required=True)
        p.add_argument("--output", required=True)
        p.add_argument("--quality", type=int, default=75)
        p.add_argument("--fps", default="25")
    args = parser.parse_args(argv)
    try:
        if args.command == "encode-video":
            encode_video(args.input, args.output, args.quality)
        elif args.command == "decode-video":
            decode_video(args.input, args.output, Fraction(args.fps))
        elif args.command == "encode-image":
            encode_image(args.input, args.output, args.quality)
        else:
            decode_image(args.input, args.output)
    except Exception as exc:
        print(f"svtrans-codec: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
