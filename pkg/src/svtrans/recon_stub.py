"""Reference external-reconstructor command: bicubic 4x upsampling.

Usage: python -m svtrans.recon_stub <workdir> [--use-keys]

Reads the exchange directory (lr.raw + sidecar, key_%06d.png, indices.txt)
and writes hr.raw. With --use-keys the received HR key frames replace the
upsampled frames at their positions, matching the classical baseline.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .frames import read_raw, write_raw
from .resample import upsample_4x


def read_indices(path) -> tuple:
    lines = Path(path).read_text().splitlines()
    while len(lines) < 2:
        lines.append("")
    keys = [int(s) for s in lines[0].split(",") if s.strip()]
    reds = [int(s) for s in lines[1].split(",") if s.strip()]
    return keys, reds


def reconstruct_workdir(workdir, use_keys: bool = False) -> None:
    workdir = Path(workdir)
    lr = read_raw(workdir / "lr.raw")
    hr = [upsample_4x(f) for f in lr.frames]
    if use_keys:
        from PIL import Image

        keys, reds = read_indices(workdir / "indices.txt")
        total = len(lr) + len(reds)
        dropped = set(reds)
        survivors = [t for t in range(1, total + 1) if t not in dropped]
        pos_of = {orig: i for i, orig in enumerate(survivors)}
        for n, orig in enumerate(keys, start=1):
            arr = np.asarray(Image.open(workdir / f"key_{n:06d}.png"))
            if arr.ndim == 3 and arr.shape[2] == 4:
                arr = arr[:, :, :3]
            hr[pos_of[orig]] = np.ascontiguousarray(arr, dtype=np.uint8)
    write_raw(lr.replace_frames(hr), workdir / "hr.raw")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="svtrans-recon-stub", description=__doc__)
    parser.add_argument("workdir")
    parser.add_argument("--use-keys", action="store_true")
    args = parser.parse_args(argv)
    try:
        reconstruct_workdir(args.workdir, args.use_keys)
    except Exception as exc:
        print(f"recon-stub: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
