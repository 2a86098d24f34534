"""Per-frame quality evaluation and the CSV report format.

Aggregates are computed three ways: over all frames, excluding key-frame
positions (key frames arrive near-verbatim, so including them flatters the
average), and additionally excluding restored redundant positions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .frames import FrameError, VideoSequence
from .metrics import psnr, ssim

CSV_COLUMNS = ("frame_index", "psnr_db", "ssim", "is_keyframe", "is_redundant")


@dataclass(frozen=True)
class FrameQuality:
    frame_index: int
    psnr_db: float
    ssim: float
    is_keyframe: bool
    is_redundant: bool


@dataclass(frozen=True)
class QualityReport:
    rows: tuple
    aggregates: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                writer.writerow(
                    [r.frame_index, f"{r.psnr_db:.6f}", f"{r.ssim:.8f}", int(r.is_keyframe), int(r.is_redundant)]
                )

    @staticmethod
    def read_csv(path) -> "QualityReport":
        rows = []
        with Path(path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
                raise ValueError(f"unexpected quality CSV columns: {reader.fieldnames}")
            for rec in reader:
                rows.append(
                    FrameQuality(
                        frame_index=int(rec["frame_index"]),
                        psnr_db=float(rec["psnr_db"]),
                        ssim=float(rec["ssim"]),
                        is_keyframe=bool(int(rec["is_keyframe"])),
                        is_redundant=bool(int(rec["is_redundant"])),
                    )
                )
        report = QualityReport(rows=tuple(rows))
        return QualityReport(rows=report.rows, aggregates=aggregate_rows(report.rows))


def _mean(values) -> float | None:
    values = list(values)
    if not values:
        return None
    return sum(values) / len(values)


def aggregate_rows(rows) -> dict:
    """Recompute the aggregate means from per-frame rows."""
    agg = {
        "psnr_mean_all": _mean(r.psnr_db for r in rows),
        "ssim_mean_all": _mean(r.ssim for r in rows),
        "psnr_mean_excl_keys": _mean(r.psnr_db for r in rows if not r.is_keyframe),
        "ssim_mean_excl_keys": _mean(r.ssim for r in rows if not r.is_keyframe),
        "psnr_mean_excl_keys_redundant": _mean(
            r.psnr_db for r in rows if not r.is_keyframe and not r.is_redundant
        ),
        "ssim_mean_excl_keys_redundant": _mean(
            r.ssim for r in rows if not r.is_keyframe and not r.is_redundant
        ),
        "frames": len(rows),
    }
    return agg


def evaluate(
    reconstructed: VideoSequence,
    ground_truth: VideoSequence,
    key_indices=(),
    red_indices=(),
) -> QualityReport:
    """Per-frame PSNR/SSIM of a reconstruction against its source."""
    if len(reconstructed) != len(ground_truth):
        raise FrameError(
            f"length mismatch: {len(reconstructed)} reconstructed vs {len(ground_truth)} reference"
        )
    if reconstructed.frames[0].shape != ground_truth.frames[0].shape:
        raise FrameError(
            f"dimension mismatch: {reconstructed.frames[0].shape} vs {ground_truth.frames[0].shape}"
        )
    keys = set(int(i) for i in key_indices)
    reds = set(int(i) for i in red_indices)
    rows = []
    for i, (rec, ref) in enumerate(zip(reconstructed.frames, ground_truth.frames), start=1):
        rows.append(
            FrameQuality(
                frame_index=i,
                psnr_db=psnr(rec, ref),
                ssim=ssim(rec, ref),
                is_keyframe=i in keys,
                is_redundant=i in reds,
            )
        )
    rows = tuple(rows)
    return QualityReport(rows=rows, aggregates=aggregate_rows(rows))
