"""End-to-end run with the learned reconstructor from keysr/ plugged in as
the external command. Skipped when that package has not been built; the
rest of the suite never depends on it."""

import shutil
from pathlib import Path

import numpy as np
import pytest

from svtrans.bundle import CodecAdapter
from svtrans.endcloud import EndNodeConfig, Reconstructor, build_bundle, process_bundle
from svtrans.keyframes import SelectionConfig

from conftest import surveillance_clip

KEYSR_CLI = Path(__file__).resolve().parent.parent / "keysr" / "dist" / "src" / "cli.js"

pytestmark = pytest.mark.skipif(
    not KEYSR_CLI.exists() or shutil.which("node") is None,
    reason="keysr reconstructor not built",
)


def test_keysr_reconstructor_through_pipeline(rng):
    source = surveillance_clip(rng, 32, 32, 6)
    cfg = EndNodeConfig(selection=SelectionConfig(mode="fixed", k=3))
    result = build_bundle(source, cfg)
    recon = Reconstructor(kind="external", command=f"node {KEYSR_CLI} reconstruct {{workdir}}")
    hr, unpacked, report = process_bundle(result.bundle, CodecAdapter(), recon, ground_truth=source)
    assert len(hr) == 6
    assert hr.width == 32 and hr.height == 32
    assert report is not None
    assert report.aggregates["psnr_mean_all"] > 10.0
    assert all(np.isfinite(row.psnr_db) for row in report.rows)
