import socket
import struct
import sys
from pathlib import Path

import numpy as np
import pytest

from svtrans.bundle import CodecAdapter
from svtrans.endcloud import (
    CloudServer,
    EndNodeConfig,
    PipelineError,
    Reconstructor,
    ReconstructError,
    TransportError,
    build_bundle,
    classical_reconstruct,
    external_reconstruct,
    process_bundle,
    recv_message,
    run_end_node,
    send_message,
    MSG_HELLO,
)
from svtrans.frames import VideoSequence
from svtrans.keyframes import SelectionConfig
from svtrans.metrics import psnr
from svtrans.redundancy import RedundancyConfig
from svtrans.resample import upsample_4x

from conftest import rand_frame, rand_sequence, surveillance_clip

STUB = f"{sys.executable} -m svtrans.recon_stub {{workdir}}"
STUB_KEYS = f"{sys.executable} -m svtrans.recon_stub {{workdir}} --use-keys"


def fixed_cfg(k=5, **kw):
    return EndNodeConfig(
        selection=SelectionConfig(mode="fixed", k=k),
        redundancy=RedundancyConfig(),
        codec=CodecAdapter(),
        **kw,
    )


# ---------------------------------------------------------------------------
# Reconstructors
# ---------------------------------------------------------------------------

def test_classical_no_keys_is_bicubic(rng):
    lr = rand_sequence(rng, 8, 8, 3)
    out = classical_reconstruct(lr, [], [])
    for a, b in zip(out.frames, lr.frames):
        assert np.array_equal(a, upsample_4x(b))


def test_classical_all_keys_verbatim(rng):
    lr = rand_sequence(rng, 8, 8, 3)
    keys = [rand_frame(rng, 32, 32) for _ in range(3)]
    out = classical_reconstruct(lr, keys, [1, 2, 3])
    for a, b in zip(out.frames, keys):
        assert np.array_equal(a, b)


def test_classical_dimension_check(rng):
    lr = rand_sequence(rng, 8, 8, 2)
    with pytest.raises(ReconstructError, match="match"):
        classical_reconstruct(lr, [rand_frame(rng, 16, 16)], [1])


def test_external_stub_matches_plain_bicubic(rng):
    lr = rand_sequence(rng, 8, 8, 4)
    keys = [rand_frame(rng, 32, 32)]
    out = external_reconstruct(lr, keys, [2], [], STUB)
    plain = classical_reconstruct(lr, [], [])
    for a, b in zip(out.frames, plain.frames):
        assert np.array_equal(a, b)


def test_external_stub_with_keys_matches_classical(rng):
    lr = rand_sequence(rng, 8, 8, 4)
    keys = [rand_frame(rng, 32, 32)]
    out = external_reconstruct(lr, keys, [2], [], STUB_KEYS)
    expect = classical_reconstruct(lr, keys, [2])
    for a, b in zip(out.frames, expect.frames):
        assert np.array_equal(a, b)


def test_external_wrong_frame_count_rejected(rng, tmp_path):
    # a command that drops the last frame violates the contract
    script = tmp_path / "bad.py"
    script.write_text(
        "import sys\n"
        "from svtrans.frames import read_raw, write_raw\n"
        "from svtrans.resample import upsample_sequence\n"
        "wd = sys.argv[1]\n"
        "lr = read_raw(wd + '/lr.raw')\n"
        "hr = upsample_sequence(lr)\n"
        "write_raw(hr.replace_frames(hr.frames[:-1]), wd + '/hr.raw')\n"
    )
    lr = rand_sequence(rng, 8, 8, 3)
    with pytest.raises(ReconstructError, match="frames"):
        external_reconstruct(lr, [], [], [], f"{sys.executable} {script} {{workdir}}")


def test_external_command_failure(rng):
    lr = rand_sequence(rng, 8, 8, 2)
    with pytest.raises(ReconstructError, match="failed"):
        external_reconstruct(lr, [], [], [], "false # {workdir}")


# ---------------------------------------------------------------------------
# End-node pipeline
# ---------------------------------------------------------------------------

def test_static_video_pipeline_example(rng):
    f = rand_frame(rng, 32, 32)
    source = VideoSequence(tuple([f.copy() for _ in range(10)]), 10)
    result = build_bundle(source, fixed_cfg(k=5))
    assert tuple(result.key_index) == (1, 6)
    assert tuple(result.red_index) == (2, 3, 4, 5, 7, 8, 9, 10)
    assert len(result.lr_surviving) == 2  # exempt key positions survive
    assert result.lr_full.width == 8 and result.lr_full.height == 8


def test_lr_dimensions_in_header(rng):
    source = rand_sequence(rng, 720, 1280, 2)
    result = build_bundle(source, fixed_cfg(k=2))
    from svtrans.bundle import unpack

    out = unpack(result.bundle, CodecAdapter())
    assert out.meta.lr_width == 320 and out.meta.lr_height == 180


def test_key_positions_never_dropped(rng):
    for seed in range(5):
        clip_rng = np.random.default_rng(seed)
        move = [bool(clip_rng.random() < 0.3) for _ in range(14)]
        source = surveillance_clip(clip_rng, 32, 32, 15, move_schedule=move)
        result = build_bundle(source, fixed_cfg(k=4))
        assert not (set(result.key_index) & set(result.red_index))
        survivors = set(range(1, 16)) - set(result.red_index)
        assert set(result.key_index) <= survivors


def test_redundancy_first_order(rng):
    f = rand_frame(rng, 32, 32)
    source = VideoSequence(tuple([f.copy() for _ in range(10)]), 10)
    result = build_bundle(source, fixed_cfg(k=2, order="redundancy-first"))
    # everything after frame 1 is redundant; keys are selected on survivors
    assert tuple(result.red_index) == tuple(range(2, 11))
    assert tuple(result.key_index) == (1,)


def test_pipeline_stage_error_identity(rng):
    source = rand_sequence(rng, 30, 30, 2)  # not divisible by 4
    with pytest.raises(PipelineError, match=r"\[downsample\]"):
        build_bundle(source, fixed_cfg(k=2))


# ---------------------------------------------------------------------------
# Cloud processing and loopback transport
# ---------------------------------------------------------------------------

def test_process_bundle_static_video(rng):
    f = rand_frame(rng, 32, 32)
    source = VideoSequence(tuple([f.copy() for _ in range(10)]), 10)
    result = build_bundle(source, fixed_cfg(k=5))
    hr, unpacked, _ = process_bundle(result.bundle, CodecAdapter(), Reconstructor())
    assert len(hr) == 10
    for t in range(2, 11):
        assert np.array_equal(hr[t - 1], hr[0])
    # key positions reconstruct exactly in raw mode
    assert np.array_equal(hr[0], f)


def test_process_bundle_key_positions_exact(rng):
    source = surveillance_clip(rng, 32, 32, 12)
    result = build_bundle(source, fixed_cfg(k=4))
    hr, _, _ = process_bundle(result.bundle, CodecAdapter(), Reconstructor())
    assert len(hr) == 12
    for i in result.key_index:
        assert psnr(hr[i - 1], source[i - 1]) == 100.0


def test_loopback_roundtrip_bit_exact(rng):
    source = surveillance_clip(rng, 32, 32, 10)
    cfg = fixed_cfg(k=4)
    local = build_bundle(source, cfg)
    with CloudServer() as server:
        report = run_end_node(source, server.address, cfg, name="loop")
        assert report["frames"] == 10
        outcome = server.outcomes[0]
    assert outcome.name == "loop"
    unpacked = outcome.unpacked
    assert tuple(unpacked.meta.key_indices) == tuple(local.key_index)
    assert tuple(unpacked.meta.red_indices) == tuple(local.red_index)
    for a, b in zip(unpacked.lr.frames, local.lr_surviving.frames):
        assert np.array_equal(a, b)
    for a, b in zip(unpacked.keyframes, local.keyframes):
        assert np.array_equal(a, b)
    # cloud output matches local processing bit-exactly
    hr_local, _, _ = process_bundle(local.bundle, CodecAdapter(), Reconstructor())
    for a, b in zip(outcome.hr.frames, hr_local.frames):
        assert np.array_equal(a, b)


def test_server_evaluation_report(rng):
    source = surveillance_clip(rng, 32, 32, 8)
    cfg = fixed_cfg(k=3)
    with CloudServer(ground_truth=source) as server:
        report = run_end_node(source, server.address, cfg)
    assert "aggregates" in report
    assert report["aggregates"]["frames"] == 8
    assert report["aggregates"]["psnr_mean_all"] > 0


def test_malformed_bundle_aborts_without_output(rng):
    with CloudServer() as server:
        with socket.create_connection(server.address, timeout=10) as sock:
            send_message(sock, MSG_HELLO, b"{}")
            recv_message(sock)
            send_message(sock, 2, b"garbage-not-a-bundle")
            # server closes without REPORT/ACK
            with pytest.raises(TransportError):
                recv_message(sock)
        import time

        deadline = time.monotonic() + 5
        while not server.errors and time.monotonic() < deadline:
            time.sleep(0.01)
        assert server.errors
        assert not server.outcomes


def test_unknown_message_type_rejected(rng):
    with CloudServer() as server:
        with socket.create_connection(server.address, timeout=10) as sock:
            sock.sendall(struct.pack("<BI", 99, 0))
            with pytest.raises(TransportError):
                recv_message(sock)


def test_external_reconstructor_through_server(rng):
    source = surveillance_clip(rng, 24, 24, 6)
    cfg = fixed_cfg(k=3)
    recon = Reconstructor(kind="external", command=STUB_KEYS)
    with CloudServer(reconstructor=recon, ground_truth=source) as server:
        report = run_end_node(source, server.address, cfg)
        outcome = server.outcomes[0]
    assert len(outcome.hr) == 6
    expect, _, _ = process_bundle(build_bundle(source, cfg).bundle, CodecAdapter(), Reconstructor())
    for a, b in zip(outcome.hr.frames, expect.frames):
        assert np.array_equal(a, b)
    assert report["aggregates"]["psnr_mean_all"] > 0


def test_server_multiple_streams(rng):
    cfg = fixed_cfg(k=3)
    clips = [surveillance_clip(np.random.default_rng(i), 24, 24, 5) for i in range(3)]
    with CloudServer() as server:
        for i, clip in enumerate(clips):
            run_end_node(clip, server.address, cfg, name=f"cam{i}")
        names = sorted(o.name for o in server.outcomes)
    assert names == ["cam0", "cam1", "cam2"]
