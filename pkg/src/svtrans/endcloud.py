"""End node (camera side) and cloud node: pipeline orchestration, message
framing over a reliable byte stream, and the pluggable reconstructor that
turns surviving LR frames plus HR key frames back into HR video.

Pipeline order at the end node: downsample every frame, select key frames
on the full LR sequence, extract HR key frames from the source, detect and
drop redundant frames with key positions exempt, pack, send. The
alternative ordering (redundancy elimination first, key selection on the
surviving frames) is available for experiments via ``order``.
"""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bundle import BundleError, CodecAdapter, UnpackedBundle, measure_bits, pack, unpack
from .frames import FrameError, VideoSequence, read_raw, write_raw
from .keyframes import KeyFrameIndex, SelectionConfig, select_keyframes
from .metrics import interframe_psnr_curve
from .redundancy import (
    RedundancyConfig,
    RedundancyIndex,
    detect_redundant,
    restore_redundant,
    surviving_positions,
)
from .resample import downsample_sequence, upsample_4x

MSG_HELLO = 1
MSG_BUNDLE = 2
MSG_ACK = 3
MSG_REPORT = 4
MSG_BYE = 5

_MSG_NAMES = {1: "HELLO", 2: "BUNDLE", 3: "ACK", 4: "REPORT", 5: "BYE"}
MAX_MESSAGE = 1 << 31


class TransportError(RuntimeError):
    """Protocol violation or connection failure."""


class PipelineError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class ReconstructError(RuntimeError):
    """Reconstructor contract violation."""


# ---------------------------------------------------------------------------
# Message framing: type u8 | length u32 LE | body
# ---------------------------------------------------------------------------

def send_message(sock, msg_type: int, body: bytes = b"") -> None:
    if msg_type not in _MSG_NAMES:
        raise TransportError(f"unknown message type {msg_type}")
    sock.sendall(struct.pack("<BI", msg_type, len(body)) + body)


def _recv_exact(sock, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(1 << 20, n - len(buf)))
        if not chunk:
            raise TransportError(f"connection closed mid-message ({len(buf)}/{n} bytes)")
        buf.extend(chunk)
    return bytes(buf)


def recv_message(sock) -> tuple:
    head = _recv_exact(sock, 5)
    msg_type, length = struct.unpack("<BI", head)
    if msg_type not in _MSG_NAMES:
        raise TransportError(f"unknown message type {msg_type}")
    if length > MAX_MESSAGE:
        raise TransportError(f"message length {length} exceeds limit")
    return msg_type, _recv_exact(sock, length)


def expect_message(sock, expected: int) -> bytes:
    msg_type, body = recv_message(sock)
    if msg_type != expected:
        raise TransportError(
            f"expected {_MSG_NAMES[expected]}, got {_MSG_NAMES[msg_type]}"
        )
    return body


# ---------------------------------------------------------------------------
# Reconstructors: (surviving LR, key frames, key positions within the
# surviving sequence) -> HR sequence of the same length.
# ---------------------------------------------------------------------------

def classical_reconstruct(lr: VideoSequence, keyframes, key_positions) -> VideoSequence:
    """Bicubic-upsample every LR frame, then substitute the received HR key
    frames verbatim at their positions."""
    keyframes = list(keyframes)
    key_positions = list(key_positions)
    if len(keyframes) != len(key_positions):
        raise ReconstructError("key frame count does not match key positions")
    hr = [upsample_4x(f) for f in lr.frames]
    for frame, pos in zip(keyframes, key_positions):
        if not 1 <= pos <= len(hr):
            raise ReconstructError(f"key position {pos} outside surviving range")
        if frame.shape[:2] != hr[pos - 1].shape[:2]:
            raise ReconstructError(
                f"key frame {frame.shape} does not match 4x LR {hr[pos - 1].shape}"
            )
        hr[pos - 1] = frame
    return lr.replace_frames(hr)


def write_recon_workdir(workdir, lr: VideoSequence, keyframes, key_indices, red_indices) -> None:
    """Materialize the external-reconstructor exchange directory:
    lr.raw (+ .hdr sidecar), key_%06d.png images, indices.txt with two
    comma-separated lines (key indices, then redundant indices, 1-based
    original positions)."""
    from PIL import Image

    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    write_raw(lr, workdir / "lr.raw")
    for i, frame in enumerate(keyframes, start=1):
        mode = "L" if frame.ndim == 2 else "RGB"
        Image.fromarray(np.asarray(frame), mode=mode).save(workdir / f"key_{i:06d}.png")
    lines = [
        ",".join(str(i) for i in key_indices),
        ",".join(str(i) for i in red_indices),
    ]
    (workdir / "indices.txt").write_text("\n".join(lines) + "\n")


def external_reconstruct(
    lr: VideoSequence,
    keyframes,
    key_indices,
    red_indices,
    command_template: str,
) -> VideoSequence:
    """Run a reconstructor command over the exchange directory and read back
    hr.raw; validates the output frame count and 4x dimensions."""
    with tempfile.TemporaryDirectory(prefix="svtrecon_") as tmp:
        write_recon_workdir(tmp, lr, keyframes, key_indices, red_indices)
        cmd = command_template.format(workdir=tmp)
        proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ReconstructError(
                f"reconstructor command failed ({proc.returncode}): {cmd}\n{proc.stderr.strip()}"
            )
        out = Path(tmp) / "hr.raw"
        if not out.exists():
            raise ReconstructError("reconstructor produced no hr.raw")
        hr = read_raw(out)
    if len(hr) != len(lr):
        raise ReconstructError(f"reconstructor returned {len(hr)} frames for {len(lr)} LR frames")
    if hr.width != lr.width * 4 or hr.height != lr.height * 4:
        raise ReconstructError(
            f"reconstructor returned {hr.width}x{hr.height}, expected {lr.width * 4}x{lr.height * 4}"
        )
    return VideoSequence(hr.frames, lr.fps)


@dataclass
class Reconstructor:
    """Pluggable HR reconstructor: classical baseline or external command."""

    kind: str = "classical"
    command: str | None = None

    def __post_init__(self):
        if self.kind not in ("classical", "external"):
            raise ValueError(f"unknown reconstructor kind {self.kind!r}")
        if self.kind == "external" and not self.command:
            raise ValueError("external reconstructor needs a command template")

    def run(self, unpacked: UnpackedBundle) -> VideoSequence:
        meta = unpacked.meta
        survivors = surviving_positions(meta.total_frames, RedundancyIndex(meta.red_indices))
        pos_of = {orig: i + 1 for i, orig in enumerate(survivors)}
        key_positions = [pos_of[i] for i in meta.key_indices]
        if self.kind == "classical":
            return classical_reconstruct(unpacked.lr, unpacked.keyframes, key_positions)
        return external_reconstruct(
            unpacked.lr,
            unpacked.keyframes,
            meta.key_indices,
            meta.red_indices,
            self.command,
        )


# ---------------------------------------------------------------------------
# End-node pipeline
# ---------------------------------------------------------------------------

@dataclass
class EndNodeConfig:
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    redundancy: RedundancyConfig = field(default_factory=RedundancyConfig)
    codec: CodecAdapter = field(default_factory=CodecAdapter)
    order: str = "keys-first"  # keys-first | redundancy-first

    def __post_init__(self):
        if self.order not in ("keys-first", "redundancy-first"):
            raise ValueError(f"unknown pipeline order {self.order!r}")


@dataclass(frozen=True)
class PipelineResult:
    bundle: bytes
    lr_full: VideoSequence
    lr_surviving: VideoSequence
    key_index: KeyFrameIndex
    red_index: RedundancyIndex
    keyframes: tuple
    section_bits: dict


def _stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(stage, str(exc)) from exc


def build_bundle(source: VideoSequence, cfg: EndNodeConfig) -> PipelineResult:
    """Run the end-node pipeline on an HR sequence and serialize the bundle."""
    t = len(source)
    lr = _stage("downsample", downsample_sequence, source)

    if cfg.order == "keys-first":
        curve = None
        if cfg.selection.mode == "adaptive" and t >= 2:
            curve = _stage("select-keyframes", interframe_psnr_curve, lr)
        key_index = _stage("select-keyframes", select_keyframes, curve, cfg.selection, t)
        red_index = _stage(
            "detect-redundant", detect_redundant, lr, cfg.redundancy, tuple(key_index)
        )
    else:
        red_index = _stage("detect-redundant", detect_redundant, lr, cfg.redundancy)
        survivors = surviving_positions(t, red_index)
        lr_srv = lr.replace_frames([lr.frames[i - 1] for i in survivors])
        curve = None
        if cfg.selection.mode == "adaptive" and len(lr_srv) >= 2:
            curve = _stage("select-keyframes", interframe_psnr_curve, lr_srv)
        local = _stage("select-keyframes", select_keyframes, curve, cfg.selection, len(survivors))
        key_index = KeyFrameIndex(tuple(survivors[p - 1] for p in local))

    keyframes = tuple(source.frames[i - 1] for i in key_index)
    red_set = set(red_index)
    lr_surviving = lr.replace_frames(
        [f for i, f in enumerate(lr.frames, start=1) if i not in red_set]
    )
    data = _stage(
        "pack",
        pack,
        lr_surviving,
        keyframes,
        key_index,
        red_index,
        cfg.codec,
        source.width,
        source.height,
        t,
        source.fps,
    )
    return PipelineResult(
        bundle=data,
        lr_full=lr,
        lr_surviving=lr_surviving,
        key_index=key_index,
        red_index=red_index,
        keyframes=keyframes,
        section_bits=measure_bits(data),
    )


def run_end_node(source: VideoSequence, address: tuple, cfg: EndNodeConfig, name: str = "stream") -> dict:
    """Build a bundle and ship it: HELLO, BUNDLE, read REPORT + ACK, BYE.
    Returns the cloud's report payload."""
    result = build_bundle(source, cfg)
    try:
        with socket.create_connection(address, timeout=60) as sock:
            send_message(sock, MSG_HELLO, json.dumps({"name": name, "version": 1}).encode())
            expect_message(sock, MSG_HELLO)
            send_message(sock, MSG_BUNDLE, result.bundle)
            report = json.loads(expect_message(sock, MSG_REPORT) or b"{}")
            expect_message(sock, MSG_ACK)
            send_message(sock, MSG_BYE)
    except OSError as exc:
        raise TransportError(f"connection to {address} failed: {exc}") from exc
    report["section_bits"] = result.section_bits
    return report


# ---------------------------------------------------------------------------
# Cloud node
# ---------------------------------------------------------------------------

def process_bundle(
    data: bytes,
    codec: CodecAdapter,
    reconstructor: Reconstructor,
    ground_truth: VideoSequence | None = None,
) -> tuple:
    """Unpack, reconstruct surviving frames, restore redundant positions.
    Returns (hr_sequence, unpacked, quality_report_or_None)."""
    unpacked = unpack(data, codec)
    meta = unpacked.meta
    hr_surviving = reconstructor.run(unpacked)
    hr_full = restore_redundant(
        hr_surviving, RedundancyIndex(meta.red_indices), meta.total_frames
    )
    report = None
    if ground_truth is not None:
        from .quality import evaluate

        report = evaluate(
            hr_full,
            ground_truth,
            key_indices=meta.key_indices,
            red_indices=meta.red_indices,
        )
    return hr_full, unpacked, report


@dataclass
class StreamOutcome:
    name: str
    hr: VideoSequence
    unpacked: UnpackedBundle
    report: object = None


class CloudServer:
    """Accepts end-node connections, processes each bundle, optionally
    evaluates against a ground-truth sequence, and stores outcomes."""

    def __init__(
        self,
        address: tuple = ("127.0.0.1", 0),
        codec: CodecAdapter | None = None,
        reconstructor: Reconstructor | None = None,
        ground_truth: VideoSequence | None = None,
        output_dir=None,
    ):
        self.codec = codec or CodecAdapter()
        self.reconstructor = reconstructor or Reconstructor()
        self.ground_truth = ground_truth
        self.output_dir = Path(output_dir) if output_dir else None
        self.outcomes: list = []
        self.errors: list = []
        self._lock = threading.Lock()
        server_self = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                try:
                    server_self._serve_connection(self.request)
                except (TransportError, BundleError, ReconstructError, FrameError) as exc:
                    with server_self._lock:
                        server_self.errors.append(str(exc))

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server(address, Handler)
        self._thread = None

    @property
    def address(self) -> tuple:
        return self._server.server_address

    def _serve_connection(self, sock) -> None:
        hello = json.loads(expect_message(sock, MSG_HELLO) or b"{}")
        name = str(hello.get("name", f"stream_{len(self.outcomes)}"))
        send_message(sock, MSG_HELLO, json.dumps({"version": 1}).encode())
        body = expect_message(sock, MSG_BUNDLE)
        hr, unpacked, report = process_bundle(
            body, self.codec, self.reconstructor, self.ground_truth
        )
        summary = {
            "name": name,
            "frames": len(hr),
            "width": hr.width,
            "height": hr.height,
            "section_bits": unpacked.section_bits,
        }
        if report is not None:
            summary["aggregates"] = report.aggregates
        send_message(sock, MSG_REPORT, json.dumps(summary).encode())
        send_message(sock, MSG_ACK)
        with self._lock:
            self.outcomes.append(StreamOutcome(name=name, hr=hr, unpacked=unpacked, report=report))
        if self.output_dir is not None:
            out = self.output_dir / name
            out.mkdir(parents=True, exist_ok=True)
            write_raw(hr, out / "hr.raw")
            if report is not None:
                report.write_csv(out / "quality.csv")
        try:
            msg_type, _ = recv_message(sock)
            if msg_type != MSG_BYE:
                raise TransportError(f"expected BYE, got {_MSG_NAMES[msg_type]}")
        except TransportError:
            pass  # peer may just close after ACK

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=10)

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()
