"""Command-line front end.

Subcommands: downsample, detect-redundant, select-keyframes, pack, unpack,
send, serve, evaluate, report. Exit codes: 0 success, 1 usage error,
2 data error, 3 external-process error.

A JSON config file (--config) provides defaults; flags override it. Every
run that writes an output directory captures its effective config there as
run.json so the run is reproducible from that file alone.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path

from .bundle import BundleError, CodecAdapter, CodecError, measure_bits, unpack
from .endcloud import (
    CloudServer,
    EndNodeConfig,
    PipelineError,
    Reconstructor,
    ReconstructError,
    TransportError,
    build_bundle,
    run_end_node,
    write_recon_workdir,
)
from .frames import FrameError, read_sequence, write_raw
from .keyframes import SelectionConfig, select_keyframes
from .metrics import BppRow, bpp_saving, interframe_psnr_curve, system_bpp
from .quality import QualityReport, aggregate_rows, evaluate
from .redundancy import RedundancyConfig, detect_redundant
from .resample import downsample_sequence

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_EXTERNAL = 3


class UsageError(ValueError):
    pass


def _load_config(path) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {p} is not valid JSON: {exc}")


def _merged(cfg: dict, section: str, overrides: dict) -> dict:
    base = dict(cfg.get(section, {}))
    base.update({k: v for k, v in overrides.items() if v is not None})
    return base


def _selection_config(cfg: dict, args) -> SelectionConfig:
    merged = _merged(
        cfg,
        "selection",
        {
            "mode": getattr(args, "mode", None),
            "k": getattr(args, "k", None),
            "w": getattr(args, "w", None),
            "d_min": getattr(args, "d_min", None),
            "include_endpoints": True if getattr(args, "endpoints", False) else None,
        },
    )
    return SelectionConfig(
        mode=merged.get("mode", "fixed"),
        k=int(merged.get("k", 33)),
        w=int(merged.get("w", 13)),
        d_min=merged.get("d_min"),
        include_endpoints=bool(merged.get("include_endpoints", False)),
    )


def _redundancy_config(cfg: dict, args) -> RedundancyConfig:
    merged = _merged(
        cfg,
        "redundancy",
        {
            "tau_int": getattr(args, "tau_int", None),
            "tau_mot": getattr(args, "tau_mot", None),
            "m": getattr(args, "m", None),
        },
    )
    return RedundancyConfig(
        tau_int=float(merged.get("tau_int", 0.5)),
        tau_mot=float(merged.get("tau_mot", 15.0)),
        m=int(merged.get("m", 2)),
    )


def _codec_adapter(cfg: dict, args) -> CodecAdapter:
    codec = dict(cfg.get("codec", {}))
    if getattr(args, "codec_mode", None):
        codec["mode"] = args.codec_mode
    return CodecAdapter.from_config({"codec": codec})


def _reconstructor(cfg: dict, args) -> Reconstructor:
    merged = _merged(
        cfg,
        "reconstructor",
        {
            "kind": getattr(args, "reconstructor", None),
            "command": getattr(args, "recon_command", None),
        },
    )
    return Reconstructor(kind=merged.get("kind", "classical"), command=merged.get("command"))


def _end_config(cfg: dict, args) -> EndNodeConfig:
    return EndNodeConfig(
        selection=_selection_config(cfg, args),
        redundancy=_redundancy_config(cfg, args),
        codec=_codec_adapter(cfg, args),
        order=getattr(args, "order", None) or cfg.get("order", "keys-first"),
    )


def _parse_index_list(text: str | None):
    if not text:
        return ()
    return tuple(int(s) for s in text.split(",") if s.strip())


def _capture_run(outdir: Path, payload: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "run.json").write_text(json.dumps(payload, indent=2, default=str) + "\n")


def _end_config_payload(end_cfg: EndNodeConfig) -> dict:
    return {
        "selection": asdict(end_cfg.selection),
        "redundancy": asdict(end_cfg.redundancy),
        "codec": {"mode": end_cfg.codec.mode},
        "order": end_cfg.order,
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_downsample(args, cfg) -> int:
    seq = read_sequence(args.input, args.format)
    out = downsample_sequence(seq)
    write_raw(out, args.output)
    print(f"downsampled {len(out)} frames to {out.width}x{out.height} -> {args.output}")
    return EXIT_OK


def cmd_detect_redundant(args, cfg) -> int:
    seq = read_sequence(args.input, args.format)
    idx = detect_redundant(seq, _redundancy_config(cfg, args))
    print(",".join(str(i) for i in idx))
    return EXIT_OK


def cmd_select_keyframes(args, cfg) -> int:
    sel = _selection_config(cfg, args)
    if args.input:
        seq = read_sequence(args.input, args.format)
        t = len(seq)
        curve = interframe_psnr_curve(seq) if sel.mode == "adaptive" and t >= 2 else None
    else:
        if args.T is None:
            raise UsageError("select-keyframes needs --input or --T")
        if sel.mode == "adaptive":
            raise UsageError("adaptive selection needs --input to compute the PSNR curve")
        t, curve = args.T, None
    idx = select_keyframes(curve, sel, t)
    print(",".join(str(i) for i in idx))
    return EXIT_OK


def cmd_pack(args, cfg) -> int:
    source = read_sequence(args.input, args.format)
    end_cfg = _end_config(cfg, args)
    result = build_bundle(source, end_cfg)
    Path(args.output).write_bytes(result.bundle)
    denom_frames = len(source)
    rows = {
        "lr": BppRow("lr", result.section_bits["lr_bits"], source.width, source.height, denom_frames),
        "keys": BppRow("keys", result.section_bits["key_bits"], source.width, source.height, denom_frames),
        "header": BppRow("header", result.section_bits["header_bits"], source.width, source.height, denom_frames),
    }
    system = system_bpp(rows.values())
    summary = {
        "key_indices": list(result.key_index),
        "red_indices": list(result.red_index),
        "section_bits": result.section_bits,
        "bpp": {name: row.bpp for name, row in rows.items()} | {"system": system.bpp},
        "config": _end_config_payload(end_cfg),
        "source": str(args.input),
    }
    if args.baseline:
        hr_bits = len(end_cfg.codec.encode_video(source)) * 8
        baseline = BppRow("hr", hr_bits, source.width, source.height, denom_frames)
        summary["bpp"]["hr"] = baseline.bpp
        summary["bpp"]["saving"] = bpp_saving(baseline, system)
    if args.run_dir:
        _capture_run(Path(args.run_dir), summary)
    print(f"keyframes: {','.join(str(i) for i in result.key_index)}")
    print(f"redundant: {','.join(str(i) for i in result.red_index)}")
    print(f"bundle: {len(result.bundle)} bytes -> {args.output}")
    for name, row in rows.items():
        print(f"bpp[{name}]: {row.bpp:.6f}")
    print(f"bpp[system]: {system.bpp:.6f}")
    if args.baseline:
        print(f"bpp[hr]: {summary['bpp']['hr']:.6f}")
        print(f"bpp[saving]: {summary['bpp']['saving'] * 100:.2f}%")
    return EXIT_OK


def cmd_unpack(args, cfg) -> int:
    data = Path(args.input).read_bytes()
    unpacked = unpack(data, _codec_adapter(cfg, args))
    outdir = Path(args.output)
    write_recon_workdir(
        outdir,
        unpacked.lr,
        unpacked.keyframes,
        unpacked.meta.key_indices,
        unpacked.meta.red_indices,
    )
    meta = {
        "width": unpacked.meta.width,
        "height": unpacked.meta.height,
        "frames": unpacked.meta.total_frames,
        "fps": str(unpacked.meta.fps),
        "channels": unpacked.meta.channels,
        "key_indices": list(unpacked.meta.key_indices),
        "red_indices": list(unpacked.meta.red_indices),
        "section_bits": unpacked.section_bits,
    }
    (outdir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"unpacked {len(unpacked.lr)} LR frames, {len(unpacked.keyframes)} key frames -> {outdir}")
    return EXIT_OK


def cmd_send(args, cfg) -> int:
    source = read_sequence(args.input, args.format)
    host, _, port = args.to.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"--to must be host:port, got {args.to!r}")
    report = run_end_node(source, (host, int(port)), _end_config(cfg, args), name=args.name)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_serve(args, cfg) -> int:
    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"--listen must be host:port, got {args.listen!r}")
    gt = read_sequence(args.gt, None) if args.gt else None
    server = CloudServer(
        address=(host, int(port)),
        codec=_codec_adapter(cfg, args),
        reconstructor=_reconstructor(cfg, args),
        ground_truth=gt,
        output_dir=args.output,
    )
    with server:
        print(f"listening on {server.address[0]}:{server.address[1]}", flush=True)
        import time

        while True:
            done = len(server.outcomes) + len(server.errors)
            if args.once and done >= args.once:
                break
            time.sleep(0.05)
    if server.errors:
        print("; ".join(server.errors), file=sys.stderr)
        return EXIT_DATA
    print(f"served {len(server.outcomes)} stream(s)")
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    recon = read_sequence(args.recon, None)
    reference = read_sequence(args.reference, None)
    report = evaluate(
        recon,
        reference,
        key_indices=_parse_index_list(args.keys),
        red_indices=_parse_index_list(args.redundant),
    )
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    report.write_csv(outdir / "quality.csv")
    payload = {
        "aggregates": report.aggregates,
        "keys": list(_parse_index_list(args.keys)),
        "redundant": list(_parse_index_list(args.redundant)),
    }
    if args.k is not None:
        payload["k"] = args.k
    _capture_run(outdir, payload)
    for name in ("psnr_mean_all", "psnr_mean_excl_keys", "ssim_mean_all", "ssim_mean_excl_keys"):
        value = report.aggregates.get(name)
        if value is not None:
            print(f"{name}: {value:.4f}")
    return EXIT_OK


def cmd_report(args, cfg) -> int:
    """Aggregate per-run quality CSVs into one summary table (one row per
    run, keyed by the sweep parameter k when present)."""
    runs_dir = Path(args.runs)
    if not runs_dir.is_dir():
        raise UsageError(f"--runs must be a directory: {runs_dir}")
    rows = []
    for sub in sorted(runs_dir.iterdir()):
        quality_csv = sub / "quality.csv"
        if not sub.is_dir() or not quality_csv.exists():
            continue
        report = QualityReport.read_csv(quality_csv)
        agg = aggregate_rows(report.rows)
        run_meta = {}
        run_json = sub / "run.json"
        if run_json.exists():
            run_meta = json.loads(run_json.read_text())
        bpp = run_meta.get("bpp", {})
        rows.append(
            {
                "run": sub.name,
                "k": run_meta.get("k", ""),
                "frames": agg["frames"],
                "psnr_mean_excl_keys": agg["psnr_mean_excl_keys"],
                "ssim_mean_excl_keys": agg["ssim_mean_excl_keys"],
                "psnr_mean_all": agg["psnr_mean_all"],
                "ssim_mean_all": agg["ssim_mean_all"],
                "lr_bpp": bpp.get("lr", ""),
                "key_bpp": bpp.get("keys", ""),
                "system_bpp": bpp.get("system", ""),
                "hr_bpp": bpp.get("hr", ""),
                "bpp_saving": bpp.get("saving", ""),
            }
        )
    if not rows:
        raise FrameError(f"no run directories with quality.csv under {runs_dir}")
    rows.sort(key=lambda r: (r["k"] if isinstance(r["k"], (int, float)) else 1 << 30, r["run"]))
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} row(s) -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svtrans", description=__doc__)
    parser.add_argument("--config", help="JSON config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_io(p, output=True):
        p.add_argument("--input", required=True)
        p.add_argument("--format", choices=["raw", "images"], default=None)
        if output:
            p.add_argument("--output", required=True)

    p = sub.add_parser("downsample", help="bicubic 4x downsample a sequence")
    add_common_io(p)
    p.set_defaults(fn=cmd_downsample)

    p = sub.add_parser("detect-redundant", help="print 1-based redundant frame indices")
    add_common_io(p, output=False)
    p.add_argument("--tau-int", dest="tau_int", type=float)
    p.add_argument("--tau-mot", dest="tau_mot", type=float)
    p.add_argument("--m", type=int)
    p.set_defaults(fn=cmd_detect_redundant)

    p = sub.add_parser("select-keyframes", help="print 1-based key frame indices")
    p.add_argument("--input")
    p.add_argument("--format", choices=["raw", "images"], default=None)
    p.add_argument("--T", type=int, help="frame count (fixed mode without --input)")
    p.add_argument("--mode", choices=["fixed", "adaptive"])
    p.add_argument("--k", type=int)
    p.add_argument("--w", type=int)
    p.add_argument("--d-min", dest="d_min", type=int)
    p.add_argument("--endpoints", action="store_true")
    p.set_defaults(fn=cmd_select_keyframes)

    p = sub.add_parser("pack", help="run the end pipeline and write a bundle file")
    add_common_io(p)
    p.add_argument("--mode", choices=["fixed", "adaptive"])
    p.add_argument("--k", type=int)
    p.add_argument("--w", type=int)
    p.add_argument("--d-min", dest="d_min", type=int)
    p.add_argument("--endpoints", action="store_true")
    p.add_argument("--tau-int", dest="tau_int", type=float)
    p.add_argument("--tau-mot", dest="tau_mot", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--codec-mode", choices=["raw", "external"])
    p.add_argument("--order", choices=["keys-first", "redundancy-first"])
    p.add_argument("--baseline", action="store_true", help="also encode the HR stream for the saving column")
    p.add_argument("--run-dir", help="directory to capture run.json into")
    p.set_defaults(fn=cmd_pack)

    p = sub.add_parser("unpack", help="unpack a bundle into an exchange directory")
    add_common_io(p)
    p.add_argument("--codec-mode", choices=["raw", "external"])
    p.set_defaults(fn=cmd_unpack)

    p = sub.add_parser("send", help="run the end node against a cloud server")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["raw", "images"], default=None)
    p.add_argument("--to", required=True, help="host:port")
    p.add_argument("--name", default="stream")
    p.add_argument("--mode", choices=["fixed", "adaptive"])
    p.add_argument("--k", type=int)
    p.add_argument("--w", type=int)
    p.add_argument("--d-min", dest="d_min", type=int)
    p.add_argument("--endpoints", action="store_true")
    p.add_argument("--tau-int", dest="tau_int", type=float)
    p.add_argument("--tau-mot", dest="tau_mot", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--codec-mode", choices=["raw", "external"])
    p.add_argument("--order", choices=["keys-first", "redundancy-first"])
    p.set_defaults(fn=cmd_send)

    p = sub.add_parser("serve", help="run the cloud node")
    p.add_argument("--listen", required=True, help="host:port (port 0 picks one)")
    p.add_argument("--output", help="directory for reconstructed streams")
    p.add_argument("--gt", help="ground-truth sequence for evaluation mode")
    p.add_argument("--reconstructor", choices=["classical", "external"])
    p.add_argument("--recon-command", dest="recon_command")
    p.add_argument("--codec-mode", choices=["raw", "external"])
    p.add_argument("--once", type=int, default=0, help="exit after N streams")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("evaluate", help="per-frame PSNR/SSIM report")
    p.add_argument("--recon", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--keys", help="comma-separated 1-based key positions")
    p.add_argument("--redundant", help="comma-separated 1-based redundant positions")
    p.add_argument("--k", type=int, help="sweep parameter recorded in run.json")
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate run directories into a summary CSV")
    p.add_argument("--runs", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = _load_config(args.config)
        return args.fn(args, cfg)
    except UsageError as exc:
        print(f"svtrans: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CodecError, ReconstructError, TransportError) as exc:
        print(f"svtrans: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except (FrameError, BundleError, PipelineError, ValueError, OSError) as exc:
        if isinstance(exc.__cause__, (CodecError, ReconstructError)):
            print(f"svtrans: {exc}", file=sys.stderr)
            return EXIT_EXTERNAL
        print(f"svtrans: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
