"""Command-line surface: data generation, ingestion, training, reporting,
and the device/host/e2e runtime commands."""

from __future__ import annotations

import argparse
import io
import sys
from pathlib import Path

import numpy as np

from . import matfile, signal, training
from .device import Device, DeviceConfig, serve
from .errors import BearingEdgeError
from .host import (
    e2e_run,
    format_e2e_summary,
    format_stream_summary,
    host_stream,
)
from .model import (
    VENDOR_TOOL_FLASH_KB,
    VENDOR_TOOL_MACC,
    VENDOR_TOOL_RAM_KB,
    canonical_architecture,
    init_params,
    load_model,
    macc_per_layer,
    parameter_count,
    plan_memory,
    save_model,
)


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"{text!r} is not host:port")
    return host, int(port)


def _parse_rate(text: str):
    if text == "max":
        return None
    rate = float(text)
    if rate <= 0:
        raise argparse.ArgumentTypeError("rate must be positive or 'max'")
    return rate


def cmd_gen_data(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for class_id in range(signal.NUM_CLASSES):
        recording = signal.generate_synthetic(class_id, args.length, args.seed)
        path = out_dir / f"{recording.label.name}.csv"
        signal.write_recording_csv(recording, path)
        entries.append((path.name, recording.label))
    signal.write_manifest(entries, out_dir / "manifest.txt")
    print(f"wrote {len(entries)} recordings and manifest.txt to {out_dir}")
    return 0


def cmd_ingest_mat(args) -> int:
    recording = matfile.load_recording(
        args.infile,
        suffix=args.channel,
        sample_rate_hz=args.rate,
        rpm=args.rpm,
        label=signal.label_by_id(args.label),
    )
    signal.write_recording_csv(recording, args.out)
    print(f"wrote {len(recording)} samples from {recording.source_name} "
          f"to {args.out}")
    return 0


def _frames_from_manifest(manifest_path, frames_per_recording, seed):
    frames = []
    for index, (path, label) in enumerate(signal.read_manifest(manifest_path)):
        recording = signal.read_recording_csv(path, label=label)
        frames.extend(signal.sample_windows(
            recording, frames_per_recording, seed=seed * 100_003 + index))
    return frames


def cmd_train(args) -> int:
    cfg = training.parse_train_config(args.config)
    frames = _frames_from_manifest(args.data, args.frames_per_recording,
                                   cfg.seed)
    dataset = signal.build_dataset(
        frames, cfg.train_frac, cfg.val_frac, cfg.test_frac, seed=cfg.seed)
    arch = canonical_architecture(cfg.activation)
    params, report = training.train(dataset, arch, cfg)
    save_model(params, arch, args.out)
    if args.metrics:
        training.write_metrics_csv(report, args.metrics)
    if args.plot:
        from .figures import save_training_curves

        save_training_curves(report, args.plot)
    print(f"best val acc {report.best_val_accuracy:.4f} "
          f"at epoch {report.best_epoch}; model -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    arch, params = load_model(args.model)
    frames = _frames_from_manifest(args.data, args.frames_per_recording,
                                   args.seed)
    result = training.evaluate(params, arch, frames)
    print(f"frames    : {len(frames)}")
    print(f"accuracy  : {result.accuracy:.4f}")
    print(f"mean loss : {result.mean_loss:.4f}")
    print("confusion (true class by row):")
    for row in result.confusion:
        print("  " + " ".join(f"{v:>5}" for v in row))
    return 0


def cmd_ablate(args) -> int:
    cfg = training.parse_train_config(args.config)
    frames = _frames_from_manifest(args.data, args.frames_per_recording,
                                   cfg.seed)
    dataset = signal.build_dataset(
        frames, cfg.train_frac, cfg.val_frac, cfg.test_frac, seed=cfg.seed)
    report = training.ablation_suite(dataset, canonical_architecture(), cfg)
    print("config            best_val_acc  best_epoch  oscillation")
    for entry in report.entries:
        print(f"{entry.name:<16}  {entry.report.best_val_accuracy:>12.4f}  "
              f"{entry.report.best_epoch:>10}  {entry.oscillation:>11.5f}")
    if args.plot:
        from .figures import save_ablation_curves

        save_ablation_curves(report, args.plot)
    return 0


def _format_report_rows(arch):
    report = plan_memory(arch)
    names = arch.layer_names()
    maccs = macc_per_layer(arch)
    params = []
    from .model import _weight_shapes

    for entry in _weight_shapes(arch):
        if entry is None:
            params.append(0)
        else:
            w, b = entry
            params.append(int(np.prod(w)) + int(np.prod(b)))

    def dims_text(d):
        return f"{d[0]}x{d[1]}x{d[2]}" if isinstance(d, tuple) else str(d)

    rows = [("input", dims_text(arch.input_dims), "-", "-",
             str(int(np.prod(arch.input_dims)) * 4))]
    for name, shape, p, m, ram in zip(names, report.per_layer_shapes, params,
                                      maccs, report.per_layer_ram_bytes):
        rows.append((name, dims_text(shape), str(p), str(m), str(ram)))
    return rows, report


def cmd_report(args) -> int:
    arch, _params = load_model(args.model)
    rows, report = _format_report_rows(arch)
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    header = ("layer", "output", "params", "macc", "ram_bytes")
    widths = [max(w, len(h)) for w, h in zip(widths, header)]

    def fmt(row):
        return "  ".join(col.ljust(w) for col, w in zip(row, widths)).rstrip()

    lines = [fmt(header)]
    lines.extend(fmt(row) for row in rows)
    total_params = parameter_count(arch)
    lines.append(fmt(("total", "", str(total_params),
                      str(report.macc_total), "")))
    lines.append(f"flash bytes : {report.flash_bytes} "
                 f"({report.flash_bytes / 1024:.2f} KB)")
    lines.append(f"peak ram    : {report.peak_ram_bytes} bytes "
                 "(ping-pong, adjacent layer pairs)")
    lines.append(
        f"vendor tool reference (different counting convention, not asserted): "
        f"macc={VENDOR_TOOL_MACC} flash={VENDOR_TOOL_FLASH_KB}KB "
        f"ram={VENDOR_TOOL_RAM_KB}KB"
    )
    text = "\n".join(lines)
    print(text)
    if args.csv:
        csv_lines = ["layer,output,params,macc,ram_bytes"]
        csv_lines += [",".join(row) for row in rows]
        Path(args.csv).write_text("\n".join(csv_lines) + "\n")
    if args.figure:
        from .figures import save_ram_profile

        save_ram_profile(arch, report, args.figure)
    return 0


def cmd_export_model(args) -> int:
    arch = canonical_architecture(args.activation)
    params = init_params(arch, seed=args.seed)
    save_model(params, arch, args.out)
    print(f"wrote fresh model ({parameter_count(arch)} parameters, "
          f"seed {args.seed}) to {args.out}")
    return 0


def cmd_device(args) -> int:
    cfg = DeviceConfig(
        model_path=Path(args.model),
        host=args.listen[0],
        port=args.listen[1],
        tick_unit_ms=args.tick_unit,
        max_sessions=args.max_sessions,
    )
    print(f"device listening on {cfg.host}:{cfg.port}")
    serve(cfg)
    return 0


def cmd_host(args) -> int:
    recording = signal.read_recording_csv(args.infile)
    summary = host_stream(args.connect, recording, k=args.k, rate=args.rate)
    print(format_stream_summary(summary), end="")
    return 0


def cmd_e2e(args) -> int:
    # cards go to the in-process device's own sink; stdout gets the summary
    device = Device.from_file(args.model, tick_unit_ms=args.tick_unit,
                              out=io.StringIO())
    summary = e2e_run(device, k=args.k, seed=args.seed,
                      samples_per_class=args.samples_per_class)
    print(format_e2e_summary(summary), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bearingedge",
        description="Desk-scale real-time bearing fault diagnosis toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic recordings + manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--length", type=int, default=24_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("ingest-mat", help="extract a MAT channel to CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--channel", default="_DE_time")
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--rate", type=int, default=signal.DEFAULT_SAMPLE_RATE_HZ)
    p.add_argument("--rpm", type=int, default=signal.DEFAULT_RPM)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest_mat)

    p = sub.add_parser("train", help="train a model from a manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--plot")
    p.add_argument("--frames-per-recording", type=int, default=200)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on manifest data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--frames-per-recording", type=int, default=50)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="run the activation/schedule comparison")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--plot")
    p.add_argument("--frames-per-recording", type=int, default=100)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("report", help="print the resource report for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--csv")
    p.add_argument("--figure")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("export-model", help="write a freshly initialized model")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--activation", default="tanh", choices=("tanh", "relu"))
    p.set_defaults(fn=cmd_export_model)

    p = sub.add_parser("device", help="serve diagnosis sessions over TCP")
    p.add_argument("--model", required=True)
    p.add_argument("--listen", type=_parse_endpoint, default=("127.0.0.1", 9430))
    p.add_argument("--tick-unit", type=float, default=1.0,
                   help="milliseconds per reported tick")
    p.add_argument("--max-sessions", type=int, default=0)
    p.set_defaults(fn=cmd_device)

    p = sub.add_parser("host", help="stream a CSV recording to a device")
    p.add_argument("--connect", type=_parse_endpoint, required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--rate", type=_parse_rate, default=None,
                   help="samples per second, or 'max'")
    p.set_defaults(fn=cmd_host)

    p = sub.add_parser("e2e", help="device+host loopback run over all classes")
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=9000)
    p.add_argument("--samples-per-class", type=int, default=1000)
    p.add_argument("--tick-unit", type=float, default=1.0)
    p.set_defaults(fn=cmd_e2e)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (BearingEdgeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
