"""Command-line harness.

Subcommands:

* ``track``       - run the tracker over a sequence directory, emit reports
* ``bench-dop``   - synthetic moving-peak benchmark, emit per-frame CSV
* ``baseline-tm`` - exhaustive template-matching baseline over a sequence
* ``gp-selftest`` - oracle-equivalence self checks, nonzero exit on failure
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys
from pathlib import Path

from .bench import bench_rows_csv, run_dop_benchmark
from .config import ENV_CONFIG_VAR, build_tracker_config, load_config
from .harness import emit_report, load_sequence, run_baseline_tm, run_eval
from .protocol import ScoreClient
from .similarity import NccOracle
from .tracker import TrackerConfig


def _base_config(args) -> TrackerConfig:
    path = getattr(args, "config", None) or os.environ.get(ENV_CONFIG_VAR)
    values = load_config(path) if path else {}
    return build_tracker_config(values)


def _write_files(out_dir: str, files: dict[str, bytes]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, data in files.items():
        (out / name).write_bytes(data)


def _cmd_track(args) -> int:
    cfg = _base_config(args)
    seq = load_sequence(args.seq)
    client = None
    if args.oracle == "external":
        if not args.endpoint:
            print("error: --oracle external requires --endpoint", file=sys.stderr)
            return 2
        host, sep, port = args.endpoint.rpartition(":")
        if sep and port.isdigit():
            client = ScoreClient.connect_tcp(host, int(port))
        else:
            client = ScoreClient.spawn_stdio(shlex.split(args.endpoint))
        client.handshake()
        from .protocol import ExternalOracle

        oracle = ExternalOracle(client)
    else:
        oracle = NccOracle()
    try:
        report = run_eval(seq, cfg, oracle, name=args.name)
    finally:
        if client is not None:
            client.close()
    _write_files(args.out, emit_report([report], fmt=args.format))
    status = "" if report.complete else " (incomplete)"
    print(
        f"{report.name} on {seq.name}: mean IOU {report.mean_iou:.4f}, "
        f"std {report.std_iou:.4f}, {report.oracle_calls} oracle calls{status}"
    )
    return 0 if report.complete else 1


def _cmd_bench_dop(args) -> int:
    velocity = None
    if args.velocity:
        vx, vy = (float(v) for v in args.velocity.split(","))
        velocity = (vx, vy)
    result = run_dop_benchmark(
        frames=args.frames,
        budget=args.budget,
        acq=args.acq,
        seed=args.seed,
        noise_sd=args.noise_sd,
        velocity=velocity,
    )
    _write_files(args.out, {f"dop_{args.acq}_seed{args.seed}.csv": bench_rows_csv(result)})
    print(
        f"dop {args.acq}: mean error {result.mean_error_cells:.4f} grid cells "
        f"over {args.frames - 1} frames, {result.oracle_calls} oracle calls"
    )
    return 0


def _cmd_baseline_tm(args) -> int:
    seq = load_sequence(args.seq)
    report = run_baseline_tm(seq, stride=args.stride)
    _write_files(args.out, emit_report([report], fmt=args.format))
    print(
        f"tm on {seq.name}: mean IOU {report.mean_iou:.4f}, std {report.std_iou:.4f}, "
        f"{report.oracle_calls} oracle calls"
    )
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftests

    failures = 0
    for name, ok, detail in run_selftests(seed=args.seed):
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynbo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track a sequence directory")
    p.add_argument("--seq", required=True, help="sequence directory (images + groundtruth.txt)")
    p.add_argument("--oracle", choices=["ncc", "external"], default="ncc")
    p.add_argument("--endpoint", help="host:port or a command line for a stdio scorer")
    p.add_argument("--config", help=f"config file (default: ${ENV_CONFIG_VAR})")
    p.add_argument("--out", required=True, help="output directory for reports")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--name", default="dynbo", help="tracker name used in reports")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("bench-dop", help="synthetic moving-peak benchmark")
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--budget", type=int, default=80)
    p.add_argument("--acq", choices=["ei", "pi", "msei", "random"], default="msei")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--velocity", help="vx,vy per frame in unit-square coordinates")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bench_dop)

    p = sub.add_parser("baseline-tm", help="exhaustive NCC template-matching baseline")
    p.add_argument("--seq", required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=_cmd_baseline_tm)

    p = sub.add_parser("gp-selftest", help="run oracle-equivalence suites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
