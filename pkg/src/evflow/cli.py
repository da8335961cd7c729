"""Command-line entry point: gen, flow, eval, render, bench.

Numeric flags carry their unit in the help text and default to the standard
parameter table values. Out-of-range values are rejected unless --force is
given. An optional key=value config file supplies defaults that explicit
flags override.

Exit codes: 0 ok, 1 usage error, 2 input data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench as bench_mod
from . import engine as engine_mod
from .events import (SensorGeometry, read_binary_geometry, read_events,
                     read_flow, read_truth, write_events, write_flow,
                     write_truth, StreamError)
from .metrics import evaluate, report_table
from .search import SearchConfig
from .slices import (AreaEventNumber, ConstantDuration, ConstantEventNumber,
                     SliceConfig)
from .synth import Bar, Grid, RandomDots, SceneSpec, generate
from .viz import render_flow, write_ppm


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise UsageError(message)


# flag -> (min, max) validation ranges; --force bypasses.
_RANGES = {
    "d_us": (1_000, 100_000),
    "K": (1_000, 50_000),
    "k": (100, 1_000),
    "area_shift": (0, 16),
    "b": (11, 21),
    "r": (4, 12),
    "s": (1, 3),
    "p": (1, 1_000),   # the accuracy setting p=1 must not need --force
    "g": (1, 7),
}


def _add_geometry(p: _Parser) -> None:
    p.add_argument("--w", type=int, default=346, help="sensor width [pixels]")
    p.add_argument("--h", type=int, default=260, help="sensor height [pixels]")


def _add_engine_flags(p: _Parser) -> None:
    p.add_argument("--policy", choices=["duration", "count", "area"],
                   default="area", help="slice rotation policy")
    p.add_argument("--d-us", dest="d_us", type=float, default=50_000,
                   help="slice duration for the duration policy [us]")
    p.add_argument("--K", type=float, default=10_000,
                   help="global event number for the count policy [events]")
    p.add_argument("--k", type=float, default=1_000,
                   help="area event number for the area policy [events]")
    p.add_argument("--area-shift", dest="area_shift", type=int, default=5,
                   help="area cell side as a power of two [bits]")
    p.add_argument("--b", type=int, default=21, help="block dimension [pixels, odd]")
    p.add_argument("--r", type=int, default=4, help="search radius [pixels]")
    p.add_argument("--s", type=int, default=2, help="number of scales")
    p.add_argument("--g", type=int, default=3, help="bits per slice counter")
    p.add_argument("--p", type=int, default=1, help="skip count: flow for every p-th event")
    p.add_argument("--strategy", choices=["full", "diamond"], default="diamond",
                   help="block search strategy")
    p.add_argument("--feedback", choices=["on", "off"], default="on",
                   help="feedback adaptation of the rotation parameter")
    p.add_argument("--occupancy", type=float, default=0.01,
                   help="valid-pixel occupancy threshold [fraction of block]")
    p.add_argument("--max-sad", dest="max_sad", type=float, default=0.5,
                   help="max allowed normalized SAD distance [0..1]")
    p.add_argument("--use-polarity", action="store_true",
                   help="signed accumulation (keep event polarity)")
    p.add_argument("--param-min", type=float, default=None,
                   help="lower clamp for the adapted parameter [policy units]")
    p.add_argument("--param-max", type=float, default=None,
                   help="upper clamp for the adapted parameter [policy units]")
    p.add_argument("--perturb", default="",
                   help="rotation:multiplier[,rotation:multiplier...] parameter overrides")
    p.add_argument("--force", action="store_true",
                   help="skip range validation of the parameter flags")


def _build_parser() -> _Parser:
    top = _Parser(prog="evflow",
                  description="Event-camera block-matching optical flow toolkit. "
                              "Accepts --config FILE (key=value lines; explicit "
                              "flags override) before or after the subcommand.")
    sub = top.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic event stream")
    g.add_argument("out", help="output event file (.csv or binary)")
    _add_geometry(g)
    g.add_argument("--pattern", choices=["dots", "bar", "grid"], default="dots")
    g.add_argument("--density", type=float, default=0.05,
                   help="ON-cell fraction for dots [0..1]")
    g.add_argument("--bar-width", dest="bar_width", type=float, default=2.0,
                   help="bar width [pixels]")
    g.add_argument("--bar-angle", dest="bar_angle", type=float, default=90.0,
                   help="bar long-axis angle [degrees]")
    g.add_argument("--pitch", type=int, default=16, help="grid line pitch [pixels]")
    g.add_argument("--vx", type=float, default=90.0, help="x velocity [pixels/second]")
    g.add_argument("--vy", type=float, default=0.0, help="y velocity [pixels/second]")
    g.add_argument("--duration", type=float, default=1.0, help="stream length [seconds]")
    g.add_argument("--noise-rate", dest="noise_rate", type=float, default=0.0,
                   help="background noise [events/pixel/second]")
    g.add_argument("--seed", type=int, default=0, help="generator seed")
    g.add_argument("--truth", default=None,
                   help="ground-truth sidecar path (default: OUT.truth.txt)")

    f = sub.add_parser("flow", help="compute optical flow over an event file")
    f.add_argument("input", help="event file (.csv or binary)")
    f.add_argument("output", help="flow CSV path")
    _add_geometry(f)
    _add_engine_flags(f)
    f.add_argument("--stats", default=None,
                   help="statistics JSON path (default: OUTPUT.stats.json)")
    f.add_argument("--trace", default=None,
                   help="controller trace CSV path (default: none)")

    e = sub.add_parser("eval", help="score a flow CSV against ground truth")
    e.add_argument("flow", help="flow CSV path")
    e.add_argument("--truth", required=True, help="ground-truth sidecar path")
    e.add_argument("--events", default=None,
                   help="original event file, for the event-density denominator")
    e.add_argument("--events-in", dest="events_in", type=int, default=None,
                   help="event count, if --events is not given")

    r = sub.add_parser("render", help="render flow CSV to P6 pixmap frames")
    r.add_argument("flow", help="flow CSV path")
    _add_geometry(r)
    r.add_argument("--window-us", dest="window_us", type=int, default=20_000,
                   help="accumulation window per frame [us]")
    r.add_argument("--max-speed", dest="max_speed", type=float, default=200.0,
                   help="speed mapped to full brightness [pixels/second]")
    r.add_argument("--outdir", default="frames", help="output directory")
    r.add_argument("--pad", type=int, default=4, help="frame-number zero padding")

    b = sub.add_parser("bench", help="diamond-vs-full agreement and cost ratio")
    _add_geometry(b)
    _add_engine_flags(b)
    b.add_argument("--input", default=None,
                   help="event file; omit to generate a textured scene")
    b.add_argument("--density", type=float, default=0.1,
                   help="dot density of the generated scene [0..1]")
    b.add_argument("--vx", type=float, default=300.0, help="scene x velocity [pps]")
    b.add_argument("--vy", type=float, default=120.0, help="scene y velocity [pps]")
    b.add_argument("--duration", type=float, default=0.5, help="scene length [s]")
    b.add_argument("--seed", type=int, default=0, help="scene seed")
    b.add_argument("--stride", type=int, default=16,
                   help="events between sampled comparisons")
    b.add_argument("--matches", type=int, default=10_000,
                   help="stop after this many valid comparisons")
    return top


def _apply_config_file(argv: list[str]) -> list[str]:
    """Inject config-file key=value pairs as flags right after the
    subcommand, so explicit argv flags override them."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config needs a path")
    path = Path(argv[i + 1])
    if not path.exists():
        raise UsageError(f"config file {path} not found")
    injected: list[str] = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config line without '=': {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        injected.extend([f"--{key.replace('_', '-')}", value])
    rest = argv[:i] + argv[i + 2:]
    if not rest:
        raise UsageError("missing subcommand")
    return rest[:1] + injected + rest[1:]


def _validate_ranges(args: argparse.Namespace) -> None:
    if getattr(args, "force", False):
        return
    checks = {
        "d_us": getattr(args, "d_us", None),
        "K": getattr(args, "K", None),
        "k": getattr(args, "k", None),
        "area_shift": getattr(args, "area_shift", None),
        "b": getattr(args, "b", None),
        "r": getattr(args, "r", None),
        "s": getattr(args, "s", None),
        "p": getattr(args, "p", None),
        "g": getattr(args, "g", None),
    }
    for name, value in checks.items():
        if value is None:
            continue
        lo, hi = _RANGES[name]
        if not lo <= value <= hi:
            raise UsageError(
                f"--{name.replace('_', '-')}={value} outside [{lo}, {hi}] "
                f"(use --force to override)")
    b = getattr(args, "b", None)
    if b is not None and b % 2 == 0:
        raise UsageError(f"--b={b} must be odd")


def _parse_perturb(text: str) -> dict[int, float]:
    out: dict[int, float] = {}
    if not text:
        return out
    for part in text.split(","):
        try:
            rot, mult = part.split(":")
            out[int(rot)] = float(mult)
        except ValueError:
            raise UsageError(f"bad --perturb entry {part!r} (want rotation:multiplier)")
    return out


def _make_pipeline(args: argparse.Namespace, geometry: SensorGeometry
                   ) -> engine_mod.PipelineConfig:
    if args.policy == "duration":
        policy = ConstantDuration(args.d_us)
    elif args.policy == "count":
        policy = ConstantEventNumber(args.K)
    else:
        policy = AreaEventNumber(args.k, args.area_shift)
    if args.param_min is not None or args.param_max is not None:
        lo = args.param_min if args.param_min is not None else policy.bounds[0]
        hi = args.param_max if args.param_max is not None else policy.bounds[1]
        policy.bounds = (lo, hi)
    slices = SliceConfig(geometry=geometry, num_scales=args.s,
                         counter_bits=args.g, use_polarity=args.use_polarity,
                         policy=policy)
    search = SearchConfig(block_dim=args.b, radius=args.r, strategy=args.strategy,
                          valid_pix_occupancy=args.occupancy,
                          max_allowed_sad=args.max_sad)
    return engine_mod.PipelineConfig(
        slices=slices, search=search,
        feedback_enabled=(args.feedback == "on"),
        skip_p=args.p,
        perturbations=_parse_perturb(args.perturb),
    )


def _cmd_gen(args) -> int:
    if args.pattern == "dots":
        pattern = RandomDots(args.density)
    elif args.pattern == "bar":
        pattern = Bar(args.bar_width, args.bar_angle)
    else:
        pattern = Grid(args.pitch)
    spec = SceneSpec(geometry=SensorGeometry(args.w, args.h), pattern=pattern,
                     velocity=(args.vx, args.vy), duration_s=args.duration,
                     seed=args.seed, noise_rate=args.noise_rate)
    events, truth = generate(spec)
    write_events(args.out, events, spec.geometry)
    truth_path = args.truth or f"{args.out}.truth.txt"
    write_truth(truth_path, truth)
    print(f"wrote {len(events)} events to {args.out}, truth to {truth_path}")
    return 0


def _cmd_flow(args) -> int:
    path = Path(args.input)
    if path.suffix.lower() == ".csv":
        geometry = SensorGeometry(args.w, args.h)
        events = read_events(path, geometry=geometry)
    else:
        geometry = read_binary_geometry(path)
        events = read_events(path)
    cfg = _make_pipeline(args, geometry)
    flows, stats, trace = engine_mod.process_stream(events, cfg)
    write_flow(args.output, flows)
    stats_path = args.stats or f"{args.output}.stats.json"
    with open(stats_path, "w") as fh:
        json.dump(stats.to_dict(), fh, indent=2)
        fh.write("\n")
    if args.trace:
        engine_mod.write_trace(args.trace, trace)
    print(f"{stats.of_events_out} flow events from {stats.events_in} input events "
          f"({stats.rotations} rotations) -> {args.output}")
    return 0


def _cmd_eval(args) -> int:
    flows = read_flow(args.flow)
    truth = read_truth(args.truth)
    if args.events is not None:
        events_in = len(read_events(args.events, strict=False))
    elif args.events_in is not None:
        events_in = args.events_in
    else:
        raise UsageError("eval needs --events or --events-in for the density denominator")
    report = evaluate(flows, truth, events_in)
    print(json.dumps(report.to_dict(), indent=2))
    print(report_table(report))
    return 0


def _cmd_render(args) -> int:
    flows = read_flow(args.flow)
    geometry = SensorGeometry(args.w, args.h)
    frames = render_flow(flows, geometry, args.window_us, args.max_speed)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        write_ppm(outdir / f"frame_{i:0{args.pad}d}.ppm", frame)
    print(f"wrote {len(frames)} frames to {outdir}")
    return 0


def _cmd_bench(args) -> int:
    geometry = SensorGeometry(args.w, args.h)
    if args.input:
        if Path(args.input).suffix.lower() != ".csv":
            geometry = read_binary_geometry(args.input)
        events = read_events(args.input, geometry=geometry
                             if Path(args.input).suffix.lower() == ".csv" else None)
    else:
        spec = SceneSpec(geometry=geometry, pattern=RandomDots(args.density),
                         velocity=(args.vx, args.vy), duration_s=args.duration,
                         seed=args.seed)
        events, _ = generate(spec)
    cfg = _make_pipeline(args, geometry)
    result = bench_mod.compare_strategies(events, cfg.slices, cfg.search,
                                          stride=args.stride,
                                          max_matches=args.matches)
    print(json.dumps(result.to_dict(), indent=2))
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "flow": _cmd_flow,
    "eval": _cmd_eval,
    "render": _cmd_render,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        argv = _apply_config_file(argv)
        args = parser.parse_args(argv)
        _validate_ranges(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (StreamError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
