"""Command-line front end."""

from __future__ import annotations

import argparse
import contextlib
import math
import os
import sys
from collections.abc import Sequence
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import io as tio
from .cpa import cpa_attack, downsample_average
from .errors import AvgScaError, ConfigError
from .experiments import (
    CONSTRUCTIVE_WINDOWS,
    DESTRUCTIVE_RATIOS,
    DOWNSAMPLE_KS,
    ExperimentSpec,
    ScanConfig,
    run_constructive,
    run_destructive,
    run_downsample_scan,
    run_sanr_sweep,
)
from .framepower import CellEntry, CellLibrary, FramePlan, benchmark_frames, estimate_power
from .leakage import LeakageModel
from .synth import SynthConfig, averaged_traceset, nonaveraged_traceset, synth_campaign
from .vcd import counter_log, parse_vcd, serialize_vcd

PROG = "avgsca"


def _byte(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v <= 255:
        raise argparse.ArgumentTypeError(f"not a byte: {text!r}")
    return v


def _bytes(text: str) -> tuple[int, ...]:
    return tuple(_byte(t.strip()) for t in text.split(",") if t.strip())


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def _model(text: str) -> LeakageModel:
    try:
        return LeakageModel.from_name(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _window(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP, got {text!r}") from None


@contextlib.contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _spec(args, default: ExperimentSpec) -> ExperimentSpec:
    spec = default
    if getattr(args, "config", None):
        spec = tio.load_run_config(args.config).spec
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "repeats", None) is not None:
        changes["n_repeats"] = args.repeats
    if getattr(args, "traces", None) is not None:
        changes["n_traces"] = args.traces
    if getattr(args, "model", None) is not None:
        changes["model"] = args.model
        changes["synth"] = replace(spec.synth, model=args.model)
    if getattr(args, "keys", None):
        synth = changes.get("synth", spec.synth)
        changes["synth"] = replace(synth, key_schedule=args.keys, n_key_bytes=len(args.keys))
    return replace(spec, **changes)


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        sanr=args.sanr,
        key_schedule=args.keys,
        n_key_bytes=len(args.keys),
        model=args.model,
        alpha=args.alpha,
        mu_r=args.mu_r,
        base_amplitude=args.base,
        cycles_per_key_byte=args.cycles_per_byte,
        subsamples_per_cycle=args.subsamples,
    )
    inputs = [i % 256 for i in range(args.traces)]
    traces = synth_campaign(cfg, args.seed, inputs)
    if args.kind == "averaged":
        width = Fraction(args.frame_width) if args.frame_width else Fraction(1, args.samples_per_cycle)
        ts = averaged_traceset(traces, width)
    else:
        ts = nonaveraged_traceset(traces, args.samples_per_cycle)
    tio.write_traces(ts, args.out)
    return 0


def cmd_cpa(args) -> int:
    ts = tio.read_traces(args.traces)
    window = args.window
    if args.byte is not None:
        window = ts.window_of_segment(args.byte)
    absolute = {"auto": None, "abs": True, "signed": False}[args.score]
    res = cpa_attack(ts, args.model, window, true_key=args.true_key, absolute=absolute)
    if args.rho_csv:
        with _output(args.rho_csv) as fh:
            tio.rho_csv(fh, res.rho, res.window[0])
    rank = "" if res.correct_key_rank is None else res.correct_key_rank
    with _output(args.out) as fh:
        tio.write_csv(
            fh,
            ["recovered_key", "rank", "max_rho", "best_sample"],
            [[f"0x{res.recovered_key:02x}", rank, res.max_abs_rho, res.best_sample]],
        )
    return 0


def cmd_exp1(args) -> int:
    spec = _spec(args, ExperimentSpec())
    if args.sanr:
        spec = replace(spec, sanr_values=args.sanr)
    rows = run_sanr_sweep(spec, samples_per_cycle=args.samples_per_cycle, workers=args.workers)
    with _output(args.out) as fh:
        tio.sweep_csv(fh, rows)
    return 0


def cmd_exp2(args) -> int:
    spec = _spec(args, ExperimentSpec())
    table = run_constructive(spec, args.windows, sanr=args.sanr, workers=args.workers)
    with _output(args.out) as fh:
        tio.table_csv(fh, table)
    return 0


def cmd_exp3(args) -> int:
    spec = _spec(args, ExperimentSpec())
    table = run_destructive(spec, args.ratios, sanr=args.sanr, workers=args.workers)
    with _output(args.out) as fh:
        tio.table_csv(fh, table)
    return 0


def cmd_scan(args) -> int:
    spec = _spec(args, ExperimentSpec(n_traces=1000, model=LeakageModel.SBOX_HW))
    if args.scan_sanr is not None:
        spec = replace(spec, synth=replace(spec.synth, sanr=args.scan_sanr))
    scan = ScanConfig(n_cycles=args.cycles, leak_start=args.leak[0], leak_stop=args.leak[1])
    result = run_downsample_scan(spec, args.k, scan=scan, workers=args.workers)
    with _output(args.out) as fh:
        tio.scan_csv(fh, result)
    for b, (lo, hi) in sorted(result.refined.items()):
        print(f"byte {b + 1}: leaky cycles localized to [{lo}, {hi})", file=sys.stderr)
    return 0


def cmd_downsample(args) -> int:
    ts = tio.read_traces(args.traces)
    tio.write_traces(downsample_average(ts, args.k), args.out)
    return 0


def _read_vcd(path: str):
    if path == "-":
        return parse_vcd(sys.stdin.buffer.read())
    return parse_vcd(Path(path).read_bytes())


def load_library(path: str | None, use_default: bool = True) -> CellLibrary:
    """``pattern = e_switch, e_internal, p_leak`` lines; ``default`` sets the fallback."""
    fallback = CellLibrary().default if use_default else None
    if path is None:
        return CellLibrary(default=fallback)
    entries = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            pattern, coeffs = (p.strip() for p in line.split("=", 1))
            entry = CellEntry(*(float(c) for c in coeffs.split(",")))
        except (ValueError, TypeError):
            raise ConfigError(f"{path}:{n}: expected 'pattern = e_switch, e_internal, p_leak'") from None
        if pattern == "default":
            fallback = entry if use_default else None
        else:
            entries[pattern] = entry
    return CellLibrary(entries=entries, default=fallback)


def cmd_power_est(args) -> int:
    log = _read_vcd(args.vcd)
    lib = load_library(args.lib, use_default=not args.no_default)
    if args.frame_width:
        n = args.frames or (log.end_time - args.origin) // args.frame_width
        plan = FramePlan(args.frame_width, n, args.origin)
    else:
        plan = FramePlan.covering(log, args.frames or 1, args.origin)
    power = estimate_power(log, lib, plan, workers=args.workers)
    with _output(args.out) as fh:
        tio.power_csv(fh, plan, power)
    return 0


def cmd_gen_vcd(args) -> int:
    log = counter_log(args.counters, args.cycles, width=args.width, period=args.period)
    with _output(args.out) as fh:
        serialize_vcd(log, fh)
    return 0


def cmd_bench_frames(args) -> int:
    if args.vcd:
        log = _read_vcd(args.vcd)
    else:
        log = counter_log(args.counters, args.cycles, width=args.width)
    rows = benchmark_frames(log, load_library(args.lib), args.frames, repeats=args.repeats)
    with _output(args.out) as fh:
        tio.bench_csv(fh, rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=PROG, description="Averaged vs. non-averaged sampling for CPA leakage assessment.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def stochastic(sp, seed_default=None):
        sp.add_argument("--seed", type=int, default=seed_default, help="master seed")

    def parallel(sp):
        sp.add_argument("--workers", type=_positive_int, default=1, help="worker threads")

    def out(sp, required=False):
        sp.add_argument("-o", "--out", required=required, help="output file (default stdout)" if not required else "output file")

    def experiment(sp):
        stochastic(sp)
        parallel(sp)
        out(sp)
        sp.add_argument("--config", help="key = value run configuration file")
        sp.add_argument("--repeats", type=_positive_int)
        sp.add_argument("--traces", type=_positive_int)
        sp.add_argument("--model", type=_model)
        sp.add_argument("--keys", type=_bytes, help="comma-separated key schedule, one byte per segment")

    s = sub.add_parser("synth", help="generate a sampled trace campaign")
    stochastic(s, 0)
    out(s, required=True)
    s.add_argument("--sanr", type=float, default=math.inf)
    s.add_argument("--kind", choices=("averaged", "non-averaged"), default="averaged")
    s.add_argument("--samples-per-cycle", type=_positive_int, default=2)
    s.add_argument("--frame-width", type=Fraction, help="averaging frame in cycles (overrides --samples-per-cycle)")
    s.add_argument("--traces", type=_positive_int, default=256)
    s.add_argument("--keys", type=_bytes, default=SynthConfig().key_schedule)
    s.add_argument("--model", type=_model, default=LeakageModel.XOR_HW)
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--mu-r", type=float, default=0.0)
    s.add_argument("--base", type=float, default=0.0)
    s.add_argument("--cycles-per-byte", type=_positive_int, default=16)
    s.add_argument("--subsamples", type=_positive_int, default=100)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("cpa", help="attack a trace file")
    s.add_argument("traces")
    s.add_argument("--model", type=_model, default=LeakageModel.XOR_HW)
    s.add_argument("--true-key", type=_byte)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--window", type=_window, help="sample range START:STOP")
    g.add_argument("--byte", type=int, help="restrict to the samples of this key-byte segment (0-based)")
    s.add_argument("--score", choices=("auto", "abs", "signed"), default="auto")
    s.add_argument("--rho-csv", help="write the full guess x sample correlation table here")
    out(s)
    s.set_defaults(func=cmd_cpa)

    s = sub.add_parser("exp1", help="success rate vs SANR, averaged and snapshot sampling")
    experiment(s)
    s.add_argument("--sanr", type=_floats)
    s.add_argument("--samples-per-cycle", type=_positive_int, default=2)
    s.set_defaults(func=cmd_exp1)

    s = sub.add_parser("exp2", help="success rate vs constructive window length")
    experiment(s)
    s.add_argument("--sanr", type=float, default=0.1)
    s.add_argument("--windows", type=_ints, default=CONSTRUCTIVE_WINDOWS)
    s.set_defaults(func=cmd_exp2)

    s = sub.add_parser("exp3", help="success rate vs destructive/constructive ratio")
    experiment(s)
    s.add_argument("--sanr", type=float, default=0.1)
    s.add_argument("--ratios", type=_floats, default=DESTRUCTIVE_RATIOS)
    s.set_defaults(func=cmd_exp3)

    s = sub.add_parser("scan", help="attack a long trace at several downsampling levels")
    experiment(s)
    s.add_argument("--k", type=_ints, default=DOWNSAMPLE_KS)
    s.add_argument("--cycles", type=_positive_int, default=ScanConfig().n_cycles)
    s.add_argument("--leak", type=_window, default=(ScanConfig().leak_start, ScanConfig().leak_stop), help="leaky cycles START:STOP")
    s.add_argument("--scan-sanr", type=float, help="add white noise at this SANR (default noiseless)")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("downsample", help="average every K samples of a trace file")
    s.add_argument("traces")
    s.add_argument("--k", type=_positive_int, required=True)
    out(s, required=True)
    s.set_defaults(func=cmd_downsample)

    s = sub.add_parser("power-est", help="per-frame power from a VCD file")
    s.add_argument("vcd", help="VCD file, or - for stdin")
    s.add_argument("--frames", type=_positive_int)
    s.add_argument("--frame-width", type=_positive_int)
    s.add_argument("--origin", type=int, default=0)
    s.add_argument("--lib", help="cell library file")
    s.add_argument("--no-default", action="store_true", help="fail on signals missing from the library")
    parallel(s)
    out(s)
    s.set_defaults(func=cmd_power_est)

    s = sub.add_parser("gen-vcd", help="write a synthetic counter activity log")
    s.add_argument("--counters", type=_positive_int, default=1)
    s.add_argument("--cycles", type=_positive_int, default=1000)
    s.add_argument("--width", type=_positive_int, default=32)
    s.add_argument("--period", type=_positive_int, default=10)
    out(s)
    s.set_defaults(func=cmd_gen_vcd)

    s = sub.add_parser("bench-frames", help="estimator runtime vs frame count")
    s.add_argument("--vcd", help="benchmark this log instead of a synthetic one")
    s.add_argument("--counters", type=_positive_int, default=32)
    s.add_argument("--cycles", type=_positive_int, default=1_000_000)
    s.add_argument("--width", type=_positive_int, default=32)
    s.add_argument("--frames", type=_ints, default=(1, 10, 100, 1000))
    s.add_argument("--repeats", type=_positive_int, default=5)
    s.add_argument("--lib")
    out(s)
    s.set_defaults(func=cmd_bench_frames)
    return p


def _diagnostic(msg: str) -> None:
    prefix = f"{PROG}: error:"
    if sys.stderr.isatty() and not os.environ.get("NO_COLOR"):
        prefix = f"\033[31m{prefix}\033[0m"
    print(f"{prefix} {' '.join(msg.split())}", file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AvgScaError, ValueError) as exc:
        _diagnostic(str(exc))
    except KeyError as exc:
        _diagnostic(str(exc))
    except OSError as exc:
        _diagnostic(f"{exc.filename or ''}: {exc.strerror}" if exc.strerror else str(exc))
    return 1


if __name__ == "__main__":
    sys.exit(main())
