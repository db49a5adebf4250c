"""Trace files, CSV tables and run configuration files.

Binary trace layout (little-endian)::

    magic "ASCA" | version u16 | n_traces u32 | n_samples u32
    | frame_width_cycles f64 | sampling_kind u8
    | n_traces input bytes | n_traces * n_samples f64 samples (row-major)
    [version 2 only: n_samples i32 per-sample segment indices]
"""

from __future__ import annotations

import configparser
import csv
import math
import os
import struct
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import IO

import numpy as np

from .errors import ConfigError, TraceFormatError
from .experiments import ExperimentKind, ExperimentSpec, ScanResult, SrTable, SweepRow
from .framepower import BenchmarkRow, FramePlan
from .leakage import LeakageModel
from .synth import SynthConfig
from .traceset import SamplingKind, TraceSet

MAGIC = b"ASCA"
HEADER = struct.Struct("<4sHIIdB")
VERSIONS = (1, 2)


def _width_from_file(w: float):
    frac = Fraction(w).limit_denominator(10**6)
    return frac if float(frac) == w else w


def encode_traces(ts: TraceSet) -> bytes:
    if ts.n_traces == 0:
        raise TraceFormatError("refusing to write a trace set with no traces", 0)
    version = 1 if ts.segment_index is None else 2
    parts = [
        HEADER.pack(MAGIC, version, ts.n_traces, ts.n_samples, float(ts.frame_width_cycles), int(ts.sampling_kind)),
        ts.inputs.astype(np.uint8).tobytes(),
        ts.samples.astype("<f8").tobytes(order="C"),
    ]
    if version == 2:
        parts.append(ts.segment_index.astype("<i4").tobytes())
    return b"".join(parts)


def decode_traces(data: bytes) -> TraceSet:
    if len(data) < HEADER.size:
        raise TraceFormatError(f"header needs {HEADER.size} bytes, file has {len(data)}", len(data))
    magic, version, n, t, width, kind = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise TraceFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version not in VERSIONS:
        raise TraceFormatError(f"unsupported version {version}", 4)
    if n == 0:
        raise TraceFormatError("file declares zero traces", 6)
    if kind not in (0, 1):
        raise TraceFormatError(f"unknown sampling kind {kind}", HEADER.size - 1)
    if not (math.isfinite(width) and width > 0):
        raise TraceFormatError(f"frame width must be positive, got {width}", 14)
    pos = HEADER.size
    expected = pos + n + 8 * n * t + (4 * t if version == 2 else 0)
    if len(data) != expected:
        raise TraceFormatError(f"expected {expected} bytes for {n}x{t} traces, file has {len(data)}", min(len(data), expected))
    inputs = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos).copy()
    pos += n
    samples = np.frombuffer(data, dtype="<f8", count=n * t, offset=pos).astype(np.float64).reshape(n, t)
    pos += 8 * n * t
    seg = None
    if version == 2:
        seg = np.frombuffer(data, dtype="<i4", count=t, offset=pos).astype(np.int64)
    return TraceSet(samples, inputs, _width_from_file(width), SamplingKind(kind), seg)


def write_traces(ts: TraceSet, path: str | os.PathLike) -> None:
    Path(path).write_bytes(encode_traces(ts))


def read_traces(path: str | os.PathLike) -> TraceSet:
    return decode_traces(Path(path).read_bytes())


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(out: IO[str], header: Sequence[str], rows: Iterable[Sequence]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


def sweep_csv(out: IO[str], rows: Sequence[SweepRow]) -> None:
    kinds = {SamplingKind.AVERAGED: "averaged", SamplingKind.NON_AVERAGED: "non-averaged"}
    write_csv(
        out,
        ["sanr", "byte", "kind", "sr", "mean_rank", "n_success", "n_repeats"],
        (
            [r.sanr, r.byte + 1, kinds[r.kind], r.stats.success_rate, r.stats.mean_rank, r.stats.n_success, r.stats.n_repeats]
            for r in rows
        ),
    )


def table_csv(out: IO[str], table: SrTable) -> None:
    n_bytes = len(table.stats[0])
    header = [table.row_label] + [f"sr_byte{b + 1}" for b in range(n_bytes)]
    write_csv(out, header, ([label] + [s.success_rate for s in row] for label, row in zip(table.rows, table.stats)))


def scan_csv(out: IO[str], result: ScanResult) -> None:
    write_csv(
        out,
        ["byte", "k", "recovered_key", "rank", "max_rho", "best_cycle"],
        ([r.byte + 1, r.k, f"0x{r.recovered_key:02x}", r.rank, r.max_rho, r.best_cycle] for r in result.rows),
    )


def power_csv(out: IO[str], plan: FramePlan, power: np.ndarray) -> None:
    write_csv(out, ["frame_index", "start", "power"], zip(range(plan.n_frames), plan.starts().tolist(), power.tolist()))


def bench_csv(out: IO[str], rows: Sequence[BenchmarkRow]) -> None:
    write_csv(out, ["n_frames", "seconds", "normalized"], ([r.n_frames, r.seconds, r.normalized] for r in rows))


def rho_csv(out: IO[str], rho: np.ndarray, first_sample: int = 0) -> None:
    g, t = np.indices(rho.shape)
    write_csv(out, ["guess", "sample", "rho"], zip(g.ravel().tolist(), (t.ravel() + first_sample).tolist(), rho.ravel().tolist()))


@dataclass(frozen=True)
class RunConfig:
    spec: ExperimentSpec = field(default_factory=ExperimentSpec)
    output_dir: Path = Path(".")
    fmt: str = "csv"
    verbosity: int = 0

    def __post_init__(self):
        if self.fmt not in ("csv", "binary"):
            raise ConfigError(f"format must be csv or binary, got {self.fmt!r}")
        object.__setattr__(self, "output_dir", Path(self.output_dir))


_SYNTH_FIELDS = {f.name for f in fields(SynthConfig)} - {"noise", "model"}


def _number(key: str, text: str, kind):
    try:
        if kind is int:
            return int(text, 0)
        v = float(text)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {text!r}") from None
    return v


def parse_run_config(text: str) -> RunConfig:
    """Read ``key = value`` lines (``#`` comments) into a :class:`RunConfig`.

    Synthesizer fields (``alpha``, ``key_schedule``, ...) go into the
    experiment's :class:`SynthConfig`; ``model`` sets both the generator's
    and the attack's leakage model.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    items = dict(parser["run"])
    spec_kw: dict = {}
    synth_kw: dict = {}
    run_kw: dict = {}
    for key, raw in items.items():
        if key == "experiment":
            try:
                spec_kw["experiment"] = ExperimentKind(raw)
            except ValueError:
                raise ConfigError(f"unknown experiment {raw!r}") from None
        elif key == "sanr_values":
            spec_kw["sanr_values"] = tuple(_number(key, v.strip(), float) for v in raw.split(",") if v.strip())
        elif key in ("n_repeats", "n_traces", "master_seed"):
            spec_kw[key] = _number(key, raw, int)
        elif key == "model":
            try:
                model = LeakageModel.from_name(raw)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            spec_kw["model"] = model
            synth_kw["model"] = model
        elif key == "key_schedule":
            synth_kw[key] = tuple(_number(key, v.strip(), int) for v in raw.split(",") if v.strip())
        elif key in ("cycles_per_key_byte", "n_key_bytes", "subsamples_per_cycle"):
            synth_kw[key] = _number(key, raw, int)
        elif key in _SYNTH_FIELDS:
            synth_kw[key] = _number(key, raw, float)
        elif key == "output_dir":
            run_kw["output_dir"] = Path(raw)
        elif key == "format":
            run_kw["fmt"] = raw
        elif key == "verbosity":
            run_kw["verbosity"] = _number(key, raw, int)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if "n_key_bytes" in synth_kw and "key_schedule" not in synth_kw:
        raise ConfigError("n_key_bytes given without key_schedule")
    synth = SynthConfig(**synth_kw)
    return RunConfig(spec=ExperimentSpec(synth=synth, **spec_kw), **run_kw)


def load_run_config(path: str | os.PathLike) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_run_config(text)
