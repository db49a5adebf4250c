"""Seeded Monte-Carlo experiments comparing sampling strategies under CPA.

Every repeat draws its noise from streams derived from ``master_seed`` and
the repeat's coordinates, so results do not depend on execution order or
on how many worker threads run the repeats.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .cpa import CpaResult, SuccessStats, cpa_attack, downsample_average, success_rate
from .errors import ConfigError
from .leakage import LeakageModel, evaluate
from .synth import (
    ContinuousTrace,
    SynthConfig,
    averaged_traceset,
    compose_windows,
    derive_seed,
    nonaveraged_traceset,
    synth_campaign,
)
from .traceset import SamplingKind, TraceSet

SANR_SWEEP = (10.0, 5.0, 1.0, 0.5, 0.25, 0.1)
CONSTRUCTIVE_WINDOWS = (2, 4, 8, 16)
DESTRUCTIVE_RATIOS = (0.0, 0.25, 0.5, 0.75, 1.0)
DOWNSAMPLE_KS = (1, 3, 10, 20, 30, 40, 50)


class ExperimentKind(enum.Enum):
    SANR_SWEEP = "sanr-sweep"
    CONSTRUCTIVE = "constructive"
    DESTRUCTIVE = "destructive"
    DOWNSAMPLE_SCAN = "downsample-scan"


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: ExperimentKind = ExperimentKind.SANR_SWEEP
    sanr_values: tuple[float, ...] = SANR_SWEEP
    n_repeats: int = 100
    n_traces: int = 256
    master_seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: LeakageModel = LeakageModel.XOR_HW

    def __post_init__(self):
        object.__setattr__(self, "sanr_values", tuple(float(s) for s in self.sanr_values))
        if isinstance(self.experiment, str):
            object.__setattr__(self, "experiment", ExperimentKind(self.experiment))
        if isinstance(self.model, str):
            object.__setattr__(self, "model", LeakageModel.from_name(self.model))
        if self.n_repeats < 1:
            raise ConfigError("n_repeats must be at least 1")
        if self.n_traces < 2:
            raise ConfigError("n_traces must be at least 2")
        if any(not s > 0 for s in self.sanr_values):
            raise ConfigError("SANR values must be positive")

    @property
    def inputs(self) -> list[int]:
        """Controlled byte of each trace: every value once per 256 traces."""
        return [i % 256 for i in range(self.n_traces)]


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SweepRow:
    sanr: float
    byte: int
    kind: SamplingKind
    stats: SuccessStats


@dataclass(frozen=True)
class SrTable:
    """Success rates with one row per setting and one column per key byte."""

    row_label: str
    rows: tuple[float, ...]
    stats: tuple[tuple[SuccessStats, ...], ...]

    def sr(self) -> np.ndarray:
        return np.array([[s.success_rate for s in row] for row in self.stats])

    def mean_rank(self) -> np.ndarray:
        return np.array([[s.mean_rank for s in row] for row in self.stats])


def _campaign(spec: ExperimentSpec, sanr: float, path: tuple[int, ...]) -> list[ContinuousTrace]:
    cfg = replace(spec.synth, sanr=sanr)
    return synth_campaign(cfg, spec.master_seed, spec.inputs, path=path)


def run_sanr_sweep(spec: ExperimentSpec, samples_per_cycle: int = 2, workers: int = 1) -> list[SweepRow]:
    """Success rate per SANR, key byte and sampling kind.

    Each repeat attacks every key byte within the samples taken from its
    own segment, once on snapshots and once on frame averages, both at
    ``samples_per_cycle`` samples per clock cycle.
    """
    if not spec.sanr_values:
        raise ConfigError("no SANR values to sweep")
    n_bytes = spec.synth.n_key_bytes
    keys = spec.synth.key_schedule

    def one(job):
        si, rep = job
        traces = _campaign(spec, spec.sanr_values[si], (si, rep))
        sets = {
            SamplingKind.NON_AVERAGED: nonaveraged_traceset(traces, samples_per_cycle),
            SamplingKind.AVERAGED: averaged_traceset(traces, Fraction(1, samples_per_cycle)),
        }
        ranks = {}
        for kind, ts in sets.items():
            for b in range(n_bytes):
                res = cpa_attack(ts, spec.model, ts.window_of_segment(b), true_key=keys[b])
                ranks[kind, b] = res.correct_key_rank
        return ranks

    jobs = [(si, rep) for si in range(len(spec.sanr_values)) for rep in range(spec.n_repeats)]
    outcomes = dict(zip(jobs, _map(one, jobs, workers)))
    rows = []
    for si, sanr in enumerate(spec.sanr_values):
        for b in range(n_bytes):
            for kind in (SamplingKind.AVERAGED, SamplingKind.NON_AVERAGED):
                ranks = [outcomes[si, rep][kind, b] for rep in range(spec.n_repeats)]
                rows.append(SweepRow(sanr=sanr, byte=b, kind=kind, stats=success_rate(ranks)))
    return rows


def _window_table(
    spec: ExperimentSpec,
    settings: Sequence[tuple[int, int]],
    labels: Sequence[float],
    row_label: str,
    sanr: float,
    workers: int,
) -> SrTable:
    n_bytes = spec.synth.n_key_bytes
    keys = spec.synth.key_schedule
    inputs = np.array(spec.inputs)

    def one(rep):
        traces = _campaign(spec, sanr, (rep,))
        out = np.empty((len(settings), n_bytes), dtype=np.int64)
        for b in range(n_bytes):
            for i, (n_c, n_d) in enumerate(settings):
                col = np.array([[compose_windows(t, n_c, n_d, b)] for t in traces])
                ts = TraceSet(col, inputs, n_c + n_d, SamplingKind.AVERAGED)
                out[i, b] = cpa_attack(ts, spec.model, true_key=keys[b]).correct_key_rank
        return out

    ranks = np.stack(_map(one, list(range(spec.n_repeats)), workers))
    stats = tuple(
        tuple(success_rate(ranks[:, i, b].tolist()) for b in range(n_bytes)) for i in range(len(settings))
    )
    return SrTable(row_label=row_label, rows=tuple(labels), stats=stats)


def run_constructive(
    spec: ExperimentSpec, window_sizes: Sequence[int] = CONSTRUCTIVE_WINDOWS, sanr: float = 0.1, workers: int = 1
) -> SrTable:
    """SR when each trace is reduced to the mean of its target byte's first ``w`` cycles."""
    for w in window_sizes:
        if not 1 <= w <= spec.synth.cycles_per_key_byte:
            raise ConfigError(f"window {w} outside 1..{spec.synth.cycles_per_key_byte}")
    settings = [(int(w), 0) for w in window_sizes]
    return _window_table(spec, settings, [float(w) for w in window_sizes], "constructive_cycles", sanr, workers)


def run_destructive(
    spec: ExperimentSpec, ratios: Sequence[float] = DESTRUCTIVE_RATIOS, sanr: float = 0.1, workers: int = 1
) -> SrTable:
    """SR when a full constructive segment is averaged with ``ratio`` times as many foreign cycles."""
    n_c = spec.synth.cycles_per_key_byte
    settings = []
    for r in ratios:
        n_d = r * n_c
        if r < 0 or not math.isclose(n_d, round(n_d)) or round(n_d) > n_c:
            raise ConfigError(f"ratio {r} does not give a whole number of cycles up to {n_c}")
        settings.append((n_c, int(round(n_d))))
    return _window_table(spec, settings, [float(r) for r in ratios], "destructive_ratio", sanr, workers)


@dataclass(frozen=True)
class ScanConfig:
    """Long trace with a single short leaky region among unrelated activity."""

    n_cycles: int = 250
    leak_start: int = 3
    leak_stop: int = 8
    background: float = 0.25
    subsamples_per_cycle: int = 10
    clock_period_ns: float = 20.0

    def __post_init__(self):
        if not 0 <= self.leak_start < self.leak_stop <= self.n_cycles:
            raise ConfigError("leaky region must be a non-empty cycle range inside the trace")


def scan_trace(cfg: ScanConfig, x: int, key: int, model: LeakageModel, activity: np.ndarray) -> ContinuousTrace:
    """Sawtooth trace leaking ``model(x, key)`` in the leaky region only.

    Outside the region each cycle's peak is ``background`` times the
    Hamming weight of the matching byte of ``activity``, which stands for
    computation unrelated to the key.
    """
    r = cfg.subsamples_per_cycle
    peaks = cfg.background * np.asarray(activity, dtype=np.float64)
    peaks[cfg.leak_start:cfg.leak_stop] = float(evaluate(model, x, key))
    values = (peaks[:, None] * (1.0 - np.arange(r) / r)).ravel()
    cuts = sorted({0, cfg.leak_start * r, cfg.leak_stop * r, cfg.n_cycles * r})
    seg = tuple(
        (a, b, key if a == cfg.leak_start * r else -1) for a, b in zip(cuts[:-1], cuts[1:])
    )
    return ContinuousTrace(values, cfg.clock_period_ns / r, int(x), seg, r)


@dataclass(frozen=True)
class ScanRow:
    byte: int
    k: int
    recovered_key: int
    rank: int
    max_rho: float
    best_cycle: int


@dataclass(frozen=True)
class ScanResult:
    rows: tuple[ScanRow, ...]
    leaky_cycles: tuple[int, int]
    refined: dict[int, tuple[int, int]]


def _hw_bytes(rng: np.random.Generator, shape) -> np.ndarray:
    return np.unpackbits(rng.integers(0, 256, size=(*shape, 1), dtype=np.uint8), axis=-1).sum(-1)


def scan_traceset(spec: ExperimentSpec, cfg: ScanConfig, byte: int) -> TraceSet:
    """One-sample-per-cycle averaged traces for ``byte``'s campaign."""
    rng = np.random.default_rng(derive_seed(spec.master_seed, byte))
    inputs = rng.integers(0, 256, size=spec.n_traces)
    activity = _hw_bytes(rng, (spec.n_traces, cfg.n_cycles))
    key = spec.synth.key_schedule[byte]
    traces = [scan_trace(cfg, int(x), key, spec.model, a) for x, a in zip(inputs, activity)]
    ts = averaged_traceset(traces, 1)
    sanr = spec.synth.sanr
    if math.isfinite(sanr):
        signal_var = float(np.var(ts.samples[:, cfg.leak_start:cfg.leak_stop]))
        noise = np.random.default_rng(derive_seed(spec.master_seed, byte, 1)).standard_normal(ts.samples.shape)
        ts = ts.with_samples(ts.samples + math.sqrt(signal_var / sanr) * noise)
    return ts


def _attack_cycles(ts: TraceSet, spec: ExperimentSpec, key: int, start: int, stop: int, k: int) -> CpaResult:
    sub = ts.with_samples(ts.samples[:, start:stop], segment_index=None)
    return cpa_attack(downsample_average(sub, k), spec.model, true_key=key)


def refine_window(
    ts: TraceSet, spec: ExperimentSpec, key: int, k_values: Sequence[int], keep: float = 0.5
) -> tuple[int, int]:
    """Narrow down the leaky cycles from coarse to fine downsampling.

    At each level, from the largest ``k`` down, the current region is
    attacked and shrunk to the frames whose correlation for the recovered
    key reaches ``keep`` times the best one. Returns the final ``[start,
    stop)`` cycle range at one sample per cycle.
    """
    start, stop = 0, ts.n_samples
    levels = sorted({int(k) for k in k_values} | {1}, reverse=True)
    for k in levels:
        if k > stop - start:
            continue
        res = _attack_cycles(ts, spec, key, start, stop, k)
        row = np.abs(res.rho[res.recovered_key])
        hot = np.flatnonzero(np.nan_to_num(row, nan=0.0) >= keep * np.nanmax(row))
        start, stop = start + int(hot[0]) * k, start + (int(hot[-1]) + 1) * k
    return start, stop


def run_downsample_scan(
    spec: ExperimentSpec,
    k_values: Sequence[int] = DOWNSAMPLE_KS,
    scan: ScanConfig | None = None,
    refine: bool = True,
    workers: int = 1,
) -> ScanResult:
    """Attack every key byte at one sample per ``k`` cycles for each ``k``."""
    scan = ScanConfig() if scan is None else scan
    for k in k_values:
        if not 1 <= k <= scan.n_cycles:
            raise ConfigError(f"k={k} outside 1..{scan.n_cycles}")

    def one(b):
        key = spec.synth.key_schedule[b]
        ts = scan_traceset(spec, scan, b)
        rows = []
        for k in k_values:
            res = _attack_cycles(ts, spec, key, 0, ts.n_samples, int(k))
            rows.append(ScanRow(
                byte=b,
                k=int(k),
                recovered_key=res.recovered_key,
                rank=res.correct_key_rank,
                max_rho=res.max_abs_rho,
                best_cycle=res.best_sample * int(k),
            ))
        window = refine_window(ts, spec, key, k_values) if refine else None
        return rows, window

    out = _map(one, list(range(spec.synth.n_key_bytes)), workers)
    rows = tuple(r for rs, _ in out for r in rs)
    refined = {b: w for b, (_, w) in enumerate(out) if w is not None}
    return ScanResult(rows=rows, leaky_cycles=(scan.leak_start, scan.leak_stop), refined=refined)
