"""Continuous-time sawtooth power traces and the two ways of sampling them.

A trace covers ``n_key_bytes * cycles_per_key_byte`` clock cycles. Each
cycle is one sawtooth tooth: an instantaneous rise at the clock edge to
``base_amplitude + alpha * model(x, k)`` followed by a linear decay towards
zero at the end of the cycle, where ``k`` is the key byte of the segment the
cycle belongs to. The whole waveform is offset by the constant bias ``mu_r``.

Algorithmic noise is zero-mean Gaussian and made of three independent parts
whose shares of the total noise variance are given by a :class:`NoiseProfile`:

* ``segment``: one tooth-shaped draw per key-byte segment, shared by all of
  the segment's cycles (activity of unrelated logic over a processing phase),
* ``cycle``: one tooth-shaped draw per clock cycle (the current rush of
  unrelated logic at each edge),
* ``white``: independent per sub-sample.

SANR is the pooled variance of the data-dependent component
``alpha * model(x, k) * tooth`` over every sub-sample of every trace in the
campaign, divided by the pooled variance of the noise.
"""

from __future__ import annotations

import functools
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .errors import ConfigError, DomainError, ResolutionError, WindowError
from .leakage import LeakageModel, evaluate
from .traceset import SamplingKind, TraceSet

# Adjacent bytes differ in 4, 4, 3 and 3 bits.
DEFAULT_KEY_SCHEDULE = (0x2B, 0x7E, 0x06, 0x01)


@dataclass(frozen=True)
class NoiseProfile:
    segment: float = 0.15
    cycle: float = 0.50
    white: float = 0.35

    def __post_init__(self):
        parts = (self.segment, self.cycle, self.white)
        if any(p < 0 for p in parts) or not math.isclose(sum(parts), 1.0, abs_tol=1e-9):
            raise ConfigError(f"noise shares must be non-negative and sum to 1, got {parts}")


WHITE_NOISE = NoiseProfile(segment=0.0, cycle=0.0, white=1.0)


@dataclass(frozen=True)
class SynthConfig:
    clock_period_ns: float = 20.0
    cycles_per_key_byte: int = 16
    n_key_bytes: int = 4
    key_schedule: tuple[int, ...] = DEFAULT_KEY_SCHEDULE
    alpha: float = 1.0
    mu_r: float = 0.0
    base_amplitude: float = 0.0
    subsamples_per_cycle: int = 100
    sanr: float = math.inf
    noise: NoiseProfile = field(default_factory=NoiseProfile)
    model: LeakageModel = LeakageModel.XOR_HW

    def __post_init__(self):
        object.__setattr__(self, "key_schedule", tuple(int(k) for k in self.key_schedule))
        if isinstance(self.model, str):
            object.__setattr__(self, "model", LeakageModel.from_name(self.model))
        if not self.clock_period_ns > 0:
            raise ConfigError("clock_period_ns must be positive")
        if self.cycles_per_key_byte < 1 or self.n_key_bytes < 1:
            raise ConfigError("cycles_per_key_byte and n_key_bytes must be positive")
        if len(self.key_schedule) != self.n_key_bytes:
            raise ConfigError(
                f"key_schedule has {len(self.key_schedule)} bytes, n_key_bytes is {self.n_key_bytes}"
            )
        if any(not 0 <= k <= 255 for k in self.key_schedule):
            raise ConfigError("key_schedule entries must be bytes")
        if self.subsamples_per_cycle < 2:
            raise ConfigError("subsamples_per_cycle must be at least 2")
        if not self.sanr > 0:
            raise ConfigError("sanr must be positive (use inf for noiseless traces)")

    @property
    def n_cycles(self) -> int:
        return self.n_key_bytes * self.cycles_per_key_byte

    @property
    def n_subsamples(self) -> int:
        return self.n_cycles * self.subsamples_per_cycle

    def replace(self, **changes) -> "SynthConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class ContinuousTrace:
    """Power waveform on a uniform sub-sample grid.

    ``segment_map`` holds ``(start, end, key_byte)`` sub-sample ranges, one
    per key-byte segment, in time order.
    """

    values: np.ndarray
    dt_ns: float
    input_byte: int
    segment_map: tuple[tuple[int, int, int], ...]
    subsamples_per_cycle: int
    signal_var: float = math.nan

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "segment_map", tuple(tuple(int(v) for v in s) for s in self.segment_map))
        pos = 0
        for start, end, _ in self.segment_map:
            if start != pos or end <= start:
                raise DomainError("segments must be contiguous, non-empty and start at 0")
            pos = end
        if pos != len(values):
            raise DomainError(f"segments cover {pos} sub-samples, trace has {len(values)}")
        if len(values) % self.subsamples_per_cycle:
            raise DomainError("trace length is not a whole number of cycles")

    @property
    def n_cycles(self) -> int:
        return len(self.values) // self.subsamples_per_cycle

    def segment_at(self, index: int) -> int:
        """Index of the segment containing sub-sample ``index``."""
        starts = [s for s, _, _ in self.segment_map]
        if not 0 <= index < len(self.values):
            raise IndexError(index)
        return int(np.searchsorted(starts, index, side="right")) - 1

    def key_at(self, index: int) -> int:
        return self.segment_map[self.segment_at(index)][2]

    def __eq__(self, other):
        if not isinstance(other, ContinuousTrace):
            return NotImplemented
        return (
            self.values.tobytes() == other.values.tobytes()
            and self.dt_ns == other.dt_ns
            and self.input_byte == other.input_byte
            and self.segment_map == other.segment_map
            and self.subsamples_per_cycle == other.subsamples_per_cycle
        )


def derive_seed(master_seed: int, *path: int) -> int:
    """64-bit seed for the stream at ``path`` below ``master_seed``.

    Streams for different paths are statistically independent, so work can
    be split over traces or repeats in any order.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def tooth(subsamples_per_cycle: int) -> np.ndarray:
    return 1.0 - np.arange(subsamples_per_cycle) / subsamples_per_cycle


def render_sawtooth(peaks, subsamples_per_cycle: int, offset: float = 0.0) -> np.ndarray:
    """Concatenate one tooth per entry of ``peaks`` (last axis = cycles)."""
    peaks = np.asarray(peaks, dtype=np.float64)
    out = peaks[..., None] * tooth(subsamples_per_cycle)
    out = out.reshape(*peaks.shape[:-1], -1)
    if offset:
        out += offset
    return out


@functools.lru_cache(maxsize=64)
def signal_variance(cfg: SynthConfig, inputs: tuple[int, ...] | None = None) -> float:
    """Pooled variance of ``alpha * model(x, k) * tooth`` over a campaign.

    ``inputs`` defaults to all 256 byte values. Every segment has the same
    length, so the pooled moments factor into input and tooth moments.
    """
    x = np.arange(256) if inputs is None else np.asarray(inputs)
    z = evaluate(cfg.model, x[:, None], np.asarray(cfg.key_schedule)[None, :]).astype(np.float64)
    s = tooth(cfg.subsamples_per_cycle)
    ez, ez2 = z.mean(), (z * z).mean()
    es, es2 = s.mean(), (s * s).mean()
    return float(cfg.alpha**2 * (ez2 * es2 - (ez * es) ** 2))


def _segment_map(cfg: SynthConfig) -> tuple[tuple[int, int, int], ...]:
    seg_len = cfg.cycles_per_key_byte * cfg.subsamples_per_cycle
    return tuple((b * seg_len, (b + 1) * seg_len, k) for b, k in enumerate(cfg.key_schedule))


def gen_sawtooth(cfg: SynthConfig, x: int, rng_seed: int, signal_var: float | None = None) -> ContinuousTrace:
    """Sawtooth trace for controlled byte ``x``; noisy when ``cfg.sanr`` is finite.

    ``signal_var`` overrides the campaign signal variance the noise level is
    referred to (default: all 256 inputs under ``cfg``).
    """
    if not 0 <= x <= 255:
        raise ConfigError(f"input byte out of range: {x}")
    peaks = cfg.base_amplitude + cfg.alpha * np.asarray(
        evaluate(cfg.model, x, np.asarray(cfg.key_schedule)), dtype=np.float64
    )
    peaks = np.repeat(peaks, cfg.cycles_per_key_byte)
    trace = ContinuousTrace(
        values=render_sawtooth(peaks, cfg.subsamples_per_cycle, cfg.mu_r),
        dt_ns=cfg.clock_period_ns / cfg.subsamples_per_cycle,
        input_byte=int(x),
        segment_map=_segment_map(cfg),
        subsamples_per_cycle=cfg.subsamples_per_cycle,
        signal_var=signal_variance(cfg) if signal_var is None else float(signal_var),
    )
    if math.isinf(cfg.sanr):
        return trace
    return add_noise(trace, cfg.sanr, rng_seed, profile=cfg.noise)


def add_noise(
    trace: ContinuousTrace,
    sanr: float,
    rng_seed: int,
    profile: NoiseProfile | None = None,
    signal_var: float | None = None,
) -> ContinuousTrace:
    """Return ``trace`` plus zero-mean algorithmic noise at the given SANR."""
    if not sanr > 0:
        raise DomainError(f"sanr must be positive, got {sanr}")
    if math.isinf(sanr):
        return replace(trace, values=trace.values.copy())
    profile = NoiseProfile() if profile is None else profile
    var_s = trace.signal_var if signal_var is None else signal_var
    if not var_s > 0:
        raise DomainError("signal variance must be known and positive to scale the noise")

    total = var_s / sanr
    r = trace.subsamples_per_cycle
    s = tooth(r)
    es2 = float((s * s).mean())
    n_cyc = trace.n_cycles
    rng = np.random.default_rng(rng_seed)

    seg_draw = rng.standard_normal(len(trace.segment_map))
    cyc_draw = rng.standard_normal(n_cyc)
    white = rng.standard_normal(len(trace.values))

    amp = np.empty(n_cyc)
    for (start, end, _), g in zip(trace.segment_map, seg_draw):
        # Segments may start mid-cycle in hand-built traces; attribute by cycle start.
        amp[start // r:-(-end // r)] = g
    amp *= math.sqrt(total * profile.segment / es2)
    amp += math.sqrt(total * profile.cycle / es2) * cyc_draw

    noise = render_sawtooth(amp, r)
    noise += math.sqrt(total * profile.white) * white
    return replace(trace, values=trace.values + noise)


def sample_nonaveraged(trace: ContinuousTrace, samples_per_cycle: int, phase: float = 0.5) -> np.ndarray:
    """Instantaneous snapshots, ``samples_per_cycle`` per clock cycle.

    Snapshot ``j`` is taken at the grid point nearest to ``(j + phase)``
    sample periods; ``phase=0`` hits the start of each period (the tooth
    peak at cycle boundaries), the default hits its middle.
    """
    r = trace.subsamples_per_cycle
    if samples_per_cycle < 1:
        raise DomainError("samples_per_cycle must be positive")
    if samples_per_cycle > r:
        raise ResolutionError(f"{samples_per_cycle} samples per cycle exceeds grid resolution {r}")
    if not 0 <= phase < 1:
        raise DomainError("phase must lie in [0, 1)")
    n = trace.n_cycles * samples_per_cycle
    idx = np.floor((np.arange(n) + phase) * r / samples_per_cycle + 0.5).astype(np.int64)
    np.minimum(idx, len(trace.values) - 1, out=idx)
    return trace.values[idx]


def _frame_bounds(trace: ContinuousTrace, width, offset) -> np.ndarray:
    if not width > 0:
        raise DomainError(f"frame width must be positive, got {width}")
    if offset < 0:
        raise DomainError(f"frame offset must be non-negative, got {offset}")
    width, offset = Fraction(width).limit_denominator(10**9), Fraction(offset).limit_denominator(10**9)
    n_frames = math.floor((trace.n_cycles - offset) / width)
    if n_frames < 1:
        raise DomainError("no complete frame fits inside the trace")
    r = trace.subsamples_per_cycle
    edges = [round((offset + i * width) * r) for i in range(n_frames + 1)]
    bounds = np.asarray(edges, dtype=np.int64)
    if np.any(np.diff(bounds) < 1):
        raise ResolutionError("frame narrower than one grid step")
    return bounds


def sample_averaged(trace: ContinuousTrace, frame_width_cycles=1, frame_offset_cycles=0) -> np.ndarray:
    """Mean power over contiguous frames of ``frame_width_cycles`` cycles.

    Frames start ``frame_offset_cycles`` after t=0 and only complete frames
    are returned. Frame edges snap to the nearest grid point.
    """
    bounds = _frame_bounds(trace, frame_width_cycles, frame_offset_cycles)
    sums = np.add.reduceat(trace.values, bounds[:-1])
    # reduceat's last bucket runs to the end of the array; trim to the frame.
    sums[-1] = trace.values[bounds[-2]:bounds[-1]].sum()
    return sums / np.diff(bounds)


def compose_windows(
    trace: ContinuousTrace, n_constructive_cycles: int, n_destructive_cycles: int, target_byte: int
) -> float:
    """One averaged sample mixing constructive and destructive cycles.

    Takes the first ``n_constructive_cycles`` cycles of segment
    ``target_byte`` and the first ``n_destructive_cycles`` cycles of the
    following segment (wrapping around), and averages all their sub-samples.
    """
    n_seg = len(trace.segment_map)
    if not 0 <= target_byte < n_seg:
        raise WindowError(f"target_byte {target_byte} outside 0..{n_seg - 1}")
    if n_constructive_cycles < 0 or n_destructive_cycles < 0:
        raise WindowError("cycle counts must be non-negative")
    if n_constructive_cycles + n_destructive_cycles == 0:
        raise WindowError("empty window")
    r = trace.subsamples_per_cycle

    def take(seg: int, n: int) -> np.ndarray:
        start, end, _ = trace.segment_map[seg]
        if n * r > end - start:
            raise WindowError(f"segment {seg} has {(end - start) // r} cycles, {n} requested")
        return trace.values[start:start + n * r]

    parts = [take(target_byte, n_constructive_cycles)]
    if n_destructive_cycles:
        if n_seg < 2:
            raise WindowError("destructive cycles need a second key-byte segment")
        parts.append(take((target_byte + 1) % n_seg, n_destructive_cycles))
    window = np.concatenate(parts)
    return float(window.mean())


def synth_campaign(
    cfg: SynthConfig, master_seed: int, inputs: Sequence[int] | None = None, path: Sequence[int] = ()
) -> list[ContinuousTrace]:
    """One trace per input (default: every byte value once).

    Trace ``i`` draws its noise from ``derive_seed(master_seed, *path, i)``.
    """
    inputs = range(256) if inputs is None else inputs
    var_s = signal_variance(cfg, None if inputs == range(256) else tuple(int(v) for v in inputs))
    return [
        gen_sawtooth(cfg, int(x), derive_seed(master_seed, *path, i), signal_var=var_s)
        for i, x in enumerate(inputs)
    ]


def _attribution(trace: ContinuousTrace, bounds: np.ndarray) -> np.ndarray:
    seg_first = np.array([trace.segment_at(int(b)) for b in bounds[:-1]])
    seg_last = np.array([trace.segment_at(int(b) - 1) for b in bounds[1:]])
    return np.where(seg_first == seg_last, seg_first, -1)


def nonaveraged_traceset(traces: Sequence[ContinuousTrace], samples_per_cycle: int, phase: float = 0.5) -> TraceSet:
    rows = np.stack([sample_nonaveraged(t, samples_per_cycle, phase) for t in traces])
    t0 = traces[0]
    r = t0.subsamples_per_cycle
    idx = np.floor((np.arange(rows.shape[1]) + phase) * r / samples_per_cycle + 0.5).astype(np.int64)
    seg = np.array([t0.segment_at(int(min(i, len(t0.values) - 1))) for i in idx])
    return TraceSet(
        samples=rows,
        inputs=np.array([t.input_byte for t in traces]),
        frame_width_cycles=Fraction(1, samples_per_cycle),
        sampling_kind=SamplingKind.NON_AVERAGED,
        segment_index=seg,
    )


def averaged_traceset(traces: Sequence[ContinuousTrace], frame_width_cycles=1, frame_offset_cycles=0) -> TraceSet:
    rows = np.stack([sample_averaged(t, frame_width_cycles, frame_offset_cycles) for t in traces])
    bounds = _frame_bounds(traces[0], frame_width_cycles, frame_offset_cycles)
    return TraceSet(
        samples=rows,
        inputs=np.array([t.input_byte for t in traces]),
        frame_width_cycles=Fraction(frame_width_cycles).limit_denominator(10**9),
        sampling_kind=SamplingKind.AVERAGED,
        segment_index=_attribution(traces[0], bounds),
    )
