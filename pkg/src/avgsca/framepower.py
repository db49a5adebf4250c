"""Frame-based average power from signal activity.

Time is cut into equal frames. Within a frame every stored value change of
a signal counts as one toggle, charged ``e_switch + e_internal`` energy
units from the signal's library entry. Each signal also draws a constant
``p_leak``. Frame power is the frame's energy divided by its width.
"""

from __future__ import annotations

import fnmatch
import math
import time
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, LibraryError
from .vcd import EventLog


@dataclass(frozen=True)
class CellEntry:
    e_switch: float = 0.0
    e_internal: float = 0.0
    p_leak: float = 0.0

    def __post_init__(self):
        if min(self.e_switch, self.e_internal, self.p_leak) < 0:
            raise ValueError("cell library coefficients must be non-negative")


@dataclass(frozen=True)
class CellLibrary:
    """Signal-name glob patterns mapped to cell coefficients.

    The first matching pattern wins. Signals matching nothing use
    ``default``; without a default they raise :class:`LibraryError`.
    """

    entries: Mapping[str, CellEntry] = field(default_factory=dict)
    default: CellEntry | None = CellEntry(e_switch=1.0, e_internal=0.5, p_leak=0.01)

    def lookup(self, name: str) -> CellEntry:
        for pattern, entry in self.entries.items():
            if fnmatch.fnmatchcase(name, pattern):
                return entry
        if self.default is None:
            raise LibraryError(f"no library entry for signal {name!r}")
        return self.default

    def coefficients(self, signals: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Per-signal toggle energy and leakage power vectors."""
        entries = [self.lookup(s) for s in signals]
        energy = np.array([e.e_switch + e.e_internal for e in entries], dtype=np.float64)
        leak = np.array([e.p_leak for e in entries], dtype=np.float64)
        return energy, leak


@dataclass(frozen=True)
class FramePlan:
    frame_width: int
    n_frames: int
    origin: int = 0

    def __post_init__(self):
        if self.frame_width < 1 or self.n_frames < 1:
            raise DomainError("frame width and frame count must be positive")
        if self.origin < 0:
            raise DomainError("frame origin must be non-negative")

    @classmethod
    def covering(cls, log: EventLog, n_frames: int, origin: int = 0) -> "FramePlan":
        """``n_frames`` equal frames spanning as much of the log as fits."""
        width = (log.end_time - origin) // n_frames
        if width < 1:
            raise DomainError(f"log span {log.end_time - origin} too short for {n_frames} frames")
        return cls(frame_width=width, n_frames=n_frames, origin=origin)

    @property
    def stop(self) -> int:
        return self.origin + self.n_frames * self.frame_width

    def edges(self) -> np.ndarray:
        return self.origin + self.frame_width * np.arange(self.n_frames + 1, dtype=np.int64)

    def starts(self) -> np.ndarray:
        return self.edges()[:-1]

    def check(self, log: EventLog) -> None:
        if self.stop > log.end_time:
            raise DomainError(f"frame plan ends at {self.stop}, past log end {log.end_time}")


def count_toggles(log: EventLog, plan: FramePlan, workers: int = 1) -> np.ndarray:
    """(n_frames, n_signals) toggle counts over half-open frames ``[start, end)``."""
    plan.check(log)
    keys, stride = log.by_signal()
    edges = plan.edges()

    def chunk(lo: int, hi: int) -> np.ndarray:
        query = np.arange(lo, hi, dtype=np.int64)[:, None] * stride + edges[None, :]
        pos = np.searchsorted(keys, query.ravel(), side="left").reshape(query.shape)
        return np.diff(pos, axis=1)

    n_sig = log.n_signals
    if workers <= 1 or n_sig < 2:
        counts = chunk(0, n_sig)
    else:
        bounds = np.linspace(0, n_sig, min(workers, n_sig) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(chunk, bounds[:-1], bounds[1:]))
        counts = np.concatenate(parts, axis=0)
    return np.ascontiguousarray(counts.T)


def estimate_power(log: EventLog, lib: CellLibrary, plan: FramePlan, workers: int = 1) -> np.ndarray:
    """Average power of every frame in ``plan``."""
    energy, leak = lib.coefficients(log.signals)
    toggles = count_toggles(log, plan, workers=workers)
    frame_energy = toggles @ energy
    return frame_energy / plan.frame_width + math.fsum(leak.tolist())


def frame_energy_total(power: np.ndarray, plan: FramePlan) -> float:
    return math.fsum((np.asarray(power) * plan.frame_width).tolist())


@dataclass(frozen=True)
class BenchmarkRow:
    n_frames: int
    seconds: float
    normalized: float
    runs: tuple[float, ...]


def benchmark_frames(
    log: EventLog, lib: CellLibrary, frame_counts: Sequence[int], repeats: int = 5
) -> list[BenchmarkRow]:
    """Median wall time of :func:`estimate_power` for each frame count.

    Times are normalized to the first entry of ``frame_counts``. The
    per-signal event index is built once up front, as loading the activity
    file would be, and is not part of any timing.
    """
    if len(log) == 0:
        raise DomainError("cannot benchmark an empty log")
    if not frame_counts:
        raise DomainError("no frame counts given")
    log.by_signal()
    lib.coefficients(log.signals)
    plans = [FramePlan.covering(log, int(n)) for n in frame_counts]
    runs = {i: [] for i in range(len(plans))}
    # Interleave the repeats so slow drifts hit every frame count alike.
    for _ in range(repeats):
        for i, plan in enumerate(plans):
            t0 = time.perf_counter()
            estimate_power(log, lib, plan)
            runs[i].append(time.perf_counter() - t0)
    medians = [float(np.median(runs[i])) for i in range(len(plans))]
    return [
        BenchmarkRow(n_frames=int(n), seconds=m, normalized=m / medians[0], runs=tuple(runs[i]))
        for i, (n, m) in enumerate(zip(frame_counts, medians))
    ]
