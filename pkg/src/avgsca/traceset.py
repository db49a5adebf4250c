"""Sampled trace matrices shared by the synthesizer, CPA and file I/O."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .errors import DomainError


class SamplingKind(enum.IntEnum):
    NON_AVERAGED = 0
    AVERAGED = 1


@dataclass(frozen=True, eq=False)
class TraceSet:
    """N traces x T samples plus the known input byte of each trace.

    ``frame_width_cycles`` is how many clock cycles one sample stands for
    (0.5 for two samples per cycle, 3 for 1s3cc, ...). ``segment_index``
    optionally attributes each sample to the key-byte segment it was taken
    from; -1 marks samples that straddle segments.
    """

    samples: np.ndarray
    inputs: np.ndarray
    frame_width_cycles: float | Fraction
    sampling_kind: SamplingKind
    segment_index: np.ndarray | None = field(default=None)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise DomainError(f"samples must be a 2-D matrix, got shape {samples.shape}")
        inputs = np.asarray(self.inputs)
        if inputs.ndim != 1 or len(inputs) != samples.shape[0]:
            raise DomainError(f"{len(inputs)} inputs for {samples.shape[0]} traces")
        if np.any((inputs < 0) | (inputs > 255)):
            raise DomainError("inputs must be bytes")
        if not self.frame_width_cycles > 0:
            raise DomainError("frame_width_cycles must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "inputs", inputs.astype(np.uint8))
        object.__setattr__(self, "sampling_kind", SamplingKind(self.sampling_kind))
        if self.segment_index is not None:
            seg = np.asarray(self.segment_index, dtype=np.int64)
            if seg.shape != (samples.shape[1],):
                raise DomainError("segment_index must have one entry per sample")
            object.__setattr__(self, "segment_index", seg)

    @property
    def n_traces(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def window_of_segment(self, segment: int) -> tuple[int, int]:
        """[start, stop) sample range attributed entirely to ``segment``."""
        if self.segment_index is None:
            raise DomainError("trace set carries no segment attribution")
        idx = np.flatnonzero(self.segment_index == segment)
        if idx.size == 0:
            raise DomainError(f"no sample belongs to segment {segment}")
        return int(idx[0]), int(idx[-1]) + 1

    def with_samples(self, samples, **changes) -> "TraceSet":
        return replace(self, samples=samples, **changes)

    def __eq__(self, other):
        if not isinstance(other, TraceSet):
            return NotImplemented
        seg_eq = (self.segment_index is None and other.segment_index is None) or (
            self.segment_index is not None
            and other.segment_index is not None
            and np.array_equal(self.segment_index, other.segment_index)
        )
        return (
            self.samples.shape == other.samples.shape
            and self.samples.tobytes() == other.samples.tobytes()
            and np.array_equal(self.inputs, other.inputs)
            and float(self.frame_width_cycles) == float(other.frame_width_cycles)
            and self.sampling_kind == other.sampling_kind
            and seg_eq
        )
