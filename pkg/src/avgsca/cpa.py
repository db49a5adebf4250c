"""Correlation power analysis over one key byte."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import AttackInconclusive, DomainError
from .leakage import LeakageModel, hypotheses
from .traceset import TraceSet

# Pearson of a zero-variance vector is undefined. NaN keeps it out of every
# max/argmax below and cannot be mistaken for an observed correlation of 0.
NOT_DEFINED = float("nan")


def pearson(a, b) -> float:
    """Pearson correlation of two equal-length vectors, NaN if either is constant."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise DomainError(f"vectors must be 1-D of equal length, got {a.shape} and {b.shape}")
    if len(a) < 2:
        raise DomainError("need at least two observations")
    da = a - a.mean()
    db = b - b.mean()
    saa = float(da @ da)
    sbb = float(db @ db)
    if saa == 0.0 or sbb == 0.0:
        return NOT_DEFINED
    # Sorting the operands makes the result exactly symmetric in (a, b).
    lo, hi = sorted((saa, sbb))
    r = float(da @ db) / (np.sqrt(lo) * np.sqrt(hi))
    return max(-1.0, min(1.0, r))


def correlation_matrix(h: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """Pearson correlation of every column of ``h`` (N, G) with every column of ``samples`` (N, T).

    Returns a (G, T) matrix; entries involving a constant column are NaN.
    """
    h = np.asarray(h, dtype=np.float64)
    samples = np.asarray(samples, dtype=np.float64)
    hc = h - h.mean(axis=0)
    sc = samples - samples.mean(axis=0)
    hn = np.sqrt(np.einsum("ng,ng->g", hc, hc))
    sn = np.sqrt(np.einsum("nt,nt->t", sc, sc))
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = (hc.T @ sc) / np.outer(hn, sn)
    rho[hn == 0, :] = np.nan
    rho[:, sn == 0] = np.nan
    return np.clip(rho, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class CpaResult:
    rho: np.ndarray
    best_sample_per_guess: np.ndarray
    scores: np.ndarray
    recovered_key: int
    correct_key_rank: int | None
    window: tuple[int, int]

    @property
    def max_abs_rho(self) -> float:
        """Largest |rho| of the recovered key within the window."""
        row = self.rho[self.recovered_key]
        return float(np.nanmax(np.abs(row))) if np.any(~np.isnan(row)) else NOT_DEFINED

    @property
    def best_sample(self) -> int:
        return int(self.best_sample_per_guess[self.recovered_key])


def rank_of(scores: np.ndarray, key: int) -> int:
    """1-based rank of ``key`` by descending score; ties count against ``key``."""
    s = np.where(np.isnan(scores), -np.inf, scores)
    return int(np.count_nonzero(s >= s[key]))


def cpa_attack(
    traces: TraceSet,
    model: LeakageModel,
    byte_window: tuple[int, int] | None = None,
    true_key: int | None = None,
    absolute: bool | None = None,
) -> CpaResult:
    """Correlate every key guess against every sample of ``byte_window``.

    Each guess is scored by its best correlation in the window. With
    ``absolute`` the score is ``max |rho|``; otherwise it is ``max rho``.
    The default uses signed scores for models where the complement key
    produces the negated hypothesis (``|rho|`` cannot tell those two apart)
    and absolute scores otherwise.
    """
    if traces.n_traces < 2:
        raise DomainError("CPA needs at least two traces")
    start, stop = (0, traces.n_samples) if byte_window is None else map(int, byte_window)
    if not 0 <= start < stop <= traces.n_samples:
        raise DomainError(f"window [{start}, {stop}) empty or outside [0, {traces.n_samples})")
    if absolute is None:
        absolute = not model.complement_symmetric

    rho = correlation_matrix(hypotheses(model, traces.inputs), traces.samples[:, start:stop])
    if np.all(np.isnan(rho)):
        raise AttackInconclusive("every sample in the window is constant across traces")

    metric = np.abs(rho) if absolute else rho
    filled = np.where(np.isnan(metric), -np.inf, metric)
    best = np.argmax(filled, axis=1)
    scores = filled[np.arange(256), best]
    scores[np.isneginf(scores)] = np.nan
    valid = np.where(np.isnan(scores), -np.inf, scores)
    recovered = int(np.argmax(valid))
    rank = None if true_key is None else rank_of(scores, int(true_key))
    return CpaResult(
        rho=rho,
        best_sample_per_guess=best + start,
        scores=scores,
        recovered_key=recovered,
        correct_key_rank=rank,
        window=(start, stop),
    )


@dataclass(frozen=True)
class SuccessStats:
    n_repeats: int
    n_success: int
    success_rate: float
    mean_rank: float


def success_rate(results: Sequence[CpaResult] | Sequence[int]) -> SuccessStats:
    """Aggregate repeated attacks; success means the correct key ranks first.

    Accepts CPA results carrying ``correct_key_rank`` or bare ranks.
    """
    if len(results) == 0:
        raise DomainError("no attack results to aggregate")
    ranks = []
    for r in results:
        rank = r.correct_key_rank if isinstance(r, CpaResult) else r
        if rank is None:
            raise DomainError("attack result has no correct_key_rank (true_key not given)")
        ranks.append(int(rank))
    n_success = sum(1 for r in ranks if r == 1)
    return SuccessStats(
        n_repeats=len(ranks),
        n_success=n_success,
        success_rate=n_success / len(ranks),
        mean_rank=sum(ranks) / len(ranks),
    )


def downsample_average(traces: TraceSet, k_cycles: int) -> TraceSet:
    """Average every ``k_cycles`` consecutive samples; a trailing partial group is dropped."""
    k = int(k_cycles)
    if k < 1:
        raise DomainError("k must be positive")
    if k > traces.n_samples:
        raise DomainError(f"k={k} exceeds trace length {traces.n_samples}")
    n_out = traces.n_samples // k
    kept = traces.samples[:, : n_out * k]
    samples = kept.reshape(traces.n_traces, n_out, k).mean(axis=2)
    seg = None
    if traces.segment_index is not None:
        groups = traces.segment_index[: n_out * k].reshape(n_out, k)
        seg = np.where(np.all(groups == groups[:, :1], axis=1), groups[:, 0], -1)
    width = traces.frame_width_cycles
    width = width * k if isinstance(width, Fraction) else Fraction(width).limit_denominator(10**9) * k
    return traces.with_samples(samples, frame_width_cycles=width, segment_index=seg)
