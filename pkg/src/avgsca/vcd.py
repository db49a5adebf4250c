"""Scalar-only Value Change Dump reader/writer and synthetic activity logs.

Accepted subset: ``$timescale`` of 1ns or 1ps, nested ``$scope``/``$upscope``,
1-bit ``$var`` declarations, ``#time`` stamps and scalar changes ``0``/``1``
(``x``/``z`` are read as "no change"). ``$comment``, ``$date`` and
``$version`` blocks are skipped; ``$dumpvars``/``$dumpall``/``$dumpon``/
``$dumpoff`` wrappers are transparent. Vector and real values are rejected.
"""

from __future__ import annotations

import io
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

import numpy as np

from .errors import VCDParseError

TIMESCALES = ("1ns", "1ps")
_SKIPPED = {"$comment", "$date", "$version"}
_TRANSPARENT = {"$dumpvars", "$dumpall", "$dumpon", "$dumpoff"}


@dataclass(frozen=True, eq=False)
class EventLog:
    """Time-ordered scalar value changes.

    ``times`` are in units of ``timescale``. Event ``i`` sets signal
    ``signals[signal_index[i]]`` to ``values[i]``. Consecutive events on the
    same signal always carry different values.
    """

    signals: tuple[str, ...]
    times: np.ndarray
    signal_index: np.ndarray
    values: np.ndarray
    end_time: int
    timescale: str = "1ns"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.int64)
        sig_dtype = np.uint16 if len(self.signals) <= np.iinfo(np.uint16).max else np.int32
        sig = np.asarray(self.signal_index).astype(sig_dtype, copy=False)
        vals = np.asarray(self.values).astype(np.uint8, copy=False)
        if not (times.shape == sig.shape == vals.shape) or times.ndim != 1:
            raise ValueError("times, signal_index and values must be 1-D of equal length")
        if times.size:
            if times[0] < 0 or np.any(np.diff(times) < 0):
                raise ValueError("event times must be non-negative and sorted")
            if int(sig.max()) >= len(self.signals):
                raise ValueError("signal index out of range")
            if int(times[-1]) > self.end_time:
                raise ValueError("event after end_time")
        if self.end_time < 0:
            raise ValueError("end_time must be non-negative")
        if self.timescale not in TIMESCALES:
            raise ValueError(f"timescale must be one of {TIMESCALES}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "signal_index", sig)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "signals", tuple(self.signals))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def n_signals(self) -> int:
        return len(self.signals)

    def events(self) -> Iterator[tuple[int, str, int]]:
        for t, s, v in zip(self.times.tolist(), self.signal_index.tolist(), self.values.tolist()):
            yield t, self.signals[s], v

    def by_signal(self) -> tuple[np.ndarray, int]:
        """Event keys ``signal * stride + time`` sorted ascending, and ``stride``.

        Grouping events per signal lets toggle counts for any frame grid be
        read off with binary searches. Built on first use and cached.
        """
        if "by_signal" not in self._cache:
            stride = self.end_time + 1
            order = np.argsort(self.signal_index, kind="stable")
            keys = self.signal_index[order].astype(np.int64)
            keys *= stride
            keys += self.times[order]
            del order
            self._cache["by_signal"] = (keys, stride)
        return self._cache["by_signal"]

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return (
            self.signals == other.signals
            and self.end_time == other.end_time
            and self.timescale == other.timescale
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.signal_index, other.signal_index)
            and np.array_equal(self.values, other.values)
        )


def _tokens(text: str) -> Iterator[tuple[str, int]]:
    for lineno, line in enumerate(text.splitlines(), start=1):
        for tok in line.split():
            yield tok, lineno


def parse_vcd(source: str | bytes | Iterable[str]) -> EventLog:
    """Parse VCD text into an :class:`EventLog`.

    Raises :class:`VCDParseError` carrying the 1-based line of the offending
    token.
    """
    if isinstance(source, bytes):
        try:
            source = source.decode("ascii")
        except UnicodeDecodeError as exc:
            raise VCDParseError(f"non-ASCII byte at position {exc.start}", 1 + source[: exc.start].count(b"\n")) from None
    elif not isinstance(source, str):
        source = "".join(source)

    toks = _tokens(source)
    timescale = None
    scope: list[str] = []
    names: list[str] = []
    ids: dict[str, int] = {}
    in_body = False
    last_line = 0

    def until_end(opening: str, line: int) -> list[str]:
        body = []
        for tok, ln in toks:
            if tok == "$end":
                return body
            body.append(tok)
        raise VCDParseError(f"unterminated {opening}", line)

    times: list[int] = []
    sigs: list[int] = []
    vals: list[int] = []
    current: list[int] = []
    now = None
    end_time = None

    for tok, line in toks:
        last_line = line
        if not in_body:
            if tok in _SKIPPED:
                until_end(tok, line)
            elif tok == "$timescale":
                body = "".join(until_end(tok, line))
                if body not in TIMESCALES:
                    raise VCDParseError(f"unsupported timescale {body!r} (expected 1ns or 1ps)", line)
                timescale = body
            elif tok == "$scope":
                body = until_end(tok, line)
                if len(body) != 2:
                    raise VCDParseError("$scope needs a type and a name", line)
                scope.append(body[1])
            elif tok == "$upscope":
                if until_end(tok, line):
                    raise VCDParseError("unexpected tokens in $upscope", line)
                if not scope:
                    raise VCDParseError("$upscope without open scope", line)
                scope.pop()
            elif tok == "$var":
                body = until_end(tok, line)
                if len(body) < 4:
                    raise VCDParseError("$var needs type, width, identifier and name", line)
                vtype, width, ident, ref = body[:4]
                if not width.isdigit():
                    raise VCDParseError(f"bad width {width!r}", line)
                if int(width) != 1 or len(body) > 4 or vtype == "real":
                    raise VCDParseError(f"only 1-bit scalar signals are supported ({ref})", line)
                if ident in ids:
                    raise VCDParseError(f"duplicate identifier {ident!r}", line)
                ids[ident] = len(names)
                names.append(".".join([*scope, ref]))
            elif tok == "$enddefinitions":
                until_end(tok, line)
                if timescale is None:
                    raise VCDParseError("missing $timescale before $enddefinitions", line)
                if scope:
                    raise VCDParseError(f"unclosed $scope {scope[-1]!r}", line)
                in_body = True
                current = [-1] * len(names)
            elif tok.startswith("$"):
                raise VCDParseError(f"unknown header keyword {tok!r}", line)
            else:
                raise VCDParseError(f"value data before $enddefinitions: {tok!r}", line)
            continue

        if tok in _TRANSPARENT or tok == "$end":
            continue
        if tok in _SKIPPED:
            until_end(tok, line)
            continue
        head = tok[0]
        if head == "#":
            try:
                t = int(tok[1:])
            except ValueError:
                raise VCDParseError(f"bad timestamp {tok!r}", line) from None
            if t < 0:
                raise VCDParseError(f"negative timestamp {tok!r}", line)
            if now is not None and t < now:
                raise VCDParseError(f"time goes backwards: #{t} after #{now}", line)
            now = end_time = t
        elif head in "01xXzZ":
            ident = tok[1:]
            if not ident:
                raise VCDParseError(f"value change without identifier: {tok!r}", line)
            if ident not in ids:
                raise VCDParseError(f"undeclared identifier {ident!r}", line)
            if now is None:
                # Initial values dumped ahead of the first stamp belong to t=0.
                now = end_time = 0
            if head not in "01":
                continue
            s = ids[ident]
            v = int(head)
            if current[s] != v:
                current[s] = v
                times.append(now)
                sigs.append(s)
                vals.append(v)
        elif head in "bBrR":
            raise VCDParseError(f"vector/real value changes are not supported: {tok!r}", line)
        else:
            raise VCDParseError(f"unexpected token {tok!r}", line)

    if not in_body:
        raise VCDParseError("missing $enddefinitions", last_line)
    return EventLog(
        signals=tuple(names),
        times=np.array(times, dtype=np.int64),
        signal_index=np.array(sigs, dtype=np.int64),
        values=np.array(vals, dtype=np.uint8),
        end_time=0 if end_time is None else end_time,
        timescale=timescale,
    )


def _ident(i: int) -> str:
    # Printable ASCII identifiers: base-94 over '!'..'~'.
    out = []
    while True:
        i, r = divmod(i, 94)
        out.append(chr(33 + r))
        if i == 0:
            return "".join(out)
        i -= 1


def serialize_vcd(log: EventLog, out: io.TextIOBase | None = None) -> str | None:
    """Write ``log`` as VCD. Returns the text when ``out`` is None.

    Dotted signal names become nested scopes. A trailing timestamp records
    ``end_time`` so the log reparses identically.
    """
    sink = io.StringIO() if out is None else out
    w = sink.write
    w(f"$timescale {log.timescale} $end\n")
    open_scopes: list[str] = []
    for i, name in enumerate(log.signals):
        *path, ref = name.split(".")
        common = 0
        while common < min(len(path), len(open_scopes)) and path[common] == open_scopes[common]:
            common += 1
        for _ in range(len(open_scopes) - common):
            w("$upscope $end\n")
        for part in path[common:]:
            w(f"$scope module {part} $end\n")
        open_scopes = path
        w(f"$var wire 1 {_ident(i)} {ref} $end\n")
    for _ in open_scopes:
        w("$upscope $end\n")
    w("$enddefinitions $end\n")

    idents = [_ident(i) for i in range(log.n_signals)]
    times = log.times
    if len(times):
        cuts = np.flatnonzero(np.diff(times)) + 1
        starts = np.concatenate(([0], cuts)).tolist()
        stops = np.concatenate((cuts, [len(times)])).tolist()
        sig = log.signal_index.tolist()
        val = log.values.tolist()
        for a, b in zip(starts, stops):
            w(f"#{int(times[a])}\n")
            w("".join(f"{val[j]}{idents[sig[j]]}\n" for j in range(a, b)))
    if not len(times) or int(times[-1]) != log.end_time:
        w(f"#{log.end_time}\n")
    return sink.getvalue() if out is None else None


def counter_log(n_counters: int, n_cycles: int, width: int = 32, period: int = 10) -> EventLog:
    """Activity of ``n_counters`` free-running ``width``-bit counters.

    A clock rises at ``c * period + period // 2`` and falls at
    ``(c + 1) * period``; each counter increments on the rising edge.
    Signals are ``top.clk`` then ``top.cnt{i}.q{j}``. Every signal starts at
    0 with an event at t=0; the final clock fall is at ``end_time`` and is
    left out.
    """
    if n_counters < 1 or n_cycles < 1 or width < 1:
        raise ValueError("n_counters, n_cycles and width must be positive")
    if period < 2 or period % 2:
        raise ValueError("period must be an even number of time units")
    n_sig = 1 + n_counters * width
    c = np.arange(n_cycles, dtype=np.int64)
    # Bits that flip when c becomes c + 1.
    flips = np.zeros(n_cycles, dtype=np.int64)
    v = c + 1
    while True:
        even = (v & 1) == 0
        if not even.any():
            break
        flips[even] += 1
        v[even] >>= 1
    # Wrapping to zero flips every bit and sets none.
    wraps = flips >= width
    flips = np.minimum(flips + 1, width)

    per_cycle = 2 + n_counters * flips
    per_cycle[-1] -= 1
    offsets = n_sig + np.concatenate(([0], np.cumsum(per_cycle)[:-1]))
    total = n_sig + int(per_cycle.sum())

    sig_dtype = np.uint16 if n_sig <= np.iinfo(np.uint16).max else np.int32
    times = np.zeros(total, dtype=np.int64)
    sigs = np.empty(total, dtype=sig_dtype)
    vals = np.zeros(total, dtype=np.uint8)
    sigs[:n_sig] = np.arange(n_sig)

    half = period // 2
    group = 2 * flips + wraps
    for g in np.unique(group).tolist():
        d, wrap = divmod(g, 2)
        cyc = np.flatnonzero(group == g)
        bits = np.arange(d)
        t_sig = np.concatenate((
            [0],
            (1 + np.arange(n_counters)[:, None] * width + bits[None, :]).ravel(),
            [0],
        ))
        t_val = np.concatenate(([1], np.tile((bits == d - 1) & (not wrap), n_counters), [0])).astype(np.uint8)
        t_dt = np.full(len(t_sig), half, dtype=np.int64)
        t_dt[-1] = period
        last_full = cyc[-1] == n_cycles - 1
        body = cyc[:-1] if last_full else cyc
        if len(body):
            pos = offsets[body][:, None] + np.arange(len(t_sig))
            sigs[pos] = t_sig
            vals[pos] = t_val
            times[pos] = c[body, None] * period + t_dt
        if last_full:
            pos = offsets[-1] + np.arange(len(t_sig) - 1)
            sigs[pos] = t_sig[:-1]
            vals[pos] = t_val[:-1]
            times[pos] = c[-1] * period + t_dt[:-1]

    names = ["top.clk"] + [f"top.cnt{i}.q{j}" for i in range(n_counters) for j in range(width)]
    return EventLog(
        signals=tuple(names),
        times=times,
        signal_index=sigs,
        values=vals,
        end_time=n_cycles * period,
        timescale="1ns",
    )


def random_log(rng: np.random.Generator, max_signals: int = 12, max_events: int = 200) -> EventLog:
    """Random well-formed log with scoped names, shared timestamps and a tail gap."""
    n_sig = int(rng.integers(1, max_signals + 1))
    scopes = [f"s{i}" for i in range(int(rng.integers(1, 4)))]
    names = []
    for i in range(n_sig):
        depth = int(rng.integers(0, 3))
        path = list(rng.choice(scopes, size=depth)) if depth else []
        names.append(".".join([*path, f"n{i}"]))

    n_raw = int(rng.integers(0, max_events + 1))
    times = np.sort(rng.integers(0, 50, size=n_raw) * int(rng.integers(1, 5)))
    sigs = rng.integers(0, n_sig, size=n_raw)
    vals = rng.integers(0, 2, size=n_raw)
    keep, state = [], {}
    for j, (s, v) in enumerate(zip(sigs.tolist(), vals.tolist())):
        if state.get(s) != v:
            state[s] = v
            keep.append(j)
    keep = np.array(keep, dtype=np.int64)
    last = int(times[keep[-1]]) if len(keep) else 0
    return EventLog(
        signals=tuple(names),
        times=times[keep] if len(keep) else np.zeros(0, np.int64),
        signal_index=sigs[keep] if len(keep) else np.zeros(0, np.int64),
        values=vals[keep] if len(keep) else np.zeros(0, np.uint8),
        end_time=last + int(rng.integers(0, 10)),
        timescale=str(rng.choice(TIMESCALES)),
    )
