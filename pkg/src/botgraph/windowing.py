"""Fixed-duration overlapping intervals over an ordered event stream."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import islice
from operator import itemgetter
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, OrderingError
from .ingest import PacketEvent


@dataclass(frozen=True)
class WindowConfig:
    window_s: float = 300.0
    step_s: float = 150.0

    def __post_init__(self):
        if not (self.step_s > 0 and self.window_s > 0):
            raise ConfigurationError("window_s and step_s must be positive")
        if self.step_s > self.window_s:
            raise ConfigurationError(
                f"step_s ({self.step_s}) must not exceed window_s ({self.window_s})"
            )

    @property
    def overlap_s(self) -> float:
        return self.window_s - self.step_s

    @property
    def max_open(self) -> int:
        """Upper bound on intervals that can contain one timestamp."""
        return math.ceil(self.window_s / self.step_s)

    def start(self, index: int) -> float:
        return index * self.step_s

    def end(self, index: int) -> float:
        return index * self.step_s + self.window_s


@dataclass(frozen=True)
class Interval:
    index: int
    start_s: float
    end_s: float
    events: Tuple[PacketEvent, ...] = ()

    def __len__(self):
        return len(self.events)


def interval_count(duration_s: float, cfg: WindowConfig) -> int:
    """Number of intervals covering ``[0, duration_s]`` including the partial tail."""
    return math.ceil(max(duration_s - cfg.window_s, 0.0) / cfg.step_s) + 1


def indices_containing(t: float, cfg: WindowConfig) -> range:
    """Indices ``i`` with ``i*step <= t < i*step + window``."""
    lo = max(0, math.floor((t - cfg.window_s) / cfg.step_s) + 1)
    hi = math.floor(t / cfg.step_s)
    # float guard: floor() can land one off for values on a boundary
    while lo > 0 and t < cfg.end(lo - 1):
        lo -= 1
    while cfg.end(lo) <= t:
        lo += 1
    while hi >= 0 and cfg.start(hi) > t:
        hi -= 1
    while cfg.start(hi + 1) <= t:
        hi += 1
    return range(lo, hi + 1)


class IntervalSlicer:
    """Streaming slicer; holds at most ``cfg.max_open`` interval buffers.

    ``duration_s=None`` plans intervals from the last timestamp seen.  The
    interval count follows :func:`interval_count`; it only grows past that if
    an event would otherwise land in no interval at all.  ``peak_open``
    records the most buffers held at once.
    """

    def __init__(self, cfg: WindowConfig, duration_s: Optional[float] = None):
        self.cfg = cfg
        self.duration_s = None if duration_s is None else float(duration_s)
        self.peak_open = 0

    def __call__(self, events: Iterable[PacketEvent]) -> Iterator[Interval]:
        cfg = self.cfg
        open_bufs: Dict[int, List[PacketEvent]] = {}
        next_emit = 0
        last_t = -math.inf
        fixed_last = None
        if self.duration_s is not None:
            fixed_last = interval_count(self.duration_s, cfg) - 1

        def emit(idx):
            return Interval(idx, cfg.start(idx), cfg.end(idx), tuple(open_bufs.pop(idx, ())))

        for ev in events:
            t = ev.timestamp
            if t < last_t:
                raise OrderingError(f"timestamp regression: {t} after {last_t}")
            last_t = t
            span = indices_containing(t, cfg)
            while cfg.end(next_emit) <= t:
                yield emit(next_emit)
                next_emit += 1
            # past the planned tail only the first covering interval is opened
            hi = span.stop - 1
            if fixed_last is not None:
                hi = max(min(hi, fixed_last), span.start)
            for idx in range(span.start, hi + 1):
                open_bufs.setdefault(idx, []).append(ev)
            if len(open_bufs) > self.peak_open:
                self.peak_open = len(open_bufs)

        if fixed_last is not None:
            last_idx = fixed_last
        else:
            last_idx = interval_count(max(last_t, 0.0), cfg) - 1
        if last_t > -math.inf:
            last_idx = max(last_idx, indices_containing(last_t, cfg).start)
        while next_emit <= last_idx:
            yield emit(next_emit)
            next_emit += 1


def slice_events(
    events: Iterable[PacketEvent], cfg: WindowConfig, duration_s: Optional[float] = None
) -> Iterator[Interval]:
    """Yield every interval in index order, empty ones included.

    Membership is half-open: an event at ``t`` belongs to interval ``i`` iff
    ``i*step <= t < i*step + window``.
    """
    return IntervalSlicer(cfg, duration_s)(events)


# ----------------------------------------------------------------- columnar


@dataclass(frozen=True, eq=False)
class EncodedInterval:
    """An interval as integer endpoint arrays.

    ``src``/``dst`` hold ids into the slicer's ``names`` list, which is
    shared by every interval of one stream.
    """

    index: int
    start_s: float
    end_s: float
    src: np.ndarray
    dst: np.ndarray

    def __len__(self):
        return int(self.src.size)


def localize(src: np.ndarray, dst: np.ndarray):
    """Renumber global ids densely in first-appearance order.

    Returns ``(ids, local_src, local_dst)`` where ``ids[k]`` is the global id
    of local node ``k``.  Within a packet the source counts as appearing
    before the destination.
    """
    if src.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    inter = np.empty(2 * src.size, dtype=np.int64)
    inter[0::2] = src
    inter[1::2] = dst
    uniq, first, inverse = np.unique(inter, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty(order.size, dtype=np.int64)
    rank[order] = np.arange(order.size)
    local = rank[inverse.reshape(-1)]
    return uniq[order], local[0::2].copy(), local[1::2].copy()


_TIME, _SRC, _DST = itemgetter(0), itemgetter(1), itemgetter(2)


class _Interner(dict):
    """host -> dense id, appending new hosts to ``names``."""

    def __init__(self, names):
        super().__init__((h, k) for k, h in enumerate(names))
        self.names = names

    def __missing__(self, host):
        k = self[host] = len(self.names)
        self.names.append(host)
        return k


def _assemble(index, cfg, pieces) -> EncodedInterval:
    if pieces:
        src = np.concatenate([p[0] for p in pieces])
        dst = np.concatenate([p[1] for p in pieces])
    else:
        src = dst = np.zeros(0, dtype=np.int64)
    return EncodedInterval(index, cfg.start(index), cfg.end(index), src, dst)


class ColumnarSlicer:
    """Chunked equivalent of :class:`IntervalSlicer` for the extraction pipeline.

    Events are pulled ``chunk`` at a time into timestamp and host-id arrays;
    interval membership is found with binary searches using the same
    half-open comparisons as the per-event slicer, so both produce identical
    intervals.  Memory holds one chunk plus the still-open intervals.
    ``names`` maps the global host ids used in every emitted interval.
    """

    def __init__(self, cfg: WindowConfig, duration_s: Optional[float] = None, chunk: int = 1 << 16):
        self.cfg = cfg
        self.duration_s = None if duration_s is None else float(duration_s)
        self.chunk = int(chunk)
        self.peak_open = 0
        self.event_count = 0
        self.names: List[str] = []

    def __call__(self, events: Iterable[PacketEvent]) -> Iterator[EncodedInterval]:
        cfg = self.cfg
        step, window = cfg.step_s, cfg.window_s
        names = self.names
        lookup = _Interner(names).__getitem__

        cap = math.inf
        if self.duration_s is not None:
            cap = interval_count(self.duration_s, cfg) - 1
        open_pieces: Dict[int, list] = {}
        next_emit = 0
        last_t = -math.inf
        it = iter(events)
        while True:
            batch = list(islice(it, self.chunk))
            if not batch:
                break
            n = len(batch)
            t = np.fromiter(map(_TIME, batch), dtype=np.float64, count=n)
            if t[0] < last_t or (t.size > 1 and np.any(t[1:] < t[:-1])):
                bad = np.r_[last_t, t]
                k = int(np.argmax(bad[1:] < bad[:-1]))
                raise OrderingError(f"timestamp regression: {bad[k + 1]} after {bad[k]}")
            s = np.fromiter(map(lookup, map(_SRC, batch)), dtype=np.int64, count=n)
            d = np.fromiter(map(lookup, map(_DST, batch)), dtype=np.int64, count=n)
            self.event_count += len(batch)
            t_last = float(t[-1])
            last_t = t_last
            i = next_emit
            while i * step <= t_last:
                lower = i * step
                if i > cap:
                    # past the planned tail an event joins only its first covering interval
                    lower = max(lower, (i - 1) * step + window)
                a = int(np.searchsorted(t, lower, "left"))
                b = int(np.searchsorted(t, i * step + window, "left"))
                if b > a:
                    open_pieces.setdefault(i, []).append((s[a:b], d[a:b]))
                if i * step + window <= t_last:
                    # complete: later events are all >= t_last
                    yield _assemble(i, cfg, open_pieces.pop(i, ()))
                    next_emit = i + 1
                i += 1
            self.peak_open = max(self.peak_open, len(open_pieces))

        if self.duration_s is not None:
            last_idx = cap
        else:
            last_idx = interval_count(max(last_t, 0.0), cfg) - 1
        if last_t > -math.inf:
            last_idx = max(last_idx, indices_containing(last_t, cfg).start)
        while next_emit <= last_idx:
            yield _assemble(next_emit, cfg, open_pieces.pop(next_emit, ()))
            next_emit += 1
