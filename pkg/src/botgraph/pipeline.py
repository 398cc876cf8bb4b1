"""Extraction over an interval stream, the feature cache, and dataset assembly."""

from __future__ import annotations

import io
import json
import logging
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import InputFormatError
from .graphfeat import (
    FEATURE_NAMES,
    N_FEATURES,
    ConvergenceConfig,
    IntervalFeatures,
    _from_index_arrays,
    canonical_mode,
    features_for_graph,
)
from .ingest import GroundTruth, PacketEvent
from .timeseries import NodeTimeSeries, SamplingConfig, assemble, slice_windows, undersample
from .windowing import ColumnarSlicer, WindowConfig, localize

log = logging.getLogger(__name__)

CACHE_MAGIC = "# botgraph-features v1"


@dataclass
class ExtractionReport:
    workers: int
    graph_mode: str
    wall_s: float = 0.0
    events: int = 0
    edges_processed: int = 0
    intervals: int = 0
    per_feature_s: Dict[str, float] = field(default_factory=dict)
    per_interval_s: List[float] = field(default_factory=list)
    eigenvector_degenerate: List[int] = field(default_factory=list)
    hits_degenerate: List[int] = field(default_factory=list)
    peak_open_intervals: int = 0

    @property
    def throughput(self) -> float:
        """Input events per wall-clock second."""
        return self.events / self.wall_s if self.wall_s > 0 else float("inf")

    def as_dict(self):
        d = asdict(self)
        d["throughput_events_per_s"] = self.throughput
        return d


@dataclass
class ExtractionResult:
    features: List[IntervalFeatures]
    starts: List[float]
    report: ExtractionReport


def _extract_task(index, src, dst, mode, cfg):
    """Features for one interval given global host ids; returns global node ids."""
    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    ids, src, dst = localize(src, dst)
    g = _from_index_arrays(ids.tolist(), src, dst, mode)
    timings["build_graph"] = time.perf_counter() - t0
    feats = features_for_graph(g, cfg, index, timings)
    elapsed = time.perf_counter() - t0
    return index, feats.nodes, feats.values, feats.eigenvector_degenerate, feats.hits_degenerate, timings, elapsed


def extract_features(
    events: Iterable[PacketEvent],
    window: WindowConfig = WindowConfig(),
    mode: str = "multigraph",
    conv: ConvergenceConfig = ConvergenceConfig(),
    workers: int = 1,
    duration_s: Optional[float] = None,
) -> ExtractionResult:
    """Slice the stream and compute normalized features for every interval.

    With ``workers > 1`` intervals are farmed out to a process pool; at most
    ``2 * workers`` intervals are in flight and results are merged strictly by
    interval index, so the output does not depend on the worker count.
    ``duration_s=None`` means "up to the last event".
    """
    mode = canonical_mode(mode)
    workers = max(1, int(workers))
    report = ExtractionReport(workers=workers, graph_mode=mode)
    slicer = ColumnarSlicer(window, duration_s)
    intervals = slicer(events)
    results: List[IntervalFeatures] = []
    starts: List[float] = []

    def absorb(res):
        index, ids, values, ev_flag, h_flag, timings, elapsed = res
        nodes = [slicer.names[k] for k in ids]
        results.append(IntervalFeatures(index, nodes, values, ev_flag, h_flag))
        report.per_interval_s.append(elapsed)
        for k, v in timings.items():
            report.per_feature_s[k] = report.per_feature_s.get(k, 0.0) + v
        if ev_flag:
            report.eigenvector_degenerate.append(index)
        if h_flag:
            report.hits_degenerate.append(index)

    t0 = time.perf_counter()
    if workers == 1:
        for iv in intervals:
            report.edges_processed += len(iv)
            starts.append(iv.start_s)
            absorb(_extract_task(iv.index, iv.src, iv.dst, mode, conv))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pending = deque()
            for iv in intervals:
                report.edges_processed += len(iv)
                starts.append(iv.start_s)
                pending.append(pool.submit(_extract_task, iv.index, iv.src, iv.dst, mode, conv))
                while len(pending) >= 2 * workers:
                    absorb(pending.popleft().result())
            while pending:
                absorb(pending.popleft().result())
    report.wall_s = time.perf_counter() - t0
    report.events = slicer.event_count
    report.intervals = len(results)
    report.peak_open_intervals = slicer.peak_open
    return ExtractionResult(results, starts, report)


# ------------------------------------------------------------------ cache I/O


@dataclass
class FeatureCache:
    meta: dict
    intervals: List[IntervalFeatures]

    @property
    def truth(self) -> GroundTruth:
        return GroundTruth({k: float(v) for k, v in (self.meta.get("truth") or {}).items()})

    @property
    def starts(self) -> List[float]:
        return list(self.meta["interval_starts"])

    @property
    def name(self) -> str:
        return self.meta.get("name") or ""

    def series(self) -> List[NodeTimeSeries]:
        return assemble(self.intervals, self.truth, starts=self.starts, group=self.name)


def cache_meta(
    window: WindowConfig,
    mode: str,
    conv: ConvergenceConfig,
    starts: Sequence[float],
    truth: Optional[GroundTruth],
    name: str = "",
    source: str = "",
    extra: Optional[dict] = None,
) -> dict:
    meta = {
        "name": name,
        "source": source,
        "window_s": window.window_s,
        "step_s": window.step_s,
        "graph_mode": canonical_mode(mode),
        "epsilon": conv.epsilon,
        "max_iters": conv.max_iters,
        "damping": conv.damping,
        "feature_order": list(FEATURE_NAMES),
        "interval_count": len(starts),
        "interval_starts": list(starts),
        "truth": dict(sorted((truth.entries if truth else {}).items())),
    }
    if extra:
        meta.update(extra)
    return meta


def format_cache(meta: dict, intervals: Sequence[IntervalFeatures]) -> str:
    buf = io.StringIO()
    buf.write(CACHE_MAGIC + "\n")
    buf.write("# meta " + json.dumps(meta, sort_keys=True) + "\n")
    buf.write("interval_index,node," + ",".join(f"f{k}" for k in range(1, N_FEATURES + 1)) + "\n")
    for feats in intervals:
        for node, row in zip(feats.nodes, feats.values):
            buf.write(f"{feats.index},{node}," + ",".join(format(v, ".9g") for v in row) + "\n")
    return buf.getvalue()


def write_cache(path, meta: dict, intervals: Sequence[IntervalFeatures]) -> None:
    Path(path).write_text(format_cache(meta, intervals), encoding="utf-8")


def read_cache(path) -> FeatureCache:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputFormatError(f"{path}: no such feature cache") from None
    return parse_cache_text(text, origin=str(path), default_name=path.stem)


def parse_cache_text(text: str, origin: str = "<cache>", default_name: str = "") -> FeatureCache:
    lines = text.splitlines()
    if len(lines) < 3 or lines[0] != CACHE_MAGIC or not lines[1].startswith("# meta "):
        raise InputFormatError(f"{origin}: not a botgraph feature cache")
    try:
        meta = json.loads(lines[1][len("# meta "):])
        T = int(meta["interval_count"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputFormatError(f"{origin}: bad cache metadata ({exc})") from None
    nodes: List[List[str]] = [[] for _ in range(T)]
    rows: List[List[List[float]]] = [[] for _ in range(T)]
    for lineno, line in enumerate(lines[3:], start=4):
        parts = line.split(",")
        if len(parts) != 2 + N_FEATURES:
            raise InputFormatError(f"{origin}:{lineno}: expected {2 + N_FEATURES} fields")
        try:
            idx = int(parts[0])
            vals = [float(v) for v in parts[2:]]
        except ValueError as exc:
            raise InputFormatError(f"{origin}:{lineno}: {exc}") from None
        if not 0 <= idx < T:
            raise InputFormatError(f"{origin}:{lineno}: interval index {idx} out of range")
        nodes[idx].append(parts[1])
        rows[idx].append(vals)
    intervals = [
        IntervalFeatures(i, nodes[i], np.asarray(rows[i], dtype=np.float64).reshape(-1, N_FEATURES))
        for i in range(T)
    ]
    if not meta.get("name"):
        meta["name"] = default_name
    return FeatureCache(meta, intervals)


def cache_from_result(result: ExtractionResult, window, mode, conv, truth, name="", source="") -> FeatureCache:
    """In-memory equivalent of writing the cache and reading it back."""
    meta = cache_meta(window, mode, conv, result.starts, truth, name, source)
    return parse_cache_text(format_cache(meta, result.features), default_name=name)


# -------------------------------------------------------------- dataset prep


def prepare_series(
    caches: Sequence[FeatureCache],
    sampling: SamplingConfig,
    do_undersample: bool = True,
) -> Dict[str, List[NodeTimeSeries]]:
    """Per-collection host series, undersampled within each collection."""
    out: Dict[str, List[NodeTimeSeries]] = {}
    for k, cache in enumerate(caches):
        name = cache.name or f"set{k}"
        if name in out:
            name = f"{name}#{k}"
        cache.meta["name"] = name
        series = cache.series()
        for s in series:
            s.group = name
        if do_undersample:
            series = undersample(series, sampling)
        out[name] = series
    return out


def prepare_windows(series_by_set: Dict[str, List[NodeTimeSeries]], sampling: SamplingConfig):
    return {name: slice_windows(series, sampling) for name, series in series_by_set.items()}
