import tracemalloc

import numpy as np
import pytest

from botgraph.errors import InputFormatError
from botgraph.graphfeat import ConvergenceConfig
from botgraph.ingest import PacketEvent
from botgraph.pipeline import (
    cache_from_result,
    cache_meta,
    extract_features,
    format_cache,
    parse_cache_text,
    prepare_series,
    read_cache,
    write_cache,
)
from botgraph.timeseries import SamplingConfig
from botgraph.windowing import WindowConfig

W, CONV = WindowConfig(), ConvergenceConfig()


def test_cache_round_trip(tmp_path, small_scenario):
    spec, events, truth = small_scenario
    res = extract_features(events, W, "weighted", CONV, duration_s=spec.duration_s)
    meta = cache_meta(W, "weighted", CONV, res.starts, truth, "s", "src.csv")
    p = tmp_path / "c.feat"
    write_cache(p, meta, res.features)
    cache = read_cache(p)
    assert cache.meta["interval_count"] == len(res.features) == 15
    assert cache.truth.entries == truth.entries
    for a, b in zip(res.features, cache.intervals):
        assert a.nodes == b.nodes
        assert np.allclose(a.values, b.values, rtol=1e-8, atol=0)
    assert format_cache(cache.meta, cache.intervals) == p.read_text()
    header = p.read_text().splitlines()[2]
    assert header == "interval_index,node,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10"


def test_cache_values_in_range(small_scenario):
    spec, events, truth = small_scenario
    cache = cache_from_result(extract_features(events, W, "multi", CONV), W, "multi", CONV, truth)
    vals = np.concatenate([iv.values for iv in cache.intervals if len(iv)])
    assert vals.min() >= 0.05 and vals.max() <= 0.95


def test_bad_cache_rejected():
    with pytest.raises(InputFormatError):
        parse_cache_text("interval_index,node\n")


def test_workers_identical(small_scenario):
    spec, events, truth = small_scenario
    one = extract_features(events, W, "weighted", CONV, workers=1)
    three = extract_features(events, W, "weighted", CONV, workers=3)
    meta = cache_meta(W, "weighted", CONV, one.starts, truth)
    assert format_cache(meta, one.features) == format_cache(meta, three.features)
    assert three.report.workers == 3 and three.report.intervals == one.report.intervals


def test_modes_agree(small_scenario):
    spec, events, truth = small_scenario
    m = extract_features(events, W, "multigraph", CONV)
    w = extract_features(events, W, "weighted", CONV)
    assert m.report.edges_processed == w.report.edges_processed
    for a, b in zip(m.features, w.features):
        assert a.nodes == b.nodes
        assert np.max(np.abs(a.values - b.values), initial=0.0) <= 1e-9


def test_report_timings(small_scenario):
    spec, events, truth = small_scenario
    rep = extract_features(events, W, "weighted", CONV).report
    assert set(rep.per_feature_s) >= {"degree", "pagerank", "betweenness", "eigenvector_hits", "clustering"}
    assert len(rep.per_interval_s) == rep.intervals
    assert rep.events == len(events) and rep.throughput > 0
    assert rep.peak_open_intervals <= W.max_open


def _long_stream(n, hosts=40):
    for k in range(n):
        yield PacketEvent(k * 0.05, f"10.0.0.{k % hosts}", f"10.0.1.{(k * 7) % hosts}", 60)


def test_memory_bounded_by_open_windows():
    """Peak traced memory stays flat when the stream gets 4x longer."""

    def peak(n):
        tracemalloc.start()
        res = extract_features(_long_stream(n), W, "weighted", CONV)
        _, top = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        return top, res

    # both sizes exceed one read chunk, so the buffer is at its steady state
    small, r1 = peak(200_000)
    large, r2 = peak(800_000)
    assert r2.report.events == 800_000 and r2.report.peak_open_intervals <= W.max_open
    assert r2.report.intervals > 3.9 * r1.report.intervals
    # results grow with the interval count; the event buffers must not
    assert large < 1.5 * small


def test_prepare_series_undersamples_per_collection(small_scenario):
    spec, events, truth = small_scenario
    cache = cache_from_result(extract_features(events, W, "weighted", CONV), W, "weighted", CONV, truth, name="a")
    series = prepare_series([cache], SamplingConfig(neg_pos_ratio=2))["a"]
    assert sum(s.malicious for s in series) == 3
    assert sum(not s.malicious for s in series) == 6
    full = prepare_series([cache], SamplingConfig(), do_undersample=False)["a"]
    assert len(full) == len(cache.series())
