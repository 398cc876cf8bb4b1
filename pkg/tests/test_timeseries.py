import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from botgraph.errors import ConfigurationError
from botgraph.ingest import GroundTruth
from botgraph.timeseries import (
    NodeTimeSeries,
    SamplingConfig,
    assemble,
    interval_labels,
    slice_windows,
    stack,
    undersample,
    window_starts,
    write_windows_csv,
)

F0 = np.full(10, 0.1)
F2 = np.full(10, 0.9)


def series(host, T, malicious_at=(), group=""):
    labels = np.zeros(T, dtype=bool)
    labels[list(malicious_at)] = True
    seq = np.arange(T * 10, dtype=float).reshape(T, 10)
    return NodeTimeSeries(host, seq, labels, group)


def test_zero_padding():
    per = [{"h": F0}, {"other": F2}, {"h": F2}]
    out = {s.host: s for s in assemble(per)}
    assert np.array_equal(out["h"].sequence, np.stack([F0, np.zeros(10), F2]))
    assert len(out["other"]) == 3


def test_uninfected_host_all_benign():
    s = assemble([{"h": F0}] * 4, GroundTruth({"bot": 0.0}))[0]
    assert not s.labels.any()


def test_interval_start_rule():
    labels = interval_labels("h", GroundTruth({"h": 400.0}), [i * 150.0 for i in range(6)])
    assert labels.tolist() == [False, False, False, True, True, True]


def test_undersample_ratio():
    hosts = [series(f"m{i}", 6, [0]) for i in range(3)] + [series(f"b{i}", 6) for i in range(500)]
    kept = undersample(hosts, SamplingConfig(neg_pos_ratio=10, seed=1))
    assert sum(s.malicious for s in kept) == 3
    assert sum(not s.malicious for s in kept) == 30


def test_undersample_clamps():
    hosts = [series("m", 6, [0])] + [series(f"b{i}", 6) for i in range(5)]
    assert len(undersample(hosts, SamplingConfig())) == 6


def test_undersample_deterministic_and_order_preserving():
    hosts = [series(f"b{i}", 6) for i in range(50)] + [series("m", 6, [1])]
    a = [s.host for s in undersample(hosts, SamplingConfig(seed=3))]
    b = [s.host for s in undersample(hosts, SamplingConfig(seed=3))]
    c = [s.host for s in undersample(hosts, SamplingConfig(seed=4))]
    assert a == b and a != c
    pos = [hosts.index(next(h for h in hosts if h.host == n)) for n in a]
    assert pos == sorted(pos)


def test_undersample_needs_malicious():
    with pytest.raises(ConfigurationError):
        undersample([series("b", 6)], SamplingConfig())


def test_window_starts_stride():
    assert list(window_starts(11, SamplingConfig())) == [0, 3, 6]
    assert list(window_starts(4, SamplingConfig())) == []


def test_zero_host_windows_kept():
    s = NodeTimeSeries("z", np.zeros((8, 10)), np.zeros(8, dtype=bool))
    wins = slice_windows([s], SamplingConfig())
    assert len(wins) == 2
    assert all(not w.label and not w.matrix.any() for w in wins)


def test_any_overlap_label():
    wins = slice_windows([series("h", 11, [4])], SamplingConfig())
    assert [(w.start_interval, w.label) for w in wins] == [(0, True), (3, True), (6, False)]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 30), min_size=1, max_size=8), st.integers(1, 6), st.integers(0, 5))
def test_window_count_formula(lengths, L, overlap):
    overlap = min(overlap, L - 1)
    cfg = SamplingConfig(slice_len=L, slice_overlap=overlap)
    ss = [series(f"h{i}", T) for i, T in enumerate(lengths)]
    wins = slice_windows(ss, cfg)
    expect = sum((T - L) // cfg.stride + 1 for T in lengths if T >= L)
    assert len(wins) == expect
    assert all(w.matrix.shape == (L, 10) for w in wins)
    keys = [(w.host, w.start_interval) for w in wins]
    assert keys == sorted(keys, key=lambda k: (int(k[0][1:]), k[1]))


def test_stack_and_dump(tmp_path):
    wins = slice_windows([series("h", 8, [7])], SamplingConfig())
    X, y = stack(wins)
    assert X.shape == (2, 5, 10) and y.tolist() == [0.0, 1.0]
    p = tmp_path / "w.csv"
    write_windows_csv(wins, p)
    rows = list(csv.reader(open(p)))
    assert rows[0][:4] == ["host", "start_interval", "label", "m00"] and rows[0][-1] == "m49"
    assert float(rows[2][3 + 49]) == X[1].ravel()[49]
