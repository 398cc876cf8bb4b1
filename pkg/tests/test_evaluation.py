from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scenario_windows, toy_windows
from oracles import auroc_u_statistic
from botgraph.errors import ConfigurationError, SplitError
from botgraph.evaluation import (
    ConfusionCounts,
    SplitConfig,
    evaluate_modes,
    host_classes,
    metrics,
    roc,
    run_cross,
    run_within,
    split,
)
from botgraph.model import TrainConfig
from botgraph.synth import ScenarioSpec

FAST = TrainConfig(epochs=40, seed=0)


def hosts_windows(n_mal, n_ben, per_host=2):
    return toy_windows("g", n_mal, n_ben, per_host)


def test_split_worked_example():
    tr, te = split(hosts_windows(10, 100), SplitConfig(0.7, seed=0))
    ctr, cte = host_classes(tr), host_classes(te)
    assert sum(ctr.values()) == 7 and len(ctr) - sum(ctr.values()) == 70
    assert sum(cte.values()) == 3 and len(cte) - sum(cte.values()) == 30


def test_split_floor():
    tr, _ = split(hosts_windows(3, 10), SplitConfig(0.7))
    assert sum(host_classes(tr).values()) == 2


def test_split_deterministic_and_host_disjoint():
    s = hosts_windows(6, 30, per_host=4)
    a, b = split(s, SplitConfig(seed=5)), split(s, SplitConfig(seed=5))
    assert [w.key for w in a[0]] == [w.key for w in b[0]]
    assert not {w.key for w in a[0]} & {w.key for w in a[1]}
    assert len(a[0]) + len(a[1]) == len(s)


def test_split_needs_two_hosts_per_class():
    with pytest.raises(SplitError):
        split(hosts_windows(1, 10))


def test_metrics_worked_example():
    m = metrics(ConfusionCounts(tp=946, tn=963, fp=37, fn=54))
    assert m.tpr == Fraction(946, 1000) and m.tnr == Fraction(963, 1000)
    assert m.accuracy == Fraction(1909, 2000) and float(m.accuracy) == 0.9545


def test_precision_absent_without_positives():
    m = metrics(ConfusionCounts(tp=0, tn=5, fp=0, fn=3))
    assert m.precision is None and m.f_measure is None


def test_perfect_classifier():
    m = metrics(ConfusionCounts(tp=4, tn=6, fp=0, fn=0))
    assert (m.accuracy, m.tpr, m.tnr, m.fpr, m.fnr, m.precision) == (1, 1, 1, 0, 0, 1)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_metric_identities_exact(tp, tn, fp, fn):
    m = metrics(ConfusionCounts(tp, tn, fp, fn))
    if tp + fn:
        assert m.tpr + m.fnr == 1
    if tn + fp:
        assert m.tnr + m.fpr == 1


def test_roc_perfect_and_tied():
    assert roc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]).auroc == 1.0
    assert roc([0.5] * 6, [1, 0, 1, 0, 0, 1]).auroc == 0.5


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.booleans()), min_size=2, max_size=60))
def test_roc_equals_u_statistic(pairs):
    scores = [s / 20 for s, _ in pairs]
    labels = [y for _, y in pairs]
    if all(labels) or not any(labels):
        return
    c = roc(scores, labels)
    assert abs(c.auroc - float(auroc_u_statistic(scores, labels))) <= 1e-12
    # monotone path from (0, 0) to (1, 1)
    assert c.fpr[0] == 0 and c.tpr[0] == 0 and c.fpr[-1] == 1 and c.tpr[-1] == 1
    assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=4, max_size=40), st.randoms())
def test_roc_invariant_under_monotone_transform(scores, rnd):
    # integer scores keep the transform strictly monotone in floating point
    labels = [rnd.random() < 0.5 for _ in scores]
    labels[0], labels[1] = True, False
    a = roc(scores, labels).auroc
    b = roc([x**3 + 5 * x for x in scores], labels).auroc
    assert a == b


def test_roc_single_class_error():
    with pytest.raises(ConfigurationError):
        roc([0.1, 0.2], [0, 0])


def test_youden_threshold():
    c = roc([0.9, 0.7, 0.6, 0.3, 0.2], [1, 1, 0, 1, 0])
    t, k = c.youden()
    assert t == 0.7 and (c.tpr[k] - c.fpr[k]) == pytest.approx(2 / 3)


# ---------------------------------------------------------------- modes


def test_cross_same_collection_flags_leakage():
    a = toy_windows("A", gap=0.15, seed=3)
    res, _ = run_cross("A", a, "A", a, FAST)
    assert any("leakage" in w for w in res.warnings)
    within, _ = run_within("A", a, FAST, SplitConfig())
    assert res.auroc >= within.auroc


def test_cross_matrix_shape():
    data = {f"s{i}": toy_windows(f"s{i}", seed=i, per_host=2) for i in range(5)}
    rep = evaluate_modes(data, "cross", TrainConfig(epochs=2), SplitConfig())
    assert rep.matrix.shape == (5, 5)
    assert rep.row_averages().shape == (5,)
    assert len(rep.results) == 25
    # matrix is indexed [test, train]
    r = next(x for x in rep.results if x.name == "cross:s1->s3")
    assert rep.matrix[3, 1] == r.auroc


def test_cross_parallel_matches_serial():
    data = {f"s{i}": toy_windows(f"s{i}", seed=i, per_host=2) for i in range(3)}
    a = evaluate_modes(data, "cross", TrainConfig(epochs=3), SplitConfig(), workers=1)
    b = evaluate_modes(data, "cross", TrainConfig(epochs=3), SplitConfig(), workers=3)
    assert np.array_equal(a.matrix, b.matrix, equal_nan=True)
    assert [r.scores.tolist() for r in a.results] == [r.scores.tolist() for r in b.results]


@pytest.mark.slow
def test_combined_on_synth_scenarios_is_perfect():
    data = {}
    for pattern, seed in (("p2p", 1), ("cnc", 2)):
        spec = ScenarioSpec(duration_s=3600, benign_hosts=30, bot_hosts=4, pattern=pattern, seed=seed, name=pattern)
        data[pattern] = scenario_windows(spec)
    rep = evaluate_modes(data, "combined", TrainConfig(epochs=60), SplitConfig())
    res = rep.results[0]
    assert float(metrics(res.counts).accuracy) == 1.0
    assert res.auroc == 1.0
