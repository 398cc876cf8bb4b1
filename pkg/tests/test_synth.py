import numpy as np
import pytest

from botgraph.errors import ConfigurationError, ParseError
from botgraph.graphfeat import build_graph, degree_features
from botgraph.ingest import read_events_csv, write_events_csv
from botgraph.synth import PATTERNS, ScenarioSpec, default_suite, format_spec, generate, parse_spec_text
from botgraph.windowing import WindowConfig, slice_events


def test_no_bots_no_truth():
    events, truth = generate(ScenarioSpec(duration_s=900, benign_hosts=5, bot_hosts=0))
    assert len(truth) == 0 and events


def test_same_seed_identical():
    spec = ScenarioSpec(duration_s=1200, benign_hosts=8, bot_hosts=2, pattern="cnc", seed=4)
    assert generate(spec) == generate(spec)
    other = generate(ScenarioSpec(duration_s=1200, benign_hosts=8, bot_hosts=2, pattern="cnc", seed=5))
    assert other[0] != generate(spec)[0]


def test_round_trip_through_ingest(tmp_path, small_scenario):
    _, events, _ = small_scenario
    p = tmp_path / "e.csv"
    write_events_csv(events, p)
    assert list(read_events_csv(p)) == events


def test_p2p_bots_form_clique_when_active(small_scenario):
    spec, events, truth = small_scenario
    bots = set(truth.hosts)
    cliques = 0
    for iv in slice_events(events, WindowConfig(), spec.duration_s):
        pairs = {(e.src, e.dst) for e in iv.events if e.src in bots and e.dst in bots}
        if len(pairs) == len(bots) * (len(bots) - 1):
            cliques += 1
    assert cliques >= 3


def test_mid_capture_infection():
    spec = ScenarioSpec(duration_s=1800, benign_hosts=5, bot_hosts=2, infection_time_s=600.0, seed=2)
    _, truth = generate(spec)
    assert all(truth.entries[h] == 600.0 for h in truth.hosts)


@pytest.mark.parametrize("pattern", PATTERNS)
def test_bots_out_reach_benign_median(pattern):
    spec = next(s for s in default_suite() if s.pattern == pattern)
    events, truth = generate(spec)
    per_host = {}
    for iv in slice_events(events, WindowConfig(), spec.duration_s):
        g = build_graph(iv, "weighted")
        d = degree_features(g)
        for i, host in enumerate(g.nodes):
            per_host.setdefault(host, []).append(d[i, 2])
    means = {h: float(np.mean(v)) for h, v in per_host.items()}
    bot_mean = np.mean([means[h] for h in truth.hosts])
    benign_median = np.median([m for h, m in means.items() if h not in truth])
    assert bot_mean > benign_median


def test_spec_text_round_trip():
    spec = ScenarioSpec(pattern="ddos", bot_hosts=3, noise_rate=1.5, name="x")
    assert parse_spec_text(format_spec(spec)) == spec


def test_spec_errors():
    with pytest.raises(ParseError):
        parse_spec_text("pattern=p2p\nbogus=1\n")
    with pytest.raises(ConfigurationError):
        parse_spec_text("pattern=worm\n")
