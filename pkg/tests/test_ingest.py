import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from botgraph.errors import DuplicateHostError, OrderingError, ParseError, PcapFormatError, TruncationError
from botgraph.ingest import (
    GroundTruth,
    PacketEvent,
    capture_meta,
    read_events,
    read_events_csv,
    read_events_pcap,
    read_ground_truth,
    write_events_csv,
    write_ground_truth,
)
from oracles import arp_frame, count_ipv4_frames, eth_ipv4_frame, ipv6_frame, pcap_bytes


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_csv_line_maps_fields(tmp_path):
    p = _write(tmp_path, "e.csv", "0.0,10.0.0.1,10.0.0.2,60\n")
    assert list(read_events_csv(p)) == [PacketEvent(0.0, "10.0.0.1", "10.0.0.2", 60)]


def test_csv_header_is_optional(tmp_path):
    p = _write(tmp_path, "e.csv", "timestamp,src,dst,size_bytes\n1.5,10.0.0.1,10.0.0.2,60\n")
    assert [e.timestamp for e in read_events_csv(p)] == [1.5]


def test_empty_csv(tmp_path):
    p = _write(tmp_path, "e.csv", "")
    stream = read_events_csv(p)
    assert list(stream) == []
    meta = stream.meta
    assert (meta.duration_s, meta.event_count, meta.host_count) == (0, 0, 0)


def test_non_ipv4_source_reports_line(tmp_path):
    p = _write(tmp_path, "e.csv", "0.0,10.0.0.1,10.0.0.2,60\n5.0,a.b.c.d,10.0.0.2,60\n")
    with pytest.raises(ParseError) as info:
        list(read_events_csv(p))
    assert info.value.line == 2
    assert info.value.exit_code == 2


@pytest.mark.parametrize("row", ["x,10.0.0.1,10.0.0.2,1", "1.0,10.0.0.1,10.0.0.2", "1.0,10.0.0.1,10.0.0.256,1", "-1,10.0.0.1,10.0.0.2,1"])
def test_malformed_rows(tmp_path, row):
    p = _write(tmp_path, "e.csv", row + "\n")
    with pytest.raises(ParseError):
        list(read_events_csv(p))


def test_out_of_order_rejected(tmp_path):
    p = _write(tmp_path, "e.csv", "2.0,10.0.0.1,10.0.0.2,1\n1.0,10.0.0.1,10.0.0.2,1\n")
    with pytest.raises(OrderingError):
        list(read_events_csv(p))


def test_capture_meta_counts_hosts():
    evs = [PacketEvent(0.0, "1.1.1.1", "2.2.2.2"), PacketEvent(3.5, "2.2.2.2", "3.3.3.3")]
    meta = capture_meta(evs)
    assert (meta.duration_s, meta.event_count, meta.host_count) == (3.5, 2, 3)


octet = st.integers(0, 255)
ipv4 = st.tuples(octet, octet, octet, octet).map(lambda t: ".".join(map(str, t)))


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(st.floats(0, 1e6, allow_nan=False), ipv4, ipv4, st.integers(0, 65535)),
        max_size=30,
    )
)
def test_csv_round_trip(tmp_path_factory, rows):
    rows.sort(key=lambda r: r[0])
    events = [PacketEvent(*r) for r in rows]
    p = tmp_path_factory.mktemp("rt") / "e.csv"
    write_events_csv(events, p)
    back = list(read_events_csv(p))
    assert back == events
    assert all(a.timestamp <= b.timestamp for a, b in zip(back, back[1:]))


# ---------------------------------------------------------------------- pcap


def _pcap(tmp_path, records, **kw):
    p = tmp_path / "c.pcap"
    p.write_bytes(pcap_bytes(records, **kw))
    return p


@pytest.mark.parametrize("endian", ["<", ">"])
@pytest.mark.parametrize("nanos", [False, True])
def test_pcap_rebases_timestamps(tmp_path, endian, nanos):
    f = eth_ipv4_frame("10.0.0.1", "10.0.0.2")
    p = _pcap(tmp_path, [(100.0, f), (100.5, f), (101.0, f)], endian=endian, nanos=nanos)
    events = list(read_events(p))
    assert [e.timestamp for e in events] == [0.0, 0.5, 1.0]
    assert events[0].src == "10.0.0.1" and events[0].dst == "10.0.0.2"
    assert events[0].size_bytes == len(f)


def test_pcap_skips_non_ip(tmp_path):
    p = _pcap(tmp_path, [(1.0, arp_frame()), (2.0, eth_ipv4_frame("10.0.0.1", "10.0.0.2"))])
    stream = read_events_pcap(p)
    events = list(stream)
    assert len(events) == 1
    assert stream.skipped_count == 1


def test_pcap_event_count_matches_dump_oracle(tmp_path):
    import random

    rng = random.Random(3)
    records = []
    t = 1000.0
    for _ in range(200):
        t += rng.random()
        kind = rng.random()
        if kind < 0.7:
            frame = eth_ipv4_frame(f"10.0.0.{rng.randrange(1, 9)}", f"10.0.1.{rng.randrange(1, 9)}", rng.randrange(0, 60))
        elif kind < 0.85:
            frame = arp_frame()
        else:
            frame = ipv6_frame()
        records.append((t, frame))
    data = pcap_bytes(records)
    p = tmp_path / "mix.pcap"
    p.write_bytes(data)
    stream = read_events_pcap(p)
    events = list(stream)
    assert len(events) == count_ipv4_frames(data)
    assert stream.skipped_count + len(events) == 200
    assert all(a.timestamp <= b.timestamp for a, b in zip(events, events[1:]))


def test_pcapng_rejected(tmp_path):
    p = tmp_path / "c.pcapng"
    p.write_bytes(struct.pack("<I", 0x0A0D0D0A) + b"\x00" * 28)
    with pytest.raises(PcapFormatError, match="pcap-ng unsupported"):
        list(read_events(p))


def test_pcap_bad_magic(tmp_path):
    p = tmp_path / "c.pcap"
    p.write_bytes(b"\xde\xad\xbe\xef" + b"\x00" * 20)
    with pytest.raises(PcapFormatError):
        list(read_events_pcap(p))


def test_pcap_truncated_record_reports_offset(tmp_path):
    data = pcap_bytes([(1.0, eth_ipv4_frame("10.0.0.1", "10.0.0.2"))] * 2)
    p = tmp_path / "c.pcap"
    p.write_bytes(data[:-5])
    with pytest.raises(TruncationError) as info:
        list(read_events_pcap(p))
    assert info.value.offset == 24 + 16 + 54


def test_pcap_other_linktype(tmp_path):
    p = _pcap(tmp_path, [(1.0, eth_ipv4_frame("10.0.0.1", "10.0.0.2"))], linktype=101)
    with pytest.raises(PcapFormatError, match="link type"):
        list(read_events_pcap(p))


# -------------------------------------------------------------- ground truth


def test_ground_truth_line(tmp_path):
    p = _write(tmp_path, "t.csv", "10.0.0.9,0\n")
    assert read_ground_truth(p).entries == {"10.0.0.9": 0.0}


def test_ground_truth_duplicate(tmp_path):
    p = _write(tmp_path, "t.csv", "10.0.0.9,0\n10.0.0.9,5\n")
    with pytest.raises(DuplicateHostError):
        read_ground_truth(p)


def test_ground_truth_empty(tmp_path):
    p = _write(tmp_path, "t.csv", "")
    truth = read_ground_truth(p)
    assert len(truth) == 0
    assert not truth.is_malicious_at("10.0.0.1", 1e9)


def test_ground_truth_round_trip(tmp_path):
    truth = GroundTruth({"10.0.0.1": 0.0, "10.0.0.2": 412.5})
    p = tmp_path / "t.csv"
    write_ground_truth(truth, p)
    assert read_ground_truth(p).entries == truth.entries
    assert truth.is_malicious_at("10.0.0.2", 412.5)
    assert not truth.is_malicious_at("10.0.0.2", 412.4)
