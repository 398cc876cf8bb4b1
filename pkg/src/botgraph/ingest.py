"""Readers that turn raw traffic and label files into ordered packet events.

Two traffic formats are accepted: the canonical ``timestamp,src,dst,size_bytes``
CSV and classic libpcap captures (Ethernet link layer, IPv4 only).  Both
produce the same :class:`PacketEvent` stream so nothing downstream cares
where the data came from.
"""

from __future__ import annotations

import csv
import ipaddress
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, Iterator, NamedTuple, Optional

from .errors import (
    DuplicateHostError,
    OrderingError,
    ParseError,
    PcapFormatError,
    TruncationError,
)


class PacketEvent(NamedTuple):
    timestamp: float
    src: str
    dst: str
    size_bytes: int = 0


@dataclass(frozen=True)
class CaptureMeta:
    duration_s: float
    event_count: int
    host_count: int


@dataclass
class GroundTruth:
    """Infection time per malicious host; every other host is benign."""

    entries: Dict[str, float] = field(default_factory=dict)

    def __contains__(self, host):
        return host in self.entries

    def __len__(self):
        return len(self.entries)

    def is_malicious_at(self, host: str, t: float) -> bool:
        infected = self.entries.get(host)
        return infected is not None and infected <= t

    @property
    def hosts(self):
        return sorted(self.entries)


@lru_cache(maxsize=1 << 16)
def _valid_ipv4(text: str) -> bool:
    try:
        ipaddress.IPv4Address(text)
    except ValueError:
        return False
    return True


class EventStream:
    """Single-pass iterator over events that enforces timestamp order.

    Counters (``event_count``, hosts seen, last timestamp) are filled in as the
    stream is consumed; :attr:`meta` is only meaningful once it is exhausted.
    """

    def __init__(self, source: Iterable[PacketEvent]):
        self._source = iter(source)
        self.event_count = 0
        self.max_timestamp = 0.0
        self._hosts = set()

    def __iter__(self) -> Iterator[PacketEvent]:
        return self

    def __next__(self) -> PacketEvent:
        ev = next(self._source)
        if self.event_count and ev.timestamp < self.max_timestamp:
            raise OrderingError(
                f"timestamp regression: {ev.timestamp} after {self.max_timestamp}"
            )
        self.event_count += 1
        self.max_timestamp = ev.timestamp
        self._hosts.add(ev.src)
        self._hosts.add(ev.dst)
        return ev

    @property
    def meta(self) -> CaptureMeta:
        return CaptureMeta(self.max_timestamp, self.event_count, len(self._hosts))


def capture_meta(events: Iterable[PacketEvent]) -> CaptureMeta:
    stream = events if isinstance(events, EventStream) else EventStream(events)
    for _ in stream:
        pass
    return stream.meta


# --------------------------------------------------------------------------- CSV


def _parse_csv_rows(path: Path) -> Iterator[PacketEvent]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        last_t = None
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and row[0].strip().lower() == "timestamp":
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", lineno, path)
            ts_text, src, dst, size_text = (c.strip() for c in row)
            try:
                ts = float(ts_text)
                size = int(size_text)
            except ValueError as exc:
                raise ParseError(str(exc), lineno, path) from None
            if not ts >= 0.0 or ts == float("inf"):
                raise ParseError(f"bad timestamp {ts_text!r}", lineno, path)
            if size < 0:
                raise ParseError(f"negative size {size}", lineno, path)
            if not _valid_ipv4(src):
                raise ParseError(f"source is not an IPv4 address: {src!r}", lineno, path)
            if not _valid_ipv4(dst):
                raise ParseError(f"destination is not an IPv4 address: {dst!r}", lineno, path)
            if last_t is not None and ts < last_t:
                raise OrderingError(f"{path}:{lineno}: timestamp {ts} precedes {last_t}")
            last_t = ts
            yield PacketEvent(ts, src, dst, size)


def read_events_csv(path) -> EventStream:
    """Stream events from a ``timestamp,src,dst,size_bytes`` file.

    The header line is optional.  Input must already be time-ordered; a
    regression raises :class:`OrderingError` rather than being re-sorted.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError("no such file", path=path)
    return EventStream(_parse_csv_rows(path))


def write_events_csv(events: Iterable[PacketEvent], path, header: bool = True) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write("timestamp,src,dst,size_bytes\n")
        for ev in events:
            fh.write(f"{ev.timestamp!r},{ev.src},{ev.dst},{int(ev.size_bytes)}\n")
            n += 1
    return n


# -------------------------------------------------------------------------- pcap

PCAP_MAGIC_US = 0xA1B2C3D4
PCAP_MAGIC_NS = 0xA1B23C4D
PCAPNG_MAGIC = 0x0A0D0D0A
LINKTYPE_ETHERNET = 1
ETHERTYPE_IPV4 = 0x0800

_GLOBAL_HEADER_LEN = 24
_RECORD_HEADER_LEN = 16


class PcapEventStream(EventStream):
    """Event stream over a classic pcap file.

    ``skipped_count`` counts frames that produced no event (ARP, IPv6, VLAN
    tagged, runt frames).
    """

    def __init__(self, path):
        self.path = Path(path)
        self.skipped_count = 0
        self.frame_count = 0
        super().__init__(self._frames())

    def _frames(self) -> Iterator[PacketEvent]:
        with open(self.path, "rb") as fh:
            head = fh.read(_GLOBAL_HEADER_LEN)
            if len(head) < 4:
                raise PcapFormatError(f"{self.path}: too short for a pcap header")
            (magic_le,) = struct.unpack("<I", head[:4])
            if magic_le == PCAPNG_MAGIC:
                raise PcapFormatError(f"{self.path}: pcap-ng unsupported")
            if magic_le in (PCAP_MAGIC_US, PCAP_MAGIC_NS):
                endian = "<"
            else:
                (magic_be,) = struct.unpack(">I", head[:4])
                if magic_be not in (PCAP_MAGIC_US, PCAP_MAGIC_NS):
                    raise PcapFormatError(f"{self.path}: bad magic 0x{magic_le:08x}")
                endian = ">"
            magic = magic_le if endian == "<" else magic_be
            frac_scale = 1e-9 if magic == PCAP_MAGIC_NS else 1e-6
            if len(head) < _GLOBAL_HEADER_LEN:
                raise TruncationError("truncated global header", len(head))
            linktype = struct.unpack(endian + "I", head[20:24])[0] & 0x0FFFFFFF
            if linktype != LINKTYPE_ETHERNET:
                raise PcapFormatError(f"{self.path}: unsupported link type {linktype}")

            rec_fmt = struct.Struct(endian + "IIII")
            offset = _GLOBAL_HEADER_LEN
            t0: Optional[float] = None
            while True:
                rec = fh.read(_RECORD_HEADER_LEN)
                if not rec:
                    return
                if len(rec) < _RECORD_HEADER_LEN:
                    raise TruncationError("truncated record header", offset)
                ts_sec, ts_frac, incl_len, orig_len = rec_fmt.unpack(rec)
                data = fh.read(incl_len)
                if len(data) < incl_len:
                    raise TruncationError("truncated packet data", offset)
                offset += _RECORD_HEADER_LEN + incl_len
                self.frame_count += 1

                t = ts_sec + ts_frac * frac_scale
                if t0 is None:
                    t0 = t
                event = _ipv4_event(data, t - t0, orig_len)
                if event is None:
                    self.skipped_count += 1
                    continue
                yield event


def _ipv4_event(frame: bytes, t: float, size: int) -> Optional[PacketEvent]:
    if len(frame) < 14 + 20:
        return None
    if struct.unpack("!H", frame[12:14])[0] != ETHERTYPE_IPV4:
        return None
    if frame[14] >> 4 != 4:
        return None
    src = ".".join(str(b) for b in frame[26:30])
    dst = ".".join(str(b) for b in frame[30:34])
    return PacketEvent(max(t, 0.0), src, dst, int(size))


def read_events_pcap(path) -> PcapEventStream:
    path = Path(path)
    if not path.exists():
        raise ParseError("no such file", path=path)
    return PcapEventStream(path)


def read_events(path) -> EventStream:
    """Dispatch on content: pcap magic bytes, else the CSV format."""
    path = Path(path)
    if not path.exists():
        raise ParseError("no such file", path=path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if len(head) == 4:
        le = struct.unpack("<I", head)[0]
        be = struct.unpack(">I", head)[0]
        if le == PCAPNG_MAGIC or {le, be} & {PCAP_MAGIC_US, PCAP_MAGIC_NS}:
            return read_events_pcap(path)
    return read_events_csv(path)


# ------------------------------------------------------------------ ground truth


def read_ground_truth(path) -> GroundTruth:
    path = Path(path)
    if not path.exists():
        raise ParseError("no such file", path=path)
    entries: Dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and row[0].strip().lower() == "host":
                continue
            if len(row) != 2:
                raise ParseError(f"expected host,infection_time_s; got {len(row)} fields", lineno, path)
            host = row[0].strip()
            try:
                t = float(row[1])
            except ValueError:
                raise ParseError(f"bad infection time {row[1]!r}", lineno, path) from None
            if not t >= 0.0:
                raise ParseError(f"negative infection time {t}", lineno, path)
            if not host:
                raise ParseError("empty host", lineno, path)
            if host in entries:
                raise DuplicateHostError(f"duplicate host {host}", lineno, path)
            entries[host] = t
    return GroundTruth(entries)


def write_ground_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for host in truth.hosts:
            fh.write(f"{host},{truth.entries[host]!r}\n")
