"""Seeded synthetic captures with labeled bots.

Background traffic is sparse request/response chatter between internal hosts
and a few popular servers.  Bots take part in the background like any other
host and additionally run a botnet pattern during the active part of every
period:

``p2p``   bots gossip with each other (a clique in each interval graph) and
          probe fresh external peers;
``cnc``   bots beacon one controller, which answers, and scan external hosts;
``ddos``  bots check in with a controller, then flood a single victim.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import ConfigurationError, ParseError
from .ingest import GroundTruth, PacketEvent

PATTERNS = ("p2p", "cnc", "ddos")


@dataclass(frozen=True)
class ScenarioSpec:
    duration_s: float = 7200.0
    benign_hosts: int = 45
    bot_hosts: int = 5
    pattern: str = "p2p"
    period_s: float = 600.0
    dormancy_duty: float = 0.5
    noise_rate: float = 2.0
    seed: int = 0
    bot_rate: float = 0.25
    infection_time_s: float = 0.0
    name: str = ""

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ConfigurationError("duration_s must be positive")
        if self.benign_hosts < 1:
            raise ConfigurationError("benign_hosts must be a positive integer")
        if self.bot_hosts < 0:
            raise ConfigurationError("bot_hosts must be non-negative")
        if self.pattern not in PATTERNS:
            raise ConfigurationError(f"pattern must be one of {PATTERNS}, got {self.pattern!r}")
        if not self.period_s > 0:
            raise ConfigurationError("period_s must be positive")
        if not 0.0 <= self.dormancy_duty <= 1.0:
            raise ConfigurationError("dormancy_duty must lie in [0, 1]")
        if self.noise_rate < 0 or self.bot_rate < 0:
            raise ConfigurationError("rates must be non-negative")
        if self.infection_time_s < 0:
            raise ConfigurationError("infection_time_s must be non-negative")

    @property
    def label(self) -> str:
        return self.name or f"{self.pattern}-s{self.seed}"


def default_suite(seed: int = 0, **overrides) -> List[ScenarioSpec]:
    """One scenario per pattern: 45 benign + 5 bots over two hours."""
    return [
        replace(ScenarioSpec(pattern=p, seed=seed + k, name=f"{p}"), **overrides)
        for k, p in enumerate(PATTERNS)
    ]


def _hosts(spec: ScenarioSpec):
    internal = [f"10.0.{i // 250}.{i % 250 + 1}" for i in range(spec.benign_hosts + spec.bot_hosts)]
    return internal


def _active_mask(t: np.ndarray, spec: ScenarioSpec, phase: float) -> np.ndarray:
    active_len = (1.0 - spec.dormancy_duty) * spec.period_s
    return np.mod(t - phase, spec.period_s) < active_len


def generate(spec: ScenarioSpec) -> Tuple[List[PacketEvent], GroundTruth]:
    """Deterministic event list (time-ordered) and ground truth for ``spec``."""
    rng = np.random.default_rng(spec.seed)
    internal = _hosts(spec)
    n_int = len(internal)
    n_servers = max(2, spec.benign_hosts // 8)
    servers = [f"192.0.2.{i + 1}" for i in range(n_servers)]
    names: List[str] = internal + servers
    bot_idx = np.sort(rng.choice(n_int, size=spec.bot_hosts, replace=False)) if spec.bot_hosts else np.zeros(0, int)
    extern_next = [0]

    def external(count):
        start = extern_next[0]
        extern_next[0] += count
        for k in range(start, start + count):
            names.append(f"198.51.{100 + k // 250}.{k % 250 + 1}")
        return np.arange(len(names) - count, len(names))

    ts, ss, ds = [], [], []

    def add(t, s, d):
        ts.append(np.asarray(t, dtype=np.float64))
        ss.append(np.asarray(s, dtype=np.int64))
        ds.append(np.asarray(d, dtype=np.int64))

    def with_replies(t, s, d, p_reply):
        add(t, s, d)
        back = rng.random(t.size) < p_reply
        add(t[back] + rng.uniform(0.001, 0.2, back.sum()), d[back], s[back])

    # background chatter
    n_bg = rng.poisson(spec.noise_rate * spec.duration_s)
    t = rng.uniform(0.0, spec.duration_s, n_bg)
    s = rng.integers(0, n_int, n_bg)
    popularity = 1.0 / np.arange(1, n_servers + 1)
    to_server = rng.random(n_bg) < 0.6
    d = np.where(
        to_server,
        n_int + rng.choice(n_servers, size=n_bg, p=popularity / popularity.sum()),
        rng.integers(0, n_int, n_bg),
    )
    keep = s != d
    with_replies(t[keep], s[keep], d[keep], 0.8)

    infected_from = spec.infection_time_s
    if spec.bot_hosts:
        phase = rng.uniform(0.0, spec.period_s)
        per_bot = spec.bot_rate * spec.duration_s
        if spec.pattern == "p2p":
            n = rng.poisson(per_bot * spec.bot_hosts)
            t = rng.uniform(0, spec.duration_s, n)
            src = bot_idx[rng.integers(0, spec.bot_hosts, n)]
            if spec.bot_hosts > 1:
                dst = bot_idx[rng.integers(0, spec.bot_hosts, n)]
                ok = (src != dst) & _active_mask(t, spec, phase) & (t >= infected_from)
                with_replies(t[ok], src[ok], dst[ok], 0.9)
            peers = external(40)
            n = rng.poisson(0.3 * per_bot * spec.bot_hosts)
            t = rng.uniform(0, spec.duration_s, n)
            src = bot_idx[rng.integers(0, spec.bot_hosts, n)]
            dst = peers[rng.integers(0, peers.size, n)]
            ok = _active_mask(t, spec, phase) & (t >= infected_from)
            with_replies(t[ok], src[ok], dst[ok], 0.5)
        else:
            controller = external(1)[0]
            beacon_gap = 30.0 if spec.pattern == "cnc" else 60.0
            for b in bot_idx:
                start = max(infected_from, 0.0) + rng.uniform(0, beacon_gap)
                tb = np.arange(start, spec.duration_s, beacon_gap)
                tb = tb[_active_mask(tb, spec, phase)]
                with_replies(tb, np.full(tb.size, b), np.full(tb.size, controller), 1.0)
            n = rng.poisson(per_bot * spec.bot_hosts)
            t = rng.uniform(0, spec.duration_s, n)
            src = bot_idx[rng.integers(0, spec.bot_hosts, n)]
            if spec.pattern == "cnc":
                targets = external(200)
                dst = targets[rng.integers(0, targets.size, n)]
                p_reply = 0.2
            else:
                victim = external(1)[0]
                dst = np.full(n, victim)
                p_reply = 0.1
                t = np.concatenate([t, rng.uniform(0, spec.duration_s, 3 * n)])
                src = np.concatenate([src, bot_idx[rng.integers(0, spec.bot_hosts, 3 * n)]])
                dst = np.full(t.size, victim)
            ok = _active_mask(t, spec, phase) & (t >= infected_from)
            with_replies(t[ok], src[ok], dst[ok], p_reply)

    t_all = np.round(np.concatenate(ts), 6)
    s_all = np.concatenate(ss)
    d_all = np.concatenate(ds)
    inside = (t_all >= 0.0) & (t_all < spec.duration_s)
    t_all, s_all, d_all = t_all[inside], s_all[inside], d_all[inside]
    order = np.argsort(t_all, kind="stable")
    sizes = rng.integers(60, 1500, order.size)
    t_list = t_all[order].tolist()
    s_list = s_all[order].tolist()
    d_list = d_all[order].tolist()
    z_list = sizes.tolist()
    events = [PacketEvent(t_list[k], names[s_list[k]], names[d_list[k]], z_list[k]) for k in range(order.size)]
    truth = GroundTruth({internal[b]: float(spec.infection_time_s) for b in bot_idx.tolist()})
    return events, truth


# --------------------------------------------------------------- spec files

_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioSpec)}


def parse_spec_text(text: str, path=None) -> ScenarioSpec:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    kwargs = {}
    defaults = ScenarioSpec()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", lineno, path)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ParseError(f"unknown key {key!r}", lineno, path)
        kind = type(getattr(defaults, key))
        try:
            kwargs[key] = kind(value) if kind is not int else int(value, 0)
        except ValueError:
            raise ParseError(f"bad value for {key}: {value!r}", lineno, path) from None
    return ScenarioSpec(**kwargs)


def read_spec(path) -> ScenarioSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ParseError("no such file", path=path) from None
    return parse_spec_text(text, path)


def format_spec(spec: ScenarioSpec) -> str:
    return "".join(f"{k}={v}\n" for k, v in asdict(spec).items())
