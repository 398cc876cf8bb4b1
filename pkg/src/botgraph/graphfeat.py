"""Per-interval communication graphs and the ten per-node graph features.

Nodes are hosts, edges are packets.  A graph is held in one of two forms:

* ``multigraph`` -- one directed edge per packet (weight 1 each);
* ``weighted``  -- duplicate (src, dst) pairs condensed to one edge whose
  weight is the packet count.

Spectral features (PageRank, eigenvector, authority, hub) treat multiplicity
as edge weight; path-based features (betweenness, clustering, neighbor counts)
use the simple digraph underneath.  Both forms therefore yield the same
features up to floating-point summation order.
"""

from __future__ import annotations

import time
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, ConvergenceError
from .ingest import PacketEvent

FEATURE_NAMES = (
    "out_degree",
    "in_degree",
    "out_neighbors",
    "in_neighbors",
    "pagerank",
    "betweenness",
    "eigenvector",
    "authority",
    "hub",
    "clustering",
)
N_FEATURES = len(FEATURE_NAMES)
NORM_LOW = 0.05
NORM_HIGH = 0.95
# spreads below this (relative to magnitude) are rounding noise, not signal
CONSTANT_RTOL = 1e-10

MODES = ("multigraph", "weighted")
_MODE_ALIASES = {"multi": "multigraph", "multigraph": "multigraph", "weighted": "weighted"}


def canonical_mode(mode: str) -> str:
    try:
        return _MODE_ALIASES[mode]
    except KeyError:
        raise ConfigurationError(f"unknown graph mode {mode!r}") from None


@dataclass(frozen=True)
class ConvergenceConfig:
    epsilon: float = 1e-6
    max_iters: int = 10000
    damping: float = 0.85

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be a positive integer")
        if not 0.0 < self.damping < 1.0:
            raise ConfigurationError("damping must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class IntervalGraph:
    """Directed graph for one interval.

    ``src``/``dst`` index into ``nodes``; ``weight`` is all ones in multigraph
    mode.  Node order is first appearance in the interval, which keeps every
    computation independent of how hosts happen to be named.  Nodes are host
    names, or integer host ids when built inside the extraction workers.
    """

    nodes: Tuple
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    mode: str

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def edges(self):
        """Packet list (multigraph) or ``{(src, dst): count}`` (weighted)."""
        names = self.nodes
        if self.mode == "multigraph":
            return [(names[s], names[d]) for s, d in zip(self.src.tolist(), self.dst.tolist())]
        return {
            (names[s], names[d]): int(w)
            for s, d, w in zip(self.src.tolist(), self.dst.tolist(), self.weight.tolist())
        }

    def total_weight(self) -> float:
        return float(self.weight.sum())

    def simple_edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Distinct (src, dst) pairs, sorted by (src, dst)."""
        if self.mode == "weighted":
            return self.src, self.dst
        if self.src.size == 0:
            return self.src, self.dst
        keys = np.unique(self.src.astype(np.int64) * self.n + self.dst)
        return (keys // self.n).astype(np.int64), (keys % self.n).astype(np.int64)

    def adjacency(self) -> Tuple[List[List[int]], List[List[int]]]:
        """Successor and predecessor lists of the simple digraph."""
        s, d = self.simple_edges()
        succ: List[List[int]] = [[] for _ in range(self.n)]
        pred: List[List[int]] = [[] for _ in range(self.n)]
        for u, v in zip(s.tolist(), d.tolist()):
            succ[u].append(v)
            pred[v].append(u)
        return succ, pred


def _from_index_arrays(nodes, src, dst, mode) -> IntervalGraph:
    mode = canonical_mode(mode)
    n = len(nodes)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    if mode == "weighted" and src.size:
        keys, counts = np.unique(src * n + dst, return_counts=True)
        src, dst = keys // n, keys % n
        weight = counts.astype(np.float64)
    else:
        weight = np.ones(src.size, dtype=np.float64)
    return IntervalGraph(tuple(nodes), src, dst, weight, mode)


def encode_events(events: Iterable[PacketEvent]) -> Tuple[List[str], np.ndarray, np.ndarray]:
    """Intern hosts in first-appearance order; return (hosts, src_idx, dst_idx)."""
    index: Dict[str, int] = {}
    src: List[int] = []
    dst: List[int] = []
    setdef = index.setdefault
    for ev in events:
        src.append(setdef(ev.src, len(index)))
        dst.append(setdef(ev.dst, len(index)))
    hosts = list(index)
    return hosts, np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)


def build_graph(interval_or_events, mode: str = "multigraph") -> IntervalGraph:
    """Graph with one node per endpoint; self-loop packets are dropped.

    A host whose only traffic in the interval is to itself is kept as an
    isolated node.
    """
    events = getattr(interval_or_events, "events", interval_or_events)
    hosts, src, dst = encode_events(events)
    return _from_index_arrays(hosts, src, dst, mode)


def graph_from_edges(edges, mode: str = "multigraph", nodes: Optional[Sequence[str]] = None) -> IntervalGraph:
    """Convenience constructor from ``(src, dst)`` pairs (repeats allowed)."""
    index: Dict[str, int] = {}
    for node in nodes or ():
        index.setdefault(node, len(index))
    s, d = [], []
    for a, b in edges:
        s.append(index.setdefault(a, len(index)))
        d.append(index.setdefault(b, len(index)))
    return _from_index_arrays(list(index), s, d, mode)


# ---------------------------------------------------------------- degree family


def degree_features(g: IntervalGraph) -> np.ndarray:
    """Columns: out_degree, in_degree, out_neighbors, in_neighbors.

    Degrees count packets (edge weight); neighbor counts are distinct peers.
    """
    n = g.n
    out = np.zeros((n, 4))
    if n == 0:
        return out
    out[:, 0] = np.bincount(g.src, weights=g.weight, minlength=n)
    out[:, 1] = np.bincount(g.dst, weights=g.weight, minlength=n)
    s, d = g.simple_edges()
    out[:, 2] = np.bincount(s, minlength=n)
    out[:, 3] = np.bincount(d, minlength=n)
    return out


# -------------------------------------------------------------------- spectral


def pagerank(g: IntervalGraph, cfg: ConvergenceConfig = ConvergenceConfig()) -> np.ndarray:
    """Damped PageRank with uniform teleport and uniform dangling redistribution.

    Iterates until the L1 change drops below ``cfg.epsilon``.
    """
    n = g.n
    if n == 0:
        raise ConfigurationError("pagerank of an empty graph")
    d = cfg.damping
    out_w = np.bincount(g.src, weights=g.weight, minlength=n)
    dangling = out_w == 0
    share = g.weight / out_w[g.src] if g.src.size else g.weight
    x = np.full(n, 1.0 / n)
    residual = np.inf
    for _ in range(cfg.max_iters):
        flow = np.bincount(g.dst, weights=x[g.src] * share, minlength=n)
        lost = d * x[dangling].sum() + (1.0 - d)
        x_new = d * flow + lost / n
        residual = np.abs(x_new - x).sum()
        x = x_new
        if residual < cfg.epsilon:
            return x
    raise ConvergenceError(
        f"pagerank did not converge in {cfg.max_iters} iterations (residual {residual:.3g})",
        residual=residual,
    )


def has_cycle(g: IntervalGraph) -> bool:
    """True iff the simple digraph (self-loops excluded) contains a directed cycle."""
    succ, pred = g.adjacency()
    indeg = [len(p) for p in pred]
    stack = [v for v in range(g.n) if indeg[v] == 0]
    seen = 0
    while stack:
        u = stack.pop()
        seen += 1
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                stack.append(v)
    return seen < g.n


def _unit(x: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.dot(x, x))
    return x / norm if norm > 0 else x


@dataclass(frozen=True)
class SpectralResult:
    eigenvector: np.ndarray
    authority: np.ndarray
    hub: np.ndarray
    eigenvector_degenerate: bool = False
    hits_degenerate: bool = False


def eigenvector_centrality(g: IntervalGraph, cfg: ConvergenceConfig = ConvergenceConfig()):
    """Return ``(scores, degenerate)``.

    Scores follow incoming edges, ``x_v <- sum_{u->v} w_uv x_u``.  Without a
    directed cycle the adjacency operator is nilpotent, the iterate collapses
    to zero, and an all-zero vector is returned with ``degenerate=True``.
    Otherwise the iteration runs on ``I + A`` (same dominant eigenvector, no
    oscillation on periodic components) until the L2 change is below epsilon.
    """
    n = g.n
    if n == 0:
        raise ConfigurationError("eigenvector centrality of an empty graph")
    if g.src.size == 0 or not has_cycle(g):
        return np.zeros(n), True
    x = np.full(n, 1.0 / np.sqrt(n))
    residual = np.inf
    for _ in range(cfg.max_iters):
        y = x + np.bincount(g.dst, weights=x[g.src] * g.weight, minlength=n)
        y = _unit(y)
        residual = np.sqrt(np.dot(y - x, y - x))
        x = y
        if residual < cfg.epsilon:
            return x, False
    raise ConvergenceError(
        f"eigenvector centrality did not converge in {cfg.max_iters} iterations "
        f"(residual {residual:.3g})",
        residual=residual,
    )


def hits(g: IntervalGraph, cfg: ConvergenceConfig = ConvergenceConfig()):
    """Return ``(authority, hub, degenerate)``, both unit-norm.

    ``hub_u = sum_{u->v} w a_v`` and ``auth_v = sum_{u->v} w hub_u``,
    alternated from a uniform start until both L2 changes are below epsilon.
    """
    n = g.n
    if n == 0:
        raise ConfigurationError("HITS of an empty graph")
    if g.src.size == 0:
        return np.zeros(n), np.zeros(n), True
    a = np.full(n, 1.0 / np.sqrt(n))
    h = np.zeros(n)
    residual = np.inf
    for _ in range(cfg.max_iters):
        h_new = _unit(np.bincount(g.src, weights=a[g.dst] * g.weight, minlength=n))
        a_new = _unit(np.bincount(g.dst, weights=h_new[g.src] * g.weight, minlength=n))
        da, dh = a_new - a, h_new - h
        residual = max(np.sqrt(np.dot(da, da)), np.sqrt(np.dot(dh, dh)))
        a, h = a_new, h_new
        if residual < cfg.epsilon:
            return a, h, False
    raise ConvergenceError(
        f"HITS did not converge in {cfg.max_iters} iterations (residual {residual:.3g})",
        residual=residual,
    )


def eigenvector_hits(g: IntervalGraph, cfg: ConvergenceConfig = ConvergenceConfig()) -> SpectralResult:
    ev, ev_flag = eigenvector_centrality(g, cfg)
    auth, hub, h_flag = hits(g, cfg)
    return SpectralResult(ev, auth, hub, ev_flag, h_flag)


# ---------------------------------------------------------------- path-based


def betweenness(g: IntervalGraph) -> np.ndarray:
    """Brandes betweenness on the unweighted simple digraph.

    Normalized by ``(V-1)(V-2)``; graphs with fewer than three nodes score 0.
    """
    n = g.n
    cb = [0.0] * n
    if n < 3:
        return np.zeros(n)
    succ, _ = g.adjacency()
    for s in range(n):
        order = []
        preds: List[List[int]] = [[] for _ in range(n)]
        sigma = [0] * n
        dist = [-1] * n
        sigma[s] = 1
        dist[s] = 0
        frontier = [s]
        while frontier:
            nxt = []
            for v in frontier:
                order.append(v)
                dv = dist[v] + 1
                sv = sigma[v]
                for w in succ[v]:
                    if dist[w] < 0:
                        dist[w] = dv
                        nxt.append(w)
                    if dist[w] == dv:
                        sigma[w] += sv
                        preds[w].append(v)
            frontier = nxt
        delta = [0.0] * n
        for w in reversed(order):
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                cb[w] += delta[w]
    return np.asarray(cb) / ((n - 1) * (n - 2))


def clustering_coeff(g: IntervalGraph) -> np.ndarray:
    """Local clustering on the simple digraph.

    For ``v`` with ``d`` distinct neighbors (in or out), the score is the
    number of directed edges among those neighbors over ``d(d-1)``.
    """
    n = g.n
    out = np.zeros(n)
    succ, pred = g.adjacency()
    succ_sets = [set(s) for s in succ]
    for v in range(n):
        nbrs = succ_sets[v].union(pred[v])
        nbrs.discard(v)
        d = len(nbrs)
        if d < 2:
            continue
        links = sum(len(succ_sets[u] & nbrs) for u in nbrs)
        out[v] = links / (d * (d - 1))
    return out


# -------------------------------------------------------------- normalization


def normalize(raw: np.ndarray) -> np.ndarray:
    """Per-column min-max rescale onto ``[0.05, 0.95]``.

    A column whose spread is zero (up to rounding noise) maps to 0.05.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 1:
        return normalize(raw[:, None])[:, 0]
    if raw.shape[0] == 0:
        return raw.copy()
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    span = hi - lo
    scale = np.maximum(np.abs(hi), np.abs(lo))
    constant = span <= CONSTANT_RTOL * scale
    safe = np.where(constant, 1.0, span)
    out = NORM_LOW + (NORM_HIGH - NORM_LOW) * (raw - lo) / safe
    out[:, constant] = NORM_LOW
    return np.clip(out, NORM_LOW, NORM_HIGH)


# ----------------------------------------------------------------- composition


def raw_features(
    g: IntervalGraph,
    cfg: ConvergenceConfig = ConvergenceConfig(),
    timings: Optional[Dict[str, float]] = None,
) -> Tuple[np.ndarray, SpectralResult]:
    """Unnormalized ``(n, 10)`` feature matrix in :data:`FEATURE_NAMES` order."""
    clock = time.perf_counter
    raw = np.zeros((g.n, N_FEATURES))
    t0 = clock()
    raw[:, 0:4] = degree_features(g)
    t1 = clock()
    raw[:, 4] = pagerank(g, cfg)
    t2 = clock()
    raw[:, 5] = betweenness(g)
    t3 = clock()
    spectral = eigenvector_hits(g, cfg)
    raw[:, 6] = spectral.eigenvector
    raw[:, 7] = spectral.authority
    raw[:, 8] = spectral.hub
    t4 = clock()
    raw[:, 9] = clustering_coeff(g)
    t5 = clock()
    if timings is not None:
        for key, dt in (
            ("degree", t1 - t0),
            ("pagerank", t2 - t1),
            ("betweenness", t3 - t2),
            ("eigenvector_hits", t4 - t3),
            ("clustering", t5 - t4),
        ):
            timings[key] = timings.get(key, 0.0) + dt
    return raw, spectral


class IntervalFeatures(Mapping):
    """Normalized features for one interval, usable as ``{host: vector}``."""

    def __init__(self, index, nodes, values, eigenvector_degenerate=False, hits_degenerate=False):
        self.index = index
        self.nodes = tuple(nodes)
        self.values = np.asarray(values, dtype=np.float64).reshape(len(self.nodes), N_FEATURES)
        self.eigenvector_degenerate = eigenvector_degenerate
        self.hits_degenerate = hits_degenerate
        self._pos = {node: i for i, node in enumerate(self.nodes)}

    def __getitem__(self, host):
        return self.values[self._pos[host]]

    def __iter__(self):
        return iter(self.nodes)

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        return f"IntervalFeatures(index={self.index}, nodes={len(self.nodes)})"


def features_for_graph(
    g: IntervalGraph,
    cfg: ConvergenceConfig = ConvergenceConfig(),
    index: int = 0,
    timings: Optional[Dict[str, float]] = None,
) -> IntervalFeatures:
    if g.n == 0:
        return IntervalFeatures(index, (), np.zeros((0, N_FEATURES)))
    try:
        raw, spectral = raw_features(g, cfg, timings)
    except ConvergenceError as exc:
        raise exc.with_interval(index) from exc
    t0 = time.perf_counter()
    values = normalize(raw)
    if timings is not None:
        timings["normalize"] = timings.get("normalize", 0.0) + time.perf_counter() - t0
    return IntervalFeatures(
        index, g.nodes, values, spectral.eigenvector_degenerate, spectral.hits_degenerate
    )


def extract_interval(
    interval,
    mode: str = "multigraph",
    cfg: ConvergenceConfig = ConvergenceConfig(),
    timings: Optional[Dict[str, float]] = None,
) -> IntervalFeatures:
    """build_graph, all ten features, then per-interval normalization."""
    clock = time.perf_counter
    t0 = clock()
    g = build_graph(interval, mode)
    if timings is not None:
        timings["build_graph"] = timings.get("build_graph", 0.0) + clock() - t0
    return features_for_graph(g, cfg, getattr(interval, "index", 0), timings)
