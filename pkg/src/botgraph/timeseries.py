"""Per-host feature sequences and the labeled windows the classifier trains on."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .graphfeat import N_FEATURES
from .ingest import GroundTruth


@dataclass(frozen=True)
class SamplingConfig:
    neg_pos_ratio: int = 10
    slice_len: int = 5
    slice_overlap: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.neg_pos_ratio < 1:
            raise ConfigurationError("neg_pos_ratio must be a positive integer")
        if self.slice_len < 1:
            raise ConfigurationError("slice_len must be a positive integer")
        if not 0 <= self.slice_overlap < self.slice_len:
            raise ConfigurationError("slice_overlap must satisfy 0 <= overlap < slice_len")

    @property
    def stride(self) -> int:
        return self.slice_len - self.slice_overlap


@dataclass(eq=False)
class NodeTimeSeries:
    host: str
    sequence: np.ndarray  # (T, 10); all-zero rows where the host was silent
    labels: np.ndarray  # (T,) bool
    group: str = ""

    @property
    def key(self):
        return (self.group, self.host)

    @property
    def malicious(self) -> bool:
        return bool(self.labels.any())

    def __len__(self):
        return self.sequence.shape[0]


@dataclass(eq=False)
class WindowSample:
    host: str
    start_interval: int
    matrix: np.ndarray  # (slice_len, 10)
    label: bool
    group: str = ""

    @property
    def key(self):
        return (self.group, self.host)


def interval_labels(host: str, truth: GroundTruth, starts: Sequence[float]) -> np.ndarray:
    """Malicious at an interval iff infected no later than the interval start."""
    infected = truth.entries.get(host)
    if infected is None:
        return np.zeros(len(starts), dtype=bool)
    return np.asarray(starts, dtype=np.float64) >= infected


def assemble(
    per_interval: Sequence[Mapping[str, np.ndarray]],
    truth: Optional[GroundTruth] = None,
    step_s: float = 150.0,
    starts: Optional[Sequence[float]] = None,
    group: str = "",
) -> List[NodeTimeSeries]:
    """One zero-padded series per host ever seen, in first-appearance order."""
    truth = truth or GroundTruth()
    T = len(per_interval)
    if starts is None:
        starts = [i * step_s for i in range(T)]
    order: Dict[str, int] = {}
    for feats in per_interval:
        for host in feats:
            order.setdefault(host, len(order))
    seqs = np.zeros((len(order), T, N_FEATURES))
    for t, feats in enumerate(per_interval):
        for host in feats:
            seqs[order[host], t] = feats[host]
    return [
        NodeTimeSeries(host, seqs[i], interval_labels(host, truth, starts), group)
        for host, i in order.items()
    ]


def undersample(series: Sequence[NodeTimeSeries], cfg: SamplingConfig) -> List[NodeTimeSeries]:
    """Keep every malicious host and at most ``ratio`` benign hosts per malicious one.

    Benign hosts are drawn uniformly without replacement with a seeded RNG;
    the original relative order is preserved in the output.
    """
    malicious = [i for i, s in enumerate(series) if s.malicious]
    benign = [i for i, s in enumerate(series) if not s.malicious]
    if not malicious:
        raise ConfigurationError(
            "no malicious hosts to undersample against; rerun without undersampling"
        )
    quota = min(len(benign), cfg.neg_pos_ratio * len(malicious))
    chosen = random.Random(cfg.seed).sample(benign, quota)
    keep = sorted(malicious + chosen)
    return [series[i] for i in keep]


def window_starts(T: int, cfg: SamplingConfig) -> range:
    if T < cfg.slice_len:
        return range(0)
    return range(0, T - cfg.slice_len + 1, cfg.stride)


def slice_windows(series: Sequence[NodeTimeSeries], cfg: SamplingConfig) -> List[WindowSample]:
    """Cut each series into ``slice_len`` windows stepping by ``slice_len - overlap``.

    A window is labeled malicious if any interval it covers is malicious.
    A trailing remainder shorter than ``slice_len`` is dropped.
    """
    out: List[WindowSample] = []
    L = cfg.slice_len
    for s in series:
        for start in window_starts(len(s), cfg):
            out.append(
                WindowSample(
                    s.host,
                    start,
                    s.sequence[start : start + L].copy(),
                    bool(s.labels[start : start + L].any()),
                    s.group,
                )
            )
    return out


def stack(samples: Sequence[WindowSample]):
    """``(X, y)`` arrays: X is (N, slice_len, 10), y is float 0/1."""
    if not samples:
        return np.zeros((0, 0, N_FEATURES)), np.zeros(0)
    X = np.stack([s.matrix for s in samples])
    y = np.array([1.0 if s.label else 0.0 for s in samples])
    return X, y


def write_windows_csv(samples: Sequence[WindowSample], path) -> None:
    """Debug dump: ``host,start_interval,label,m00..m49`` (row-major matrix)."""
    if samples:
        cells = samples[0].matrix.size
    else:
        cells = 5 * N_FEATURES
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("host,start_interval,label," + ",".join(f"m{i:02d}" for i in range(cells)) + "\n")
        for s in samples:
            vals = ",".join(format(v, ".9g") for v in s.matrix.ravel())
            fh.write(f"{s.host},{s.start_interval},{int(s.label)},{vals}\n")
