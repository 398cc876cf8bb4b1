"""Host-level splits, confusion metrics, ROC curves and the three evaluation modes.

Modes:

``within``    70/30 split of one collection;
``cross``     train on all of collection A, test on all of collection B;
``combined``  pool every collection, then split 70/30.
"""

from __future__ import annotations

import logging
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, SplitError
from .model import LstmParams, TrainConfig, predict_scores, train
from .timeseries import WindowSample, stack

log = logging.getLogger(__name__)

EVAL_MODES = ("within", "cross", "combined")


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError("train_fraction must lie in (0, 1)")


def host_classes(samples: Sequence[WindowSample]) -> Dict[tuple, bool]:
    """Host key -> malicious (any window labeled positive), first-appearance order."""
    out: Dict[tuple, bool] = {}
    for s in samples:
        out[s.key] = out.get(s.key, False) or bool(s.label)
    return out


def split(samples: Sequence[WindowSample], cfg: SplitConfig = SplitConfig()):
    """Stratified host-level split: every window of a host lands on one side.

    Per class, ``floor(train_fraction * hosts)`` hosts go to training.
    Returns ``(train, test)`` sample lists in input order.
    """
    classes = host_classes(samples)
    chosen = set()
    rng = random.Random(cfg.seed)
    for cls, cname in ((True, "malicious"), (False, "benign")):
        hosts = [h for h, c in classes.items() if c == cls]
        if len(hosts) < 2:
            raise SplitError(f"cannot split: {cname} class has {len(hosts)} host(s), need at least 2")
        rng.shuffle(hosts)
        n_train = math.floor(cfg.train_fraction * len(hosts) + 1e-9)
        chosen.update(hosts[:n_train])
    train_set = [s for s in samples if s.key in chosen]
    test_set = [s for s in samples if s.key not in chosen]
    return train_set, test_set


# ------------------------------------------------------------------- metrics


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_scores(cls, scores, labels, threshold: float = 0.5) -> "ConfusionCounts":
        pred = np.asarray(scores) >= threshold
        truth = np.asarray(labels) > 0.5
        return cls(
            int(np.sum(pred & truth)),
            int(np.sum(~pred & ~truth)),
            int(np.sum(pred & ~truth)),
            int(np.sum(~pred & truth)),
        )


def _ratio(num: int, den: int) -> Optional[Fraction]:
    return Fraction(num, den) if den else None


@dataclass(frozen=True)
class Metrics:
    """Exact rates; ``None`` where a denominator is zero."""

    accuracy: Optional[Fraction]
    tpr: Optional[Fraction]
    tnr: Optional[Fraction]
    fpr: Optional[Fraction]
    fnr: Optional[Fraction]
    precision: Optional[Fraction]
    recall: Optional[Fraction]
    f_measure: Optional[Fraction]

    def as_floats(self) -> Dict[str, Optional[float]]:
        return {k: (None if v is None else float(v)) for k, v in self.__dict__.items()}


def metrics(counts: ConfusionCounts) -> Metrics:
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn
    tpr = _ratio(tp, tp + fn)
    precision = _ratio(tp, tp + fp)
    if precision is None or tpr is None or precision + tpr == 0:
        f = None
    else:
        f = 2 * precision * tpr / (precision + tpr)
    return Metrics(
        accuracy=_ratio(tp + tn, counts.total),
        tpr=tpr,
        tnr=_ratio(tn, tn + fp),
        fpr=_ratio(fp, tn + fp),
        fnr=_ratio(fn, tp + fn),
        precision=precision,
        recall=tpr,
        f_measure=f,
    )


# ----------------------------------------------------------------------- ROC


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # thresholds[0] is +inf (the (0, 0) corner)
    auroc: float
    positives: int
    negatives: int

    @property
    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def youden(self) -> Tuple[float, int]:
        """``(threshold, point index)`` maximizing TPR - FPR (highest threshold on ties)."""
        j = self.tpr - self.fpr
        k = int(np.argmax(j))
        return float(self.thresholds[k]), k


def roc(scores, labels) -> RocCurve:
    """ROC over every distinct score (descending); tied scores move together.

    The trapezoidal area is accumulated in integers and divided once, so it
    equals the Mann-Whitney U statistic over P*N exactly.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels) > 0.5
    P = int(y.sum())
    N = int(y.size - P)
    if P == 0 or N == 0:
        raise ConfigurationError("ROC needs both positive and negative samples")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last_of_group].astype(np.int64)
    fp = np.cumsum(~y)[last_of_group].astype(np.int64)
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    twice_area = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    auroc = twice_area / (2 * P * N)
    thresholds = np.r_[np.inf, s[last_of_group]]
    return RocCurve(fp / N, tp / P, thresholds, auroc, P, N)


def auroc_pairwise(scores, labels) -> float:
    """Brute-force U statistic: P(score_pos > score_neg) + 0.5 P(tie)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels) > 0.5
    pos, neg = s[y], s[~y]
    twice = 2 * int(np.sum(pos[:, None] > neg[None, :])) + int(np.sum(pos[:, None] == neg[None, :]))
    return twice / (2 * pos.size * neg.size)


# ------------------------------------------------------------ mode running


@dataclass
class ModeResult:
    name: str
    train_sets: List[str]
    test_sets: List[str]
    scores: np.ndarray
    labels: np.ndarray
    hosts: List[tuple]
    curve: Optional[RocCurve]
    counts: ConfusionCounts
    youden_threshold: Optional[float]
    youden_counts: Optional[ConfusionCounts]
    train_hosts: int = 0
    test_hosts: int = 0
    history: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def auroc(self) -> Optional[float]:
        return None if self.curve is None else self.curve.auroc

    def host_scores(self) -> Dict[tuple, Tuple[float, float, bool]]:
        """Host key -> (max window score, mean window score, malicious)."""
        acc: Dict[tuple, list] = {}
        for key, sc, lab in zip(self.hosts, self.scores.tolist(), self.labels.tolist()):
            entry = acc.setdefault(key, [[], False])
            entry[0].append(sc)
            entry[1] = entry[1] or lab > 0.5
        return {k: (max(v[0]), sum(v[0]) / len(v[0]), v[1]) for k, v in acc.items()}

    def summary(self) -> dict:
        out = {
            "name": self.name,
            "train_sets": self.train_sets,
            "test_sets": self.test_sets,
            "train_hosts": self.train_hosts,
            "test_hosts": self.test_hosts,
            "test_windows": int(self.labels.size),
            "test_positive_windows": int(np.sum(self.labels > 0.5)),
            "auroc": self.auroc,
            "threshold": 0.5,
            "counts": self.counts.__dict__,
            "metrics": metrics(self.counts).as_floats(),
            "warnings": list(self.warnings),
        }
        if self.youden_threshold is not None:
            out["youden_threshold"] = self.youden_threshold
            out["youden_counts"] = self.youden_counts.__dict__
            out["youden_metrics"] = metrics(self.youden_counts).as_floats()
        neg = out["test_windows"] - out["test_positive_windows"]
        pos = out["test_positive_windows"]
        out["class_ratio_benign_per_malicious"] = (neg / pos) if pos else None
        return out


def score_samples(params: LstmParams, samples: Sequence[WindowSample], name: str, **kw) -> ModeResult:
    X, y = stack(samples)
    scores = predict_scores(params, X) if len(samples) else np.zeros(0)
    curve = None
    yt = yc = None
    warnings = list(kw.pop("warnings", []))
    if len(samples) and 0 < y.sum() < y.size:
        curve = roc(scores, y)
        yt, _ = curve.youden()
        yc = ConfusionCounts.from_scores(scores, y, yt)
    else:
        warnings.append("test set holds a single class; ROC undefined")
    return ModeResult(
        name=name,
        scores=scores,
        labels=y,
        hosts=[s.key for s in samples],
        curve=curve,
        counts=ConfusionCounts.from_scores(scores, y, 0.5),
        youden_threshold=yt,
        youden_counts=yc,
        test_hosts=len({s.key for s in samples}),
        warnings=warnings,
        **kw,
    )


def _fit(samples, train_cfg: TrainConfig):
    X, y = stack(samples)
    return train(X, y, train_cfg)


def run_within(name, samples, train_cfg, split_cfg) -> Tuple[ModeResult, LstmParams]:
    tr, te = split(samples, split_cfg)
    fit = _fit(tr, train_cfg)
    res = score_samples(
        fit.params, te, f"within:{name}",
        train_sets=[name], test_sets=[name],
        train_hosts=len({s.key for s in tr}), history=fit.history,
    )
    return res, fit.params


def run_cross(train_name, train_samples, test_name, test_samples, train_cfg, params=None):
    history: List[float] = []
    if params is None:
        fit = _fit(train_samples, train_cfg)
        params, history = fit.params, fit.history
    warnings = []
    if train_name == test_name:
        warnings.append("train and test collections are identical: scores include training data (leakage)")
    res = score_samples(
        params, test_samples, f"cross:{train_name}->{test_name}",
        train_sets=[train_name], test_sets=[test_name],
        train_hosts=len({s.key for s in train_samples}), history=history, warnings=warnings,
    )
    return res, params


def run_combined(datasets: Dict[str, List[WindowSample]], train_cfg, split_cfg):
    pooled = [s for name in datasets for s in datasets[name]]
    tr, te = split(pooled, split_cfg)
    fit = _fit(tr, train_cfg)
    res = score_samples(
        fit.params, te, "combined",
        train_sets=list(datasets), test_sets=list(datasets),
        train_hosts=len({s.key for s in tr}), history=fit.history,
    )
    return res, fit.params, (tr, te)


@dataclass
class EvalReport:
    mode: str
    results: List[ModeResult]
    names: List[str] = field(default_factory=list)
    matrix: Optional[np.ndarray] = None  # [test, train] AUROC, cross mode only
    config: dict = field(default_factory=dict)

    def row_averages(self) -> Optional[np.ndarray]:
        """Mean AUROC per test collection across training collections."""
        if self.matrix is None:
            return None
        return np.array([np.nanmean(row) if np.any(np.isfinite(row)) else np.nan for row in self.matrix])


def _cross_column(train_name, names, datasets, train_cfg, split_cfg, diagonal) -> List[ModeResult]:
    """Every test result for models fitted on ``train_name``, in ``names`` order."""
    params = None
    column = []
    for test_name in names:
        if test_name == train_name and diagonal == "within":
            res, _ = run_within(train_name, datasets[train_name], train_cfg, split_cfg)
        else:
            res, params = run_cross(
                train_name, datasets[train_name], test_name, datasets[test_name], train_cfg, params
            )
        column.append(res)
    return column


def _within_task(name, samples, train_cfg, split_cfg):
    return run_within(name, samples, train_cfg, split_cfg)[0]


def _map(fn, arg_lists, workers):
    """``[fn(*args) ...]`` in input order, optionally across processes."""
    if workers <= 1 or len(arg_lists) <= 1:
        return [fn(*args) for args in arg_lists]
    with ProcessPoolExecutor(max_workers=min(workers, len(arg_lists))) as pool:
        futures = [pool.submit(fn, *args) for args in arg_lists]
        return [f.result() for f in futures]


def evaluate_modes(
    datasets: Dict[str, List[WindowSample]],
    mode: str,
    train_cfg: TrainConfig = TrainConfig(),
    split_cfg: SplitConfig = SplitConfig(),
    diagonal: str = "within",
    workers: int = 1,
) -> EvalReport:
    """Run one evaluation protocol over named window collections.

    In cross mode the AUROC matrix is indexed ``[test, train]``.  Its diagonal
    uses a within-collection split by default; ``diagonal="full"`` instead
    tests each model on its own full training set (flagged as leakage).
    Independent trainings (per collection, per training column) may run in
    ``workers`` processes; each is seeded identically, so results do not
    depend on the worker count.
    """
    if mode not in EVAL_MODES:
        raise ConfigurationError(f"unknown evaluation mode {mode!r}")
    if not datasets:
        raise ConfigurationError("no datasets to evaluate")
    names = list(datasets)
    config = {"mode": mode, "train": train_cfg.__dict__, "split": split_cfg.__dict__}
    if mode == "within":
        results = _map(_within_task, [(n, datasets[n], train_cfg, split_cfg) for n in names], workers)
        return EvalReport(mode, results, names, config=config)
    if mode == "combined":
        res, _, _ = run_combined(datasets, train_cfg, split_cfg)
        return EvalReport(mode, [res], names, config=config)

    if len(names) < 2:
        raise ConfigurationError("cross mode needs at least two collections")
    if diagonal not in ("within", "full"):
        raise ConfigurationError("diagonal must be 'within' or 'full'")
    config["diagonal"] = diagonal
    k = len(names)
    matrix = np.full((k, k), np.nan)
    columns = _map(
        _cross_column, [(n, names, datasets, train_cfg, split_cfg, diagonal) for n in names], workers
    )
    results: List[ModeResult] = []
    for j, column in enumerate(columns):
        for i, res in enumerate(column):
            results.append(res)
            if res.auroc is not None:
                matrix[i, j] = res.auroc
    return EvalReport(mode, results, names, matrix, config)
