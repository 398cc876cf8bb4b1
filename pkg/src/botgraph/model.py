"""Single-layer LSTM sequence classifier written directly against numpy.

Shape: 10 inputs -> 64 LSTM units -> 1 sigmoid output read from the last
hidden state.  Trained with weighted mean squared error and RMSProp, with
gradients from hand-written backpropagation through time.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .errors import ConfigurationError, DivergenceError, InputFormatError
from .graphfeat import FEATURE_NAMES

GATES = ("i", "f", "o", "c")
MODEL_FORMAT = "botgraph-lstm"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    malicious_weight: float = 6.0
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError("epochs must be non-negative")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be non-negative")
        if not 0.0 < self.rmsprop_decay < 1.0:
            raise ConfigurationError("rmsprop_decay must lie in (0, 1)")
        if not self.rmsprop_epsilon > 0:
            raise ConfigurationError("rmsprop_epsilon must be positive")
        if not self.malicious_weight > 0:
            raise ConfigurationError("malicious_weight must be positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be a positive integer")


def tensor_names():
    return (
        [f"W_{g}" for g in GATES]
        + [f"U_{g}" for g in GATES]
        + [f"b_{g}" for g in GATES]
        + ["w_out", "b_out"]
    )


@dataclass(eq=False)
class LstmParams:
    """Named parameter tensors. ``b_out`` is a 0-d array."""

    tensors: Dict[str, np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.tensors["W_i"].shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.tensors["W_i"].shape[0]

    def __getitem__(self, name):
        return self.tensors[name]

    def copy(self) -> "LstmParams":
        return LstmParams({k: v.copy() for k, v in self.tensors.items()})

    def stacked(self):
        """``(W, U, b)`` with gate blocks stacked in i, f, o, c order."""
        t = self.tensors
        W = np.concatenate([t[f"W_{g}"] for g in GATES], axis=0)
        U = np.concatenate([t[f"U_{g}"] for g in GATES], axis=0)
        b = np.concatenate([t[f"b_{g}"] for g in GATES])
        return W, U, b

    def validate(self):
        H, D = self.hidden_dim, self.input_dim
        shapes = {f"W_{g}": (H, D) for g in GATES}
        shapes.update({f"U_{g}": (H, H) for g in GATES})
        shapes.update({f"b_{g}": (H,) for g in GATES})
        shapes.update({"w_out": (H,), "b_out": ()})
        for name, shape in shapes.items():
            if name not in self.tensors:
                raise InputFormatError(f"missing tensor {name}")
            if self.tensors[name].shape != shape:
                raise InputFormatError(
                    f"tensor {name} has shape {self.tensors[name].shape}, expected {shape}"
                )
            if not np.all(np.isfinite(self.tensors[name])):
                raise InputFormatError(f"tensor {name} contains non-finite values")

    def equals(self, other: "LstmParams") -> bool:
        return self.tensors.keys() == other.tensors.keys() and all(
            np.array_equal(v, other.tensors[k]) for k, v in self.tensors.items()
        )


def init(seed: int = 0, input_dim: int = 10, hidden_dim: int = 64) -> LstmParams:
    """Uniform(+-sqrt(1/fan_in)) weights, forget bias 1, other biases 0."""
    rng = np.random.default_rng(seed)
    t: Dict[str, np.ndarray] = {}
    a_in = math.sqrt(1.0 / input_dim)
    a_h = math.sqrt(1.0 / hidden_dim)
    for g in GATES:
        t[f"W_{g}"] = rng.uniform(-a_in, a_in, size=(hidden_dim, input_dim))
    for g in GATES:
        t[f"U_{g}"] = rng.uniform(-a_h, a_h, size=(hidden_dim, hidden_dim))
    for g in GATES:
        t[f"b_{g}"] = np.full(hidden_dim, 1.0 if g == "f" else 0.0)
    t["w_out"] = rng.uniform(-a_h, a_h, size=hidden_dim)
    t["b_out"] = np.array(0.0)
    return LstmParams(t)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class Prediction:
    score: float

    def label_at(self, threshold: float = 0.5) -> bool:
        return self.score >= threshold


@dataclass
class ForwardCache:
    X: np.ndarray
    hs: List[np.ndarray]  # h_0 .. h_T
    cs: List[np.ndarray]  # c_0 .. c_T
    gates: List[tuple]  # (i, f, o, g) per step
    scores: np.ndarray


def _check_input(X: np.ndarray, params: LstmParams) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != params.input_dim:
        raise InputFormatError(
            f"expected input of shape (N, T, {params.input_dim}), got {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise InputFormatError("input contains non-finite values")
    return X


def forward_batch(params: LstmParams, X: np.ndarray, keep_cache: bool = False):
    """Scores for ``X`` of shape (N, T, D); optionally the activations for BPTT."""
    X = _check_input(X, params)
    N, T, D = X.shape
    H = params.hidden_dim
    W, U, b = params.stacked()
    pre_x = (X.reshape(N * T, D) @ W.T).reshape(N, T, 4 * H) + b
    h = np.zeros((N, H))
    c = np.zeros((N, H))
    hs, cs, gates = [h], [c], []
    for t in range(T):
        z = pre_x[:, t] + h @ U.T
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        o = _sigmoid(z[:, 2 * H : 3 * H])
        g = np.tanh(z[:, 3 * H :])
        c = f * c + i * g
        h = o * np.tanh(c)
        if keep_cache:
            hs.append(h)
            cs.append(c)
            gates.append((i, f, o, g))
    scores = _sigmoid(h @ params["w_out"] + params["b_out"])
    if keep_cache:
        return scores, ForwardCache(X, hs, cs, gates, scores)
    return scores


def forward(params: LstmParams, matrix: np.ndarray) -> Prediction:
    """Classify one (T, D) window."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise InputFormatError(f"expected a (T, D) matrix, got shape {matrix.shape}")
    return Prediction(float(forward_batch(params, matrix[None])[0]))


def predict_scores(params: LstmParams, X: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        return np.zeros(0)
    return np.concatenate(
        [forward_batch(params, X[k : k + batch_size]) for k in range(0, X.shape[0], batch_size)]
    )


def sample_weights(labels: np.ndarray, malicious_weight: float) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    return np.where(labels > 0.5, malicious_weight, 1.0)


def loss(predictions, labels, malicious_weight: float = 6.0) -> float:
    """Mean of ``w_i * (score_i - y_i)**2`` with ``w_i = malicious_weight`` for positives."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ConfigurationError(f"{p.size} predictions for {y.size} labels")
    if p.size == 0:
        return 0.0
    return float(np.mean(sample_weights(y, malicious_weight) * (p - y) ** 2))


def loss_and_grads(params: LstmParams, X: np.ndarray, y: np.ndarray, malicious_weight: float):
    """Weighted MSE over the batch and its gradient for every tensor."""
    scores, cache = forward_batch(params, X, keep_cache=True)
    y = np.asarray(y, dtype=np.float64)
    N = scores.shape[0]
    w = sample_weights(y, malicious_weight)
    value = float(np.mean(w * (scores - y) ** 2))

    H = params.hidden_dim
    _, U, _ = params.stacked()
    d_logit = (2.0 / N) * w * (scores - y) * scores * (1.0 - scores)
    h_T = cache.hs[-1]
    grads: Dict[str, np.ndarray] = {
        "w_out": h_T.T @ d_logit,
        "b_out": np.array(d_logit.sum()),
    }
    dW = np.zeros((4 * H, params.input_dim))
    dU = np.zeros((4 * H, H))
    db = np.zeros(4 * H)
    dh = np.outer(d_logit, params["w_out"])
    dc = np.zeros_like(dh)
    for t in range(len(cache.gates) - 1, -1, -1):
        i, f, o, g = cache.gates[t]
        c_t, c_prev, h_prev = cache.cs[t + 1], cache.cs[t], cache.hs[t]
        tc = np.tanh(c_t)
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dh * tc * o * (1.0 - o),
                dc * i * (1.0 - g * g),
            ],
            axis=1,
        )
        dW += dz.T @ cache.X[:, t]
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dh = dz @ U
        dc = dc * f
    for k, gname in enumerate(GATES):
        rows = slice(k * H, (k + 1) * H)
        grads[f"W_{gname}"] = dW[rows]
        grads[f"U_{gname}"] = dU[rows]
        grads[f"b_{gname}"] = db[rows]
    return value, grads


# ---------------------------------------------------------------------- training


@dataclass
class TrainResult:
    params: LstmParams
    history: List[float]
    initial_loss: float
    config: TrainConfig


def train(
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    params: Optional[LstmParams] = None,
    hidden_dim: int = 64,
) -> TrainResult:
    """Mini-batch RMSProp over seeded per-epoch shuffles.

    ``history[k]`` is the full-set loss after epoch ``k + 1``, evaluated in the
    original sample order so it is exactly reproducible.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ConfigurationError("no training samples")
    if not (np.any(y > 0.5) and np.any(y < 0.5)):
        raise ConfigurationError("training data must contain both malicious and benign samples")
    if params is None:
        params = init(cfg.seed, X.shape[2], hidden_dim)
    else:
        params = params.copy()
    rng = np.random.default_rng(cfg.seed)
    acc = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    rho, lr, eps = cfg.rmsprop_decay, cfg.learning_rate, cfg.rmsprop_epsilon

    def full_loss():
        return loss(predict_scores(params, X), y, cfg.malicious_weight)

    initial = full_loss()
    history: List[float] = []
    N = X.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(N)
        for k in range(0, N, cfg.batch_size):
            idx = order[k : k + cfg.batch_size]
            _, grads = loss_and_grads(params, X[idx], y[idx], cfg.malicious_weight)
            for name, g in grads.items():
                v = acc[name]
                v *= rho
                v += (1.0 - rho) * g * g
                params.tensors[name] = params.tensors[name] - lr * g / (np.sqrt(v) + eps)
        value = full_loss()
        if not math.isfinite(value):
            raise DivergenceError(f"loss became non-finite at epoch {epoch}", epoch=epoch)
        history.append(value)
    return TrainResult(params, history, initial, cfg)


def train_samples(samples, cfg: TrainConfig = TrainConfig(), hidden_dim: int = 64) -> TrainResult:
    from .timeseries import stack

    X, y = stack(samples)
    return train(X, y, cfg, hidden_dim=hidden_dim)


# ------------------------------------------------------------ gradient checking


@dataclass
class GradCheckResult:
    max_relative_error: float
    per_tensor: Dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def _perturbed_losses(params, x, y, malicious_weight, h):
    """Loss with each scalar parameter nudged by +h and -h, in one batched pass.

    Every batch row is a copy of the sample; row ``r`` adds its perturbation
    to exactly one pre-activation (or output) term.  Returns ``{name: (plus,
    minus)}`` shaped like each tensor.
    """
    H, D = params.hidden_dim, params.input_dim
    W, U, b = params.stacked()
    T = x.shape[0]
    # catalogue of perturbations: (tensor name, gate row offset, kind, column)
    names, rows, kinds, cols = [], [], [], []
    for k, gname in enumerate(GATES):
        for kind, width in (("W", D), ("U", H), ("b", 1)):
            r, c = np.meshgrid(np.arange(H), np.arange(width), indexing="ij")
            names.append((f"{kind}_{gname}", (H, width) if kind != "b" else (H,)))
            rows.append(k * H + r.ravel())
            cols.append(c.ravel())
            kinds.append(np.full(r.size, {"W": 0, "U": 1, "b": 2}[kind]))
    names.append(("w_out", (H,)))
    rows.append(np.arange(H))
    cols.append(np.zeros(H, dtype=int))
    kinds.append(np.full(H, 3))
    names.append(("b_out", ()))
    rows.append(np.array([0]))
    cols.append(np.array([0]))
    kinds.append(np.array([4]))
    row = np.concatenate(rows)
    col = np.concatenate(cols)
    kind = np.concatenate(kinds)
    P = row.size

    out = {}
    for sign in (1.0, -1.0):
        delta = sign * h
        hstate = np.zeros((P, H))
        cstate = np.zeros((P, H))
        ar = np.arange(P)
        for t in range(T):
            z = np.tile(x[t] @ W.T + b, (P, 1)) + hstate @ U.T
            bump = np.where(
                kind == 0,
                delta * x[t][np.minimum(col, D - 1)],
                np.where(kind == 1, delta * hstate[ar, np.minimum(col, H - 1)], np.where(kind == 2, delta, 0.0)),
            )
            mask = kind <= 2
            z[ar[mask], row[mask]] += bump[mask]
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H : 2 * H])
            o = _sigmoid(z[:, 2 * H : 3 * H])
            g = np.tanh(z[:, 3 * H :])
            cstate = f * cstate + i * g
            hstate = o * np.tanh(cstate)
        w_out = np.tile(params["w_out"], (P, 1))
        sel = kind == 3
        w_out[ar[sel], row[sel]] += delta
        logit = np.einsum("ph,ph->p", hstate, w_out) + params["b_out"] + np.where(kind == 4, delta, 0.0)
        s = _sigmoid(logit)
        wt = malicious_weight if y > 0.5 else 1.0
        out[sign] = wt * (s - y) ** 2

    result = {}
    pos = 0
    for name, shape in names:
        size = int(np.prod(shape)) if shape else 1
        result[name] = (
            out[1.0][pos : pos + size].reshape(shape),
            out[-1.0][pos : pos + size].reshape(shape),
        )
        pos += size
    return result


def numeric_gradients(params, matrix, label, malicious_weight=6.0, h=1e-5) -> Dict[str, np.ndarray]:
    """Central-difference gradient of the single-sample loss for every parameter."""
    x = np.asarray(matrix, dtype=np.float64)
    pert = _perturbed_losses(params, x, float(label), malicious_weight, h)
    return {name: (plus - minus) / (2.0 * h) for name, (plus, minus) in pert.items()}


def gradient_check(
    params: LstmParams,
    sample,
    tolerance: float = 1e-4,
    h: float = 1e-5,
    malicious_weight: float = 6.0,
) -> GradCheckResult:
    """Compare BPTT gradients with central differences for every parameter.

    ``sample`` is a :class:`WindowSample` or a ``(matrix, label)`` pair.  The
    error per tensor is ``||analytic - numeric|| / (||analytic|| + ||numeric||)``
    and the maximum over tensors is reported.
    """
    if not tolerance > 0:
        raise ConfigurationError("tolerance must be positive")
    if hasattr(sample, "matrix"):
        matrix, label = sample.matrix, float(sample.label)
    else:
        matrix, label = sample
    matrix = np.asarray(matrix, dtype=np.float64)
    _, analytic = loss_and_grads(params, matrix[None], np.array([float(label)]), malicious_weight)
    numeric = numeric_gradients(params, matrix, label, malicious_weight, h)
    per = {}
    for name in tensor_names():
        a, n = analytic[name], numeric[name]
        denom = np.linalg.norm(a) + np.linalg.norm(n)
        per[name] = 0.0 if denom == 0 else float(np.linalg.norm(a - n) / denom)
    return GradCheckResult(max(per.values()), per, tolerance)


# ------------------------------------------------------------------ persistence


def save_model(params: LstmParams, cfg: Optional[TrainConfig], path, extra: Optional[dict] = None) -> None:
    """Write a self-describing JSON model file (floats round-trip exactly)."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "input_dim": params.input_dim,
        "hidden_dim": params.hidden_dim,
        "feature_order": list(FEATURE_NAMES),
        "output": "sigmoid(w_out . h_T + b_out)",
        "train_config": asdict(cfg) if cfg is not None else None,
        "tensors": {name: params.tensors[name].tolist() for name in tensor_names()},
    }
    if extra:
        doc["metadata"] = extra
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n", encoding="utf-8")


def load_model_document(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputFormatError(f"{path}: no such model file") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputFormatError(f"{path}: unreadable model file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise InputFormatError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise InputFormatError(f"{path}: model version {doc.get('version')} unsupported")
    return doc


def load_model(path) -> LstmParams:
    doc = load_model_document(path)
    try:
        tensors = {name: np.asarray(doc["tensors"][name], dtype=np.float64) for name in tensor_names()}
        D, H = int(doc["input_dim"]), int(doc["hidden_dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputFormatError(f"{path}: malformed model file ({exc})") from None
    params = LstmParams(tensors)
    params.validate()
    if params.input_dim != D or params.hidden_dim != H:
        raise InputFormatError(f"{path}: declared dims ({D}, {H}) disagree with tensors")
    return params
