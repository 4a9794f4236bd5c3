"""Small dense sigmoid network in numpy: init, forward, BCE backprop, SGD, metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyDataset, IoFailure, SingleClass, ValidationError

CLAMP = 1e-12
CHECKPOINT_HEADER = "fedgraph-model v1"


@dataclass(frozen=True)
class ModelArch:
    input_dim: int
    hidden: tuple[int, ...] = (16, 8)

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValidationError(f"layer widths must be >= 1: {self.input_dim}, {self.hidden}")

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden, 1]

    @property
    def shapes(self) -> list[tuple[tuple[int, int], tuple[int]]]:
        s = self.sizes
        return [((s[i + 1], s[i]), (s[i + 1],)) for i in range(len(s) - 1)]

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": list(self.hidden)}

    @classmethod
    def from_dict(cls, d: dict) -> ModelArch:
        return cls(int(d["input_dim"]), tuple(d["hidden"]))


@dataclass
class ModelParams:
    """Per layer a weight matrix (out x in) and a bias vector."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def arch(self) -> ModelArch:
        return ModelArch(self.weights[0].shape[1], tuple(w.shape[0] for w in self.weights[:-1]))

    def copy(self) -> ModelParams:
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list[np.ndarray]:
        """Weights and biases interleaved: W1, b1, W2, b2, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray]) -> ModelParams:
        return cls([np.asarray(a, dtype=np.float64) for a in arrays[0::2]], [np.asarray(a, dtype=np.float64) for a in arrays[1::2]])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, arch: ModelArch, flat: np.ndarray) -> ModelParams:
        need = sum(math.prod(w) + math.prod(b) for w, b in arch.shapes)
        if need != len(flat):
            raise DimensionMismatch(f"flat vector has {len(flat)} values, arch needs {need}")
        arrays, pos = [], 0
        for wshape, bshape in arch.shapes:
            for shape in (wshape, bshape):
                size = math.prod(shape)
                arrays.append(np.array(flat[pos : pos + size], dtype=np.float64).reshape(shape))
                pos += size
        return cls.from_arrays(arrays)

    def norm(self) -> float:
        return float(np.sqrt(sum(float((a * a).sum()) for a in self.arrays())))

    def bit_equal(self, other: ModelParams) -> bool:
        a, b = self.arrays(), other.arrays()
        return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_params(arch: ModelArch, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for (out_dim, in_dim), _ in arch.shapes:
        bound = math.sqrt(6.0 / (in_dim + out_dim))
        weights.append(rng.uniform(-bound, bound, size=(out_dim, in_dim)))
        biases.append(np.zeros(out_dim))
    return ModelParams(weights, biases)


def _activations(params: ModelParams, x: np.ndarray) -> list[np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != params.weights[0].shape[1]:
        raise DimensionMismatch(f"input has {x.shape[1]} features, model expects {params.weights[0].shape[1]}")
    acts = [x]
    for w, b in zip(params.weights, params.biases):
        acts.append(sigmoid(acts[-1] @ w.T + b))
    return acts


def forward(params: ModelParams, x: np.ndarray) -> np.ndarray | float:
    """Probabilities for a batch (2-D input) or a single row (1-D input)."""
    p = _activations(params, x)[-1][:, 0]
    return float(p[0]) if np.ndim(x) == 1 else p


def bce_loss_and_grad(params: ModelParams, x: np.ndarray, y: np.ndarray) -> tuple[float, ModelParams]:
    """Mean binary cross-entropy and its gradient by backpropagation."""
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise EmptyDataset("empty batch")
    acts = _activations(params, x)
    p = np.clip(acts[-1][:, 0], CLAMP, 1.0 - CLAMP)
    n = len(y)
    loss = float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    # d loss / d p, then through each sigmoid
    dp = (p - y) / (p * (1.0 - p)) / n
    # the clamp has zero gradient where it binds
    raw = acts[-1][:, 0]
    dp = np.where((raw < CLAMP) | (raw > 1.0 - CLAMP), 0.0, dp)
    delta = (dp * raw * (1.0 - raw))[:, None]
    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    for layer in range(len(params.weights) - 1, -1, -1):
        gw[layer] = delta.T @ acts[layer]
        gb[layer] = delta.sum(axis=0)
        if layer:
            a = acts[layer]
            delta = (delta @ params.weights[layer]) * a * (1.0 - a)
    return loss, ModelParams(gw, gb)


def compress(x: np.ndarray) -> np.ndarray:
    """Signed log1p: tames heavy-tailed amount and count columns."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.log1p(np.abs(x))


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-scoring frozen from training rows, optionally after ``compress``."""

    mean: np.ndarray
    std: np.ndarray
    log1p: bool = True

    @classmethod
    def fit(cls, x: np.ndarray, log1p: bool = True) -> Standardizer:
        x = np.asarray(x, dtype=np.float64)
        if len(x) == 0:
            raise EmptyDataset("cannot standardize an empty training set")
        if log1p:
            x = compress(x)
        std = x.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(x.mean(axis=0), std, log1p)

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.log1p:
            x = compress(x)
        return (x - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"log1p": self.log1p, "mean": self.mean.tolist(), "std": self.std.tolist()}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValidationError("batch_size must be >= 1 and epochs >= 0")

    def to_dict(self) -> dict:
        return {"learning_rate": self.learning_rate, "batch_size": self.batch_size, "epochs": self.epochs, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        return cls(**{k: d[k] for k in ("learning_rate", "batch_size", "epochs", "seed") if k in d})


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, epoch]).permutation(n)


def train(
    params: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    ids: np.ndarray | None = None,
    first_epoch: int = 0,
    losses: list[float] | None = None,
) -> ModelParams:
    """Mini-batch SGD on already-standardized rows.

    Each epoch shuffles with a permutation keyed on (seed, epoch number);
    ``first_epoch`` continues the numbering across federated rounds. With
    ``ids`` the rows are first put in id order, so the result does not depend
    on input row order. Mean training loss per epoch is appended to ``losses``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise EmptyDataset("no training rows")
    if ids is not None:
        order = np.argsort(np.asarray(ids), kind="stable")
        x, y = x[order], y[order]
    params = params.copy()
    n = len(y)
    for e in range(config.epochs):
        perm = epoch_order(n, config.seed, first_epoch + e)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = perm[start : start + config.batch_size]
            loss, grad = bce_loss_and_grad(params, x[batch], y[batch])
            total += loss * len(batch)
            for p, g in zip(params.arrays(), grad.arrays()):
                p -= config.learning_rate * g
        if losses is not None:
            losses.append(total / n)
    return params


def undersample(labels: np.ndarray, seed: int) -> np.ndarray:
    """Indices of a class-balanced subset: every minority row plus an equal-size
    seeded sample of the majority, returned in ascending index order."""
    labels = np.asarray(labels).astype(bool)
    pos, neg = np.flatnonzero(labels), np.flatnonzero(~labels)
    if len(pos) == 0 or len(neg) == 0:
        raise SingleClass(f"undersampling needs both classes ({len(pos)} positive, {len(neg)} negative)")
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    picked = np.random.default_rng(seed).choice(majority, size=len(minority), replace=False)
    return np.sort(np.concatenate([minority, picked]))


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0

    @classmethod
    def from_predictions(cls, pred: np.ndarray, labels: np.ndarray) -> Metrics:
        pred = np.asarray(pred).astype(bool)
        labels = np.asarray(labels).astype(bool)
        return cls(
            tp=int((pred & labels).sum()),
            fp=int((pred & ~labels).sum()),
            tn=int((~pred & ~labels).sum()),
            fn=int((~pred & labels).sum()),
        )

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "f1": self.f1, "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}

    @classmethod
    def from_dict(cls, d: dict) -> Metrics:
        return cls(int(d["tp"]), int(d["fp"]), int(d["tn"]), int(d["fn"]))


def evaluate(params: ModelParams, x: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> Metrics:
    """Confusion counts for predictions ``p >= threshold`` on standardized rows."""
    if len(labels) == 0:
        raise EmptyDataset("no evaluation rows")
    return Metrics.from_predictions(forward(params, np.atleast_2d(x)) >= threshold, labels)


@dataclass
class LocalModel:
    """A trained network together with the standardization it was trained under."""

    params: ModelParams
    standardizer: Standardizer
    losses: list[float] = field(default_factory=list)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return forward(self.params, self.standardizer.transform(np.atleast_2d(x)))


# ---------------------------------------------------------------- checkpoints


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save_checkpoint(path: str | Path, params: ModelParams, standardizer: Standardizer | None = None) -> None:
    """Text checkpoint: header, arch line, then one line per array (row-major)."""
    arch = params.arch
    lines = [CHECKPOINT_HEADER, "arch " + " ".join(str(s) for s in arch.sizes)]
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        lines.append(f"W{i} " + " ".join(_fmt(v) for v in w.ravel()))
        lines.append(f"b{i} " + " ".join(_fmt(v) for v in b.ravel()))
    if standardizer is not None:
        lines.append("mean " + " ".join(_fmt(v) for v in standardizer.mean))
        lines.append("std " + " ".join(_fmt(v) for v in standardizer.std))
        lines.append(f"log1p {int(standardizer.log1p)}")
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str | Path) -> tuple[ModelParams, Standardizer | None]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise ValidationError(f"{path}: not a model checkpoint")
    rows = {}
    for line in lines[1:]:
        name, _, rest = line.partition(" ")
        rows[name] = rest.split()
    sizes = [int(s) for s in rows["arch"]]
    arch = ModelArch(sizes[0], tuple(sizes[1:-1]))
    if sizes[-1] != 1:
        raise ValidationError(f"{path}: output layer must have width 1")
    arrays = []
    for i, (wshape, bshape) in enumerate(arch.shapes):
        for name, shape in ((f"W{i}", wshape), (f"b{i}", bshape)):
            vals = np.array([float(v) for v in rows.get(name, [])])
            if vals.size != math.prod(shape):
                raise DimensionMismatch(f"{path}: {name} has {vals.size} values, expected {math.prod(shape)}")
            arrays.append(vals.reshape(shape))
    std = None
    if "mean" in rows:
        std = Standardizer(
            np.array([float(v) for v in rows["mean"]]),
            np.array([float(v) for v in rows["std"]]),
            rows.get("log1p", ["1"]) == ["1"],
        )
    return ModelParams.from_arrays(arrays), std
