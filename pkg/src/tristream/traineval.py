"""Loss, optimizers, the training loop, metrics and report / checkpoint formats."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .linalg import ShapeError, Tensor
from .model import Batch, ThreeStreamConfig, ThreeStreamModel

log = logging.getLogger(__name__)

# named random substreams derived from the root seed
SUBSTREAMS = {"split": 1, "augment": 2, "init": 3, "dropout": 4, "shuffle": 5}


def substream(seed: int, name: str, *counters: int) -> np.random.Generator:
    return np.random.default_rng([seed, SUBSTREAMS[name], *counters])


class TrainingDivergedError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# loss


def cross_entropy(probs: Tensor, label: int):
    """Loss ``-log p[label]`` and its gradient w.r.t. the logits, ``p - onehot``."""
    probs = np.asarray(probs)
    K = probs.shape[-1]
    if not 0 <= label < K:
        raise IndexError(f"label {label} out of range for {K} classes")
    grad = probs.copy()
    grad[label] -= 1.0
    return float(-np.log(probs[label])), grad


def batch_cross_entropy(probs: Tensor, labels: np.ndarray):
    """Mean loss over the batch and the matching logit gradient (already divided by B)."""
    B, K = probs.shape
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= K:
        raise IndexError(f"labels outside [0, {K})")
    picked = probs[np.arange(B), labels]
    with np.errstate(divide="ignore"):
        loss = float(-np.mean(np.log(picked)))
    grad = probs.copy()
    grad[np.arange(B), labels] -= 1.0
    return loss, grad / B


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 10

    def __post_init__(self):
        for name in ("learning_rate", "epochs", "batch_size", "patience", "adam_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, Tensor], grads: dict[str, Tensor]) -> None:
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ShapeError(f"{k}: gradient {g.shape} vs parameter {p.shape}")
            p -= self.lr * g

    def state_dict(self) -> dict:
        return {}

    def load_state_dict(self, state: dict) -> None:
        pass


class Adam:
    """Bias-corrected Adam."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, Tensor] = {}
        self.v: dict[str, Tensor] = {}

    def step(self, params: dict[str, Tensor], grads: dict[str, Tensor]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ShapeError(f"{k}: gradient {g.shape} vs parameter {p.shape}")
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)

    def state_dict(self) -> dict:
        out = {"t": self.t}
        for k in self.m:
            out[f"m.{k}"] = self.m[k]
            out[f"v.{k}"] = self.v[k]
        return out

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state.get("t", 0))
        for key, val in state.items():
            if key.startswith("m."):
                self.m[key[2:]] = np.array(val)
            elif key.startswith("v."):
                self.v[key[2:]] = np.array(val)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return SGD(config.learning_rate)
    return Adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps)


def optimizer_step(params, grads, state, config: TrainConfig):
    """Functional form: returns ``(params, state)`` with ``state`` an optimizer object (created if None)."""
    opt = state if state is not None else make_optimizer(config)
    opt.step(params, grads)
    return params, opt


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainResult:
    history: list[EpochRecord]
    steps: int
    stopped_early: bool = False
    optimizer: object = None


def iterate_batches(samples, batch_size, order, dtype):
    for i in range(0, len(order), batch_size):
        chunk = [samples[j] for j in order[i:i + batch_size]]
        yield Batch.from_samples(chunk, dtype)


def evaluate_loss_acc(model: ThreeStreamModel, samples, batch_size=32):
    if not samples:
        return float("nan"), float("nan")
    total_loss = 0.0
    correct = 0
    for batch in iterate_batches(samples, batch_size, range(len(samples)), model.config.dtype):
        probs = model.predict_proba(batch)
        loss, _ = batch_cross_entropy(probs, batch.labels)
        total_loss += loss * len(batch)
        correct += int((np.argmax(probs, axis=1) == batch.labels).sum())
    return total_loss / len(samples), correct / len(samples)


def train(model: ThreeStreamModel, train_set, val_set, config: TrainConfig,
          start_epoch: int = 0, optimizer=None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Mini-batch training with per-epoch seeded shuffling and early stopping on val accuracy."""
    if not train_set:
        raise ValueError("training set is empty")
    params = model.named_parameters()
    opt = optimizer if optimizer is not None else make_optimizer(config)
    history: list[EpochRecord] = []
    steps = 0
    best_acc, since_best = -1.0, 0
    stopped = False
    for epoch in range(start_epoch, start_epoch + config.epochs):
        order = substream(config.seed, "shuffle", epoch).permutation(len(train_set))
        drop_rng = substream(config.seed, "dropout", epoch)
        loss_sum, correct = 0.0, 0
        for bi, batch in enumerate(iterate_batches(train_set, config.batch_size, order, model.config.dtype)):
            probs, cache = model.forward(batch, train=True, rng=drop_rng)
            loss, dlogits = batch_cross_entropy(probs, batch.labels)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch + 1}, batch {bi}; "
                    f"min true-class probability {probs[np.arange(len(batch)), batch.labels].min():.3g}"
                )
            grads = model.backward(cache, dlogits)
            bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
            if bad:
                raise TrainingDivergedError(f"non-finite gradients at epoch {epoch + 1}: {bad[:3]}")
            opt.step(params, grads)
            steps += 1
            loss_sum += loss * len(batch)
            correct += int((np.argmax(probs, axis=1) == batch.labels).sum())
        val_loss, val_acc = evaluate_loss_acc(model, val_set) if val_set else (float("nan"), float("nan"))
        rec = EpochRecord(epoch + 1, loss_sum / len(train_set), correct / len(train_set), val_loss, val_acc)
        history.append(rec)
        log.info("epoch %d loss %.4f acc %.3f val_loss %.4f val_acc %.3f", rec.epoch,
                 rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc)
        if on_epoch:
            on_epoch(rec)
        if val_set:
            if val_acc > best_acc:
                best_acc, since_best = val_acc, 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    stopped = True
                    break
    return TrainResult(history, steps, stopped, opt)


def write_history(path, history: Sequence[EpochRecord]) -> None:
    with open(path, "w") as fh:
        fh.write("epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc\n")
        for r in history:
            fh.write(f"{r.epoch}\t{r.train_loss!r}\t{r.train_acc!r}\t{r.val_loss!r}\t{r.val_acc!r}\n")


def read_history(path) -> list[EpochRecord]:
    rows = Path(path).read_text().splitlines()[1:]
    out = []
    for line in rows:
        e, *vals = line.split("\t")
        out.append(EpochRecord(int(e), *(float(v) for v in vals)))
    return out


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (K, K), rows = true class, columns = predicted

    @classmethod
    def from_predictions(cls, y_true, y_pred, K: int) -> "ConfusionMatrix":
        counts = np.zeros((K, K), dtype=np.int64)
        np.add.at(counts, (np.asarray(y_true, int), np.asarray(y_pred, int)), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)


def predict(model: ThreeStreamModel, samples, batch_size: int = 32):
    """Argmax predictions (ties go to the lower class index) and probabilities."""
    preds, probs = [], []
    for batch in iterate_batches(samples, batch_size, range(len(samples)), model.config.dtype):
        p = model.predict_proba(batch)
        probs.append(p)
        preds.append(np.argmax(p, axis=1))
    return np.concatenate(preds), np.concatenate(probs)


def evaluate(model: ThreeStreamModel, samples, batch_size: int = 32) -> ConfusionMatrix:
    if not samples:
        raise ValueError("cannot evaluate an empty test set")
    preds, _ = predict(model, samples, batch_size)
    return ConfusionMatrix.from_predictions([s.label for s in samples], preds, model.config.K)


@dataclass
class ClassMetrics:
    name: str
    precision: float | None
    recall: float | None
    fscore: float | None
    accuracy: float | None  # per-class accuracy, reported as recall
    support: int = 0

    @property
    def defined(self) -> bool:
        return self.precision is not None


@dataclass
class MetricsReport:
    classes: list[ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_fscore: float
    macro_accuracy: float
    overall_accuracy: float | None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["classes"] = [ClassMetrics(**c) for c in d["classes"]]
        return cls(**d)


def fscore(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


def _macro(classes: list[ClassMetrics], overall, warns) -> MetricsReport:
    used = [c for c in classes if c.defined]
    if not used:
        raise ValueError("no class has defined metrics")
    mean = lambda attr: float(np.mean([getattr(c, attr) for c in used]))  # noqa: E731
    return MetricsReport(classes, mean("precision"), mean("recall"), mean("fscore"),
                         mean("accuracy"), overall, warns)


def compute_metrics(cm: ConfusionMatrix, class_names: Sequence[str] | None = None) -> MetricsReport:
    """Per-class precision / recall / F-score in percent, macro averages and overall accuracy."""
    counts = np.asarray(cm.counts)
    K = counts.shape[0]
    if counts.shape != (K, K) or cm.total == 0:
        raise ValueError("confusion matrix must be square and nonempty")
    names = list(class_names) if class_names is not None else [str(k) for k in range(K)]
    classes, warns = [], []
    for k in range(K):
        tp = counts[k, k]
        col, row = counts[:, k].sum(), counts[k, :].sum()
        fp, fn = col - tp, row - tp
        if row == 0 and col == 0:
            warns.append(f"class {names[k]!r} has no samples and no predictions; excluded from averages")
            classes.append(ClassMetrics(names[k], None, None, None, None, 0))
            continue
        p = 100.0 * tp / (tp + fp) if tp + fp else 0.0
        r = 100.0 * tp / (tp + fn) if tp + fn else 0.0
        if tp + fp == 0:
            warns.append(f"class {names[k]!r} is never predicted; precision set to 0")
        if tp + fn == 0:
            warns.append(f"class {names[k]!r} has no samples; recall set to 0")
        classes.append(ClassMetrics(names[k], p, r, fscore(p, r), r, int(row)))
    for w in warns:
        warnings.warn(w, stacklevel=2)
    return _macro(classes, 100.0 * cm.accuracy, warns)


def metrics_from_values(names, precision, recall, accuracy=None) -> MetricsReport:
    """Build a report from already-known per-class precision and recall (percent)."""
    accuracy = recall if accuracy is None else accuracy
    classes = [ClassMetrics(n, float(p), float(r), fscore(float(p), float(r)), float(a))
               for n, p, r, a in zip(names, precision, recall, accuracy)]
    return _macro(classes, None, [])


def _fmt(v):
    return "undefined" if v is None else f"{v:.2f}"


def report(metrics: MetricsReport, fmt: str = "text") -> str:
    """Serialize as a text table (``text``) or a JSON document (``json``)."""
    if fmt == "json":
        return json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    width = max(12, max(len(c.name) for c in metrics.classes) + 2)
    head = f"{'Gestures':<{width}}{'Precision (%)':>15}{'Recall (%)':>12}{'F-1 score (%)':>15}{'Accuracy (%)':>14}"
    lines = [head, "-" * len(head)]
    for c in metrics.classes:
        lines.append(f"{c.name:<{width}}{_fmt(c.precision):>15}{_fmt(c.recall):>12}"
                     f"{_fmt(c.fscore):>15}{_fmt(c.accuracy):>14}")
    lines.append("-" * len(head))
    lines.append(f"{'Average':<{width}}{_fmt(metrics.macro_precision):>15}{_fmt(metrics.macro_recall):>12}"
                 f"{_fmt(metrics.macro_fscore):>15}{_fmt(metrics.macro_accuracy):>14}")
    if metrics.overall_accuracy is not None:
        lines.append(f"Overall accuracy (trace / total): {metrics.overall_accuracy:.2f}%")
    lines.append("Per-class accuracy column = per-class recall.")
    for w in metrics.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> MetricsReport:
    return MetricsReport.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# checkpoints: header line, JSON metadata line, then raw little-endian tensors

CHECKPOINT_MAGIC = "TRISTREAM-CKPT v1"


def save_checkpoint(path, model: ThreeStreamModel, epoch: int = 0, optimizer=None,
                    extra: dict | None = None) -> None:
    tensors = dict(model.named_parameters())
    opt_state = optimizer.state_dict() if optimizer is not None else {}
    opt_t = opt_state.pop("t", 0)
    tensors.update({f"opt.{k}": v for k, v in opt_state.items()})
    listing = [{"name": k, "shape": list(v.shape), "dtype": np.dtype(v.dtype).str.replace(">", "<")}
               for k, v in tensors.items()]
    meta = {
        "format_version": 1,
        "package_version": __version__,
        "config": json.loads(model.config.to_json()),
        "model_seed": model.seed,
        "epoch": epoch,
        "optimizer": type(optimizer).__name__.lower() if optimizer is not None else None,
        "optimizer_t": opt_t,
        "tensors": listing,
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        fh.write((CHECKPOINT_MAGIC + "\n").encode())
        fh.write((json.dumps(meta, sort_keys=True) + "\n").encode())
        for item in listing:
            fh.write(np.ascontiguousarray(tensors[item["name"]], dtype=item["dtype"]).tobytes())


def load_checkpoint(path):
    """Returns ``(model, meta, optimizer_state)``."""
    raw = Path(path).read_bytes()
    first = raw.find(b"\n")
    if raw[:first].decode(errors="replace") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    second = raw.find(b"\n", first + 1)
    meta = json.loads(raw[first + 1:second])
    config = ThreeStreamConfig.from_dict(
        {k: tuple(v) if isinstance(v, list) else v for k, v in meta["config"].items()}
    )
    model = ThreeStreamModel(config, seed=meta.get("model_seed", 0))
    offset = second + 1
    values, opt_state = {}, {"t": meta.get("optimizer_t", 0)}
    for item in meta["tensors"]:
        dt = np.dtype(item["dtype"])
        n = int(np.prod(item["shape"])) * dt.itemsize
        arr = np.frombuffer(raw[offset:offset + n], dtype=dt).reshape(item["shape"]).copy()
        offset += n
        if item["name"].startswith("opt."):
            opt_state[item["name"][4:]] = arr
        else:
            values[item["name"]] = arr
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes after declared tensors")
    model.load_parameters(values)
    return model, meta, opt_state
