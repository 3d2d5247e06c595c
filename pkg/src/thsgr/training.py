"""Adam optimizer, the training loop, and evaluation metrics (overall
accuracy, Cohen's kappa, per-class accuracy)."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, backward
from .errors import DataError
from .head import cross_entropy
from .preprocess import ModalSample

__all__ = [
    "Adam",
    "TrainConfig",
    "TrainResult",
    "EvalReport",
    "stack_samples",
    "train",
    "evaluate",
    "evaluate_predictions",
]


class Adam:
    """Bias-corrected Adam with decoupled weight decay.

    The decay factor multiplies the parameter directly (p -= lr * wd * p)
    rather than entering the moment estimates.  Parameters whose grad is
    unset are skipped.
    """

    def __init__(self, params, lr: float = 0.01, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.001):
        self.params = [t for _, t in params] if all(
            isinstance(p, tuple) for p in params) else list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros(p.shape) for p in self.params]
        self.v = [np.zeros(p.shape) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / b1c
            v_hat = self.v[i] / b2c
            update = m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data = p.data - self.lr * update

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 0.001
    batch_size: int = 256
    epochs: int = 200
    seed: int = 0


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,loss,acc\n")
        for i, (loss, acc) in enumerate(zip(self.losses, self.accuracies), 1):
            buf.write(f"{i},{loss:.10f},{acc:.10f}\n")
        return buf.getvalue()


def stack_samples(samples: list[ModalSample]):
    """Samples -> (x_h (B, C_p, k, k), x_l (B, C_L, k, k), labels (B,))."""
    if not samples:
        raise DataError("empty sample list")
    x_h = np.stack([s.x_h.transpose(2, 0, 1) for s in samples])
    x_l = np.stack([s.x_l.transpose(2, 0, 1) for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return x_h, x_l, labels


def train(model, samples: list[ModalSample], config: TrainConfig) -> TrainResult:
    """Seeded mini-batch training; records per-epoch mean loss and the
    accuracy of the training-time predictions."""
    x_h, x_l, labels = stack_samples(samples)
    n = len(samples)
    rng = np.random.default_rng(config.seed)
    opt = Adam(list(model.parameters()), lr=config.lr,
               weight_decay=config.weight_decay)
    result = TrainResult()
    for _ in range(config.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            logits = model.forward(Tensor(x_h[idx]), Tensor(x_l[idx]),
                                   training=True)
            loss = cross_entropy(logits, labels[idx])
            opt.zero_grad()
            backward(loss)
            opt.step()
            loss_sum += loss.item() * len(idx)
            correct += int(np.sum(np.argmax(logits.data, axis=1) == labels[idx]))
        result.losses.append(loss_sum / n)
        result.accuracies.append(correct / n)
    return result


@dataclass
class EvalReport:
    """Confusion matrix (rows = truth, cols = prediction) and the derived
    agreement statistics."""

    confusion: np.ndarray
    oa: float
    kappa: float
    per_class: list[float]

    @classmethod
    def from_confusion(cls, confusion: np.ndarray) -> "EvalReport":
        confusion = np.asarray(confusion, dtype=np.int64)
        total = confusion.sum()
        if total == 0:
            raise DataError("empty confusion matrix")
        p_o = np.trace(confusion) / total
        rows = confusion.sum(axis=1)
        cols = confusion.sum(axis=0)
        p_e = float(rows @ cols) / (total * total)
        if p_e >= 1.0:
            # all mass in one cell: perfect single-class agreement is 1,
            # anything else is chance level
            kappa = 1.0 if p_o == 1.0 else 0.0
        else:
            kappa = (p_o - p_e) / (1.0 - p_e)
        per_class = [confusion[i, i] / rows[i] if rows[i] else 0.0
                     for i in range(confusion.shape[0])]
        return cls(confusion=confusion, oa=float(p_o), kappa=float(kappa),
                   per_class=per_class)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"oa,{self.oa:.10f}\n")
        buf.write(f"kappa,{self.kappa:.10f}\n")
        for i, acc in enumerate(self.per_class, 1):
            buf.write(f"class_{i}_acc,{acc:.10f}\n")
        buf.write("confusion\n")
        for row in self.confusion:
            buf.write(",".join(str(int(v)) for v in row) + "\n")
        return buf.getvalue()


def evaluate_predictions(truth: np.ndarray, predicted: np.ndarray,
                         n_classes: int) -> EvalReport:
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(truth, predicted):
        confusion[t, p] += 1
    return EvalReport.from_confusion(confusion)


def evaluate(model, samples: list[ModalSample],
             batch_size: int = 256) -> EvalReport:
    """Eval-mode confusion matrix over a sample list."""
    x_h, x_l, labels = stack_samples(samples)
    predicted = model.predict(x_h, x_l, batch_size=batch_size)
    return evaluate_predictions(labels, predicted, model.config.n_classes)
