"""Batched gradient-descent training of every weight array at once.

One optimization step records a forward contraction plus loss on a tape,
runs the adjoint sweep, and feeds the resulting gradients to Adam. All
weight arrays (both boundaries, every bond core, the label core) are
updated simultaneously from the same pass; nothing is frozen or swept
one site at a time.
"""

import csv
import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Gradients, Tape, backward, model_gradients
from .contraction import Strategy, forward_batch, predict_batch
from .encoding import encode_batch
from .errors import ConfigError, ConsistencyError, NumericError
from .losses import cross_entropy_loss, mean_square_loss
from .model import MpsClassifier
from .tensor import DTYPE

__all__ = [
    "LossKind",
    "TrainConfig",
    "EpochMetrics",
    "AdamState",
    "init_adam",
    "adam_step",
    "batch_loss",
    "loss_and_gradients",
    "train",
    "evaluate",
    "write_metrics_csv",
    "METRICS_COLUMNS",
    "cross_entropy_loss",
    "mean_square_loss",
]

METRICS_COLUMNS = ("epoch", "train_loss", "train_acc", "test_loss", "test_acc", "seconds")


class LossKind(enum.Enum):
    CROSS_ENTROPY = "cross-entropy"
    MEAN_SQUARE = "mean-square"


@dataclass
class TrainConfig:
    """Knobs for one training run. Defaults follow common Adam practice."""

    learning_rate: float = 1e-4
    batch_size: int = 50
    epochs: int = 10
    loss_kind: LossKind = LossKind.CROSS_ENTROPY
    seed: int = 0
    strategy: Strategy = Strategy.PAIRWISE
    renormalize: bool = False
    threads: int | None = None
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.eval_batch_size < 1:
            raise ConfigError(f"eval_batch_size must be >= 1, got {self.eval_batch_size}")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    seconds: float

    def row(self) -> list:
        return [
            self.epoch,
            repr(self.train_loss),
            repr(self.train_acc),
            repr(self.test_loss),
            repr(self.test_acc),
            f"{self.seconds:.3f}",
        ]


# -- losses over a forward pass ---------------------------------------------


def _loss_node(tape: Tape, logits: np.ndarray, labels: np.ndarray, loss_kind: LossKind):
    if loss_kind is LossKind.CROSS_ENTROPY:
        return tape.cross_entropy(logits, labels)
    if loss_kind is LossKind.MEAN_SQUARE:
        return tape.mean_square(logits, labels)
    raise ConfigError(f"unknown loss kind {loss_kind!r}")


def batch_loss(
    model: MpsClassifier,
    feats: np.ndarray,
    labels: np.ndarray,
    loss_kind: LossKind = LossKind.CROSS_ENTROPY,
    strategy: Strategy = Strategy.PAIRWISE,
    renormalize: bool = False,
) -> float:
    """Loss of one encoded batch, no gradients."""
    logits = forward_batch(model, feats, strategy, renormalize=renormalize)
    if loss_kind is LossKind.CROSS_ENTROPY:
        return cross_entropy_loss(logits, labels)
    if loss_kind is LossKind.MEAN_SQUARE:
        return mean_square_loss(logits, labels)
    raise ConfigError(f"unknown loss kind {loss_kind!r}")


def loss_and_gradients(
    model: MpsClassifier,
    feats: np.ndarray,
    labels: np.ndarray,
    loss_kind: LossKind = LossKind.CROSS_ENTROPY,
    strategy: Strategy = Strategy.PAIRWISE,
    renormalize: bool = False,
    threads: int | None = None,
) -> tuple[float, Gradients]:
    """Taped forward + loss, then the reverse sweep. Returns (loss, gradients)."""
    tape = Tape()
    tape.watch_model(model)
    logits = forward_batch(
        model, feats, strategy, tape=tape, renormalize=renormalize, threads=threads
    )
    loss = _loss_node(tape, logits, labels, loss_kind)
    adjoints = backward(tape)
    return float(loss), model_gradients(adjoints, model)


# -- Adam ---------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators per weight array, plus the step count."""

    beta1: float
    beta2: float
    eps: float
    step_count: int
    m: dict = field(repr=False, default_factory=dict)
    v: dict = field(repr=False, default_factory=dict)


def init_adam(
    model: MpsClassifier, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
) -> AdamState:
    state = AdamState(beta1=beta1, beta2=beta2, eps=eps, step_count=0)
    for name, arr in model.parameters():
        state.m[name] = np.zeros_like(arr)
        state.v[name] = np.zeros_like(arr)
    return state


def adam_step(
    model: MpsClassifier, grads: Gradients, state: AdamState, learning_rate: float
) -> None:
    """One in-place Adam update of every weight array.

    Bias-corrected moments; the eps sits outside the square root, so the
    magnitude of any single update is bounded by roughly the learning rate.
    """
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    grad_by_name = dict(grads.arrays())
    for name, param in model.parameters():
        g = grad_by_name[name]
        if g.shape != param.shape:
            raise ConsistencyError(
                f"gradient shape {g.shape} does not match parameter {name!r} {param.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        param -= learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


# -- training loop -------------------------------------------------------------


def evaluate(
    model: MpsClassifier,
    feats: np.ndarray,
    labels: np.ndarray,
    loss_kind: LossKind = LossKind.CROSS_ENTROPY,
    batch_size: int = 256,
    strategy: Strategy = Strategy.PAIRWISE,
    renormalize: bool = False,
) -> tuple[float, float]:
    """(mean loss, accuracy) over an encoded set, evaluated in batches."""
    count = feats.shape[0]
    loss_sum = 0.0
    correct = 0
    for start in range(0, count, batch_size):
        fb = feats[start : start + batch_size]
        lb = labels[start : start + batch_size]
        logits = forward_batch(model, fb, strategy, renormalize=renormalize)
        if loss_kind is LossKind.CROSS_ENTROPY:
            loss_sum += cross_entropy_loss(logits, lb) * fb.shape[0]
        else:
            loss_sum += mean_square_loss(logits, lb) * fb.shape[0]
        correct += int((predict_batch(logits) == lb).sum())
    return loss_sum / count, correct / count


def train(
    model: MpsClassifier,
    train_set,
    test_set,
    config: TrainConfig,
    on_epoch=None,
) -> list[EpochMetrics]:
    """Run Adam for ``config.epochs`` epochs, mutating ``model`` in place.

    ``train_set``/``test_set`` carry raw normalized pixels ([count, N]) and
    integer labels; features are encoded once up front. Batch order is
    reshuffled each epoch from a generator seeded by ``config.seed``, so a
    rerun with the same seed retraces the identical arithmetic. Per-batch
    training logits double as the running train-accuracy count, so the
    train columns reflect the model as it moved, while test columns
    evaluate the post-epoch model.
    """
    rng = np.random.default_rng(config.seed)
    train_feats = encode_batch(model.feature_map, train_set.images)
    train_labels = np.asarray(train_set.labels)
    test_feats = encode_batch(model.feature_map, test_set.images)
    test_labels = np.asarray(test_set.labels)
    count = train_feats.shape[0]

    adam = init_adam(model)
    history: list[EpochMetrics] = []
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(count)
        loss_sum = 0.0
        correct = 0
        for batch_index, start in enumerate(range(0, count, config.batch_size)):
            pick = order[start : start + config.batch_size]
            fb = train_feats[pick]
            lb = train_labels[pick]
            tape = Tape()
            tape.watch_model(model)
            try:
                logits = forward_batch(
                    model,
                    fb,
                    config.strategy,
                    tape=tape,
                    renormalize=config.renormalize,
                    threads=config.threads,
                )
                loss = float(_loss_node(tape, logits, lb, config.loss_kind))
            except NumericError as exc:
                raise NumericError(
                    f"epoch {epoch}, batch {batch_index}: {exc}"
                ) from exc
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}"
                )
            grads = model_gradients(backward(tape), model).check_finite()
            adam_step(model, grads, adam, config.learning_rate)
            loss_sum += loss * fb.shape[0]
            correct += int((predict_batch(logits) == lb).sum())
        test_loss, test_acc = evaluate(
            model,
            test_feats,
            test_labels,
            loss_kind=config.loss_kind,
            batch_size=config.eval_batch_size,
            strategy=config.strategy,
            renormalize=config.renormalize,
        )
        metrics = EpochMetrics(
            epoch=epoch,
            train_loss=loss_sum / count,
            train_acc=correct / count,
            test_loss=test_loss,
            test_acc=test_acc,
            seconds=time.perf_counter() - started,
        )
        history.append(metrics)
        if on_epoch is not None:
            on_epoch(metrics)
    return history


def write_metrics_csv(path, history: list[EpochMetrics]) -> None:
    """Write one header row plus one row per epoch.

    Numeric cells use ``repr`` (shortest round-trip form), so two runs that
    performed identical arithmetic produce identical bytes everywhere except
    the seconds column.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for metrics in history:
            writer.writerow(metrics.row())
