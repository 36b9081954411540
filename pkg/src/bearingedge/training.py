"""Training loop, plateau learning-rate schedule, evaluation, ablations."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import network
from .errors import DivergedLoss, EmptySplit
from .model import (
    ACT_RELU,
    ACT_TANH,
    Architecture,
    ModelParams,
    init_params,
    with_activation,
)
from .signal import NUM_CLASSES, Dataset
from .tensor import ConvKernel, DenseWeights

IMPROVEMENT_THRESHOLD = 1e-4  # below this a metric change counts as noise


@dataclass(frozen=True)
class ReduceLRConfig:
    """Reduce-on-plateau schedule settings."""

    monitor: str = "val_loss"  # or "val_accuracy"
    factor: float = 0.5
    patience: int = 3
    min_lr: float = 1e-5

    def __post_init__(self):
        if self.monitor not in ("val_loss", "val_accuracy"):
            raise ValueError(f"unknown monitor {self.monitor!r}")
        if not 0.0 < self.factor < 1.0:
            raise ValueError("factor must be in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    base_lr: float = 1e-3
    optimizer: str = "adam"  # or "sgd-momentum"
    schedule: ReduceLRConfig | None = field(default_factory=ReduceLRConfig)
    activation: str = ACT_TANH
    seed: int = 0
    train_frac: float = 0.7
    val_frac: float = 0.15
    test_frac: float = 0.15

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.optimizer not in ("adam", "sgd-momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.activation not in (ACT_TANH, ACT_RELU):
            raise ValueError(f"unknown activation {self.activation!r}")
        if abs(self.train_frac + self.val_frac + self.test_frac - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if self.schedule is not None and self.schedule.min_lr >= self.base_lr:
            raise ValueError("min_lr must be below base_lr")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass(frozen=True)
class TrainReport:
    records: tuple[EpochRecord, ...]
    best_val_accuracy: float
    best_epoch: int
    wall_seconds_per_epoch: float

    def val_accuracies(self) -> np.ndarray:
        return np.array([r.val_acc for r in self.records])


@dataclass(frozen=True)
class ReduceLRState:
    lr: float
    best_metric: float
    stale_epochs: int


def reduce_lr_start(cfg: ReduceLRConfig, base_lr: float) -> ReduceLRState:
    best = np.inf if cfg.monitor == "val_loss" else -np.inf
    return ReduceLRState(lr=base_lr, best_metric=best, stale_epochs=0)


def reduce_lr_step(state: ReduceLRState, cfg: ReduceLRConfig,
                   value: float) -> ReduceLRState:
    """Advance the plateau schedule with this epoch's monitored value.

    The rate drops by ``factor`` (clamped at ``min_lr``) once the metric has
    failed to improve by more than the threshold for ``patience`` consecutive
    epochs; any improvement resets the patience counter.
    """
    if cfg.monitor == "val_loss":
        improved = state.best_metric - value > IMPROVEMENT_THRESHOLD
    else:
        improved = value - state.best_metric > IMPROVEMENT_THRESHOLD
    if improved:
        return ReduceLRState(state.lr, value, 0)
    stale = state.stale_epochs + 1
    if stale >= cfg.patience:
        return ReduceLRState(max(state.lr * cfg.factor, cfg.min_lr),
                             state.best_metric, 0)
    return ReduceLRState(state.lr, state.best_metric, stale)


class _Adam:
    def __init__(self, params: ModelParams, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [self._zeros(p) for p in params.layers]
        self.v = [self._zeros(p) for p in params.layers]

    @staticmethod
    def _zeros(entry):
        if entry is None:
            return None
        return (np.zeros_like(entry.weights), np.zeros_like(entry.bias))

    def step(self, params: ModelParams, grads, lr: float) -> ModelParams:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        new_layers = []
        for entry, grad, m, v in zip(params.layers, grads, self.m, self.v):
            if entry is None:
                new_layers.append(None)
                continue
            dw, db = grad
            updated = []
            for value, g, m_arr, v_arr in ((entry.weights, dw, m[0], v[0]),
                                           (entry.bias, db, m[1], v[1])):
                m_arr *= self.beta1
                m_arr += (1.0 - self.beta1) * g
                v_arr *= self.beta2
                v_arr += (1.0 - self.beta2) * np.square(g)
                step = lr * (m_arr / c1) / (np.sqrt(v_arr / c2) + self.eps)
                updated.append(value - step)
            if isinstance(entry, ConvKernel):
                new_layers.append(ConvKernel(updated[0], updated[1], entry.stride))
            else:
                new_layers.append(DenseWeights(updated[0], updated[1]))
        return ModelParams(tuple(new_layers))


class _Momentum:
    def __init__(self, params: ModelParams, mu=0.9):
        self.mu = mu
        self.vel = [_Adam._zeros(p) for p in params.layers]

    def step(self, params: ModelParams, grads, lr: float) -> ModelParams:
        new_layers = []
        for entry, grad, vel in zip(params.layers, grads, self.vel):
            if entry is None:
                new_layers.append(None)
                continue
            dw, db = grad
            updated = []
            for value, g, v_arr in ((entry.weights, dw, vel[0]),
                                    (entry.bias, db, vel[1])):
                v_arr *= self.mu
                v_arr -= lr * g
                updated.append(value + v_arr)
            if isinstance(entry, ConvKernel):
                new_layers.append(ConvKernel(updated[0], updated[1], entry.stride))
            else:
                new_layers.append(DenseWeights(updated[0], updated[1]))
        return ModelParams(tuple(new_layers))


def _accumulate(total, grads):
    if total is None:
        return [g if g is None else [g[0].copy(), g[1].copy()] for g in grads]
    for slot, grad in zip(total, grads):
        if grad is not None:
            slot[0] += grad[0]
            slot[1] += grad[1]
    return total


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    mean_loss: float
    confusion: np.ndarray  # (NUM_CLASSES, NUM_CLASSES), true class by row


def evaluate(params: ModelParams, arch: Architecture, frames) -> EvalResult:
    """Argmax accuracy, mean cross-entropy, and the 10x10 confusion matrix."""
    frames = list(frames)
    if not frames:
        raise EmptySplit("no frames to evaluate")
    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    correct = 0
    loss_sum = 0.0
    for frame in frames:
        if frame.label is None:
            raise ValueError("evaluation frames must be labeled")
        probs = network.forward(arch, params, frame.values)
        pred = int(np.argmax(probs))
        confusion[frame.label.id, pred] += 1
        correct += int(pred == frame.label.id)
        loss_sum += -float(np.log(max(float(probs[frame.label.id]), 1e-300)))
    return EvalResult(
        accuracy=correct / len(frames),
        mean_loss=loss_sum / len(frames),
        confusion=confusion,
    )


def train(dataset: Dataset, arch: Architecture,
          cfg: TrainConfig) -> tuple[ModelParams, TrainReport]:
    """Mini-batch training; returns the best-validation-epoch parameters.

    Frames inside each batch are processed serially in shuffle order and
    their gradients averaged, so a fixed seed reproduces every update
    bit-for-bit. Raises DivergedLoss the moment a batch loss goes non-finite.
    """
    if not dataset.split.train or not dataset.split.validation:
        raise EmptySplit("dataset needs non-empty train and validation splits")
    arch = with_activation(arch, cfg.activation)
    train_frames = dataset.subset(dataset.split.train)
    val_frames = dataset.subset(dataset.split.validation)

    params = init_params(arch, cfg.seed)
    optimizer = _Adam(params) if cfg.optimizer == "adam" else _Momentum(params)
    lr_state = (reduce_lr_start(cfg.schedule, cfg.base_lr)
                if cfg.schedule else None)
    lr = cfg.base_lr

    records: list[EpochRecord] = []
    best_acc = -1.0
    best_epoch = 0
    best_params = params.copy()
    epoch_seconds: list[float] = []

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(
            len(train_frames))
        loss_sum = 0.0
        correct = 0
        for batch_start in range(0, len(order), cfg.batch_size):
            batch = order[batch_start:batch_start + cfg.batch_size]
            total = None
            batch_loss = 0.0
            for idx in batch:
                frame = train_frames[int(idx)]
                probs, cache = network.forward(arch, params, frame.values,
                                               want_cache=True)
                loss, grads = network.backward(arch, params, cache,
                                               frame.label.id)
                total = _accumulate(total, grads)
                batch_loss += loss
                correct += int(np.argmax(probs) == frame.label.id)
            if not np.isfinite(batch_loss):
                raise DivergedLoss(
                    f"non-finite loss in epoch {epoch}; lr={lr:g}"
                )
            scale = 1.0 / len(batch)
            mean_grads = [
                None if g is None else (g[0] * scale, g[1] * scale)
                for g in total
            ]
            params = optimizer.step(params, mean_grads, lr)
            loss_sum += batch_loss

        val = evaluate(params, arch, val_frames)
        records.append(EpochRecord(
            epoch=epoch,
            lr=lr,
            train_loss=loss_sum / len(order),
            train_acc=correct / len(order),
            val_loss=val.mean_loss,
            val_acc=val.accuracy,
        ))
        if val.accuracy > best_acc:
            best_acc = val.accuracy
            best_epoch = epoch
            best_params = params.copy()
        if lr_state is not None:
            monitored = (val.mean_loss if cfg.schedule.monitor == "val_loss"
                         else val.accuracy)
            lr_state = reduce_lr_step(lr_state, cfg.schedule, monitored)
            lr = lr_state.lr
        epoch_seconds.append(time.perf_counter() - t0)

    report = TrainReport(
        records=tuple(records),
        best_val_accuracy=best_acc,
        best_epoch=best_epoch,
        wall_seconds_per_epoch=float(np.mean(epoch_seconds)),
    )
    return best_params, report


@dataclass(frozen=True)
class AblationEntry:
    name: str
    activation: str
    scheduled: bool
    report: TrainReport
    oscillation: float


@dataclass(frozen=True)
class AblationReport:
    entries: tuple[AblationEntry, ...]

    def entry(self, name: str) -> AblationEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def best_name(self) -> str:
        return max(self.entries, key=lambda e: e.report.best_val_accuracy).name


def oscillation_metric(report: TrainReport) -> float:
    """Std-dev of epoch-to-epoch validation accuracy differences."""
    acc = report.val_accuracies()
    if len(acc) < 2:
        return 0.0
    return float(np.std(np.diff(acc)))


ABLATION_GRID = (
    ("relu", ACT_RELU, False),
    ("tanh", ACT_TANH, False),
    ("relu+reduce-lr", ACT_RELU, True),
    ("tanh+reduce-lr", ACT_TANH, True),
)


def ablation_suite(dataset: Dataset, arch: Architecture,
                   base: TrainConfig) -> AblationReport:
    """Train the four activation x schedule variants on identical splits."""
    entries = []
    for name, activation, scheduled in ABLATION_GRID:
        cfg = replace(
            base,
            activation=activation,
            schedule=(base.schedule or ReduceLRConfig()) if scheduled else None,
        )
        _, report = train(dataset, arch, cfg)
        entries.append(AblationEntry(
            name=name,
            activation=activation,
            scheduled=scheduled,
            report=report,
            oscillation=oscillation_metric(report),
        ))
    return AblationReport(tuple(entries))


METRICS_HEADER = "epoch,lr,train_loss,train_acc,val_loss,val_acc"


def write_metrics_csv(report: TrainReport, path) -> None:
    lines = [METRICS_HEADER]
    for r in report.records:
        lines.append(
            f"{r.epoch},{r.lr:.8g},{r.train_loss:.8g},{r.train_acc:.8g},"
            f"{r.val_loss:.8g},{r.val_acc:.8g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def parse_train_config(path) -> TrainConfig:
    """Read a flat key=value config file; unknown keys are rejected."""
    values: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {line!r} is not key=value")
        values[key.strip()] = value.strip()

    known = {"epochs", "batch_size", "base_lr", "optimizer", "activation",
             "seed", "train_frac", "val_frac", "test_frac", "schedule",
             "monitor", "factor", "patience", "min_lr"}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    schedule: ReduceLRConfig | None = ReduceLRConfig(
        monitor=values.get("monitor", "val_loss"),
        factor=float(values.get("factor", 0.5)),
        patience=int(values.get("patience", 3)),
        min_lr=float(values.get("min_lr", 1e-5)),
    )
    if values.get("schedule", "on").lower() in ("off", "none", "false", "0"):
        schedule = None
    return TrainConfig(
        epochs=int(values.get("epochs", 30)),
        batch_size=int(values.get("batch_size", 32)),
        base_lr=float(values.get("base_lr", 1e-3)),
        optimizer=values.get("optimizer", "adam"),
        schedule=schedule,
        activation=values.get("activation", ACT_TANH),
        seed=int(values.get("seed", 0)),
        train_frac=float(values.get("train_frac", 0.7)),
        val_frac=float(values.get("val_frac", 0.15)),
        test_frac=float(values.get("test_frac", 0.15)),
    )
