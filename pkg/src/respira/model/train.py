"""Seeded training loop with early stopping on a validation monitor."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import DataError, NumericalError, UsageError
from .layers import Activation
from .optim import OPTIMIZER_KINDS, make_optimizer
from .vae import RECONSTRUCTION_KINDS, Architecture, Vae

MIN_DELTA = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    reconstruction_loss: str = "mse"
    optimizer: str = "adam"
    learning_rate: float = 1e-4
    max_epochs: int = 1000
    patience: int = 10
    batch_size: int = 32
    hidden_activation: str = "relu"
    output_activation: str = "linear"
    dropout_rate: float = 0.3
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if self.reconstruction_loss not in RECONSTRUCTION_KINDS:
            raise UsageError(f"reconstruction_loss must be one of {RECONSTRUCTION_KINDS}")
        if self.optimizer not in OPTIMIZER_KINDS:
            raise UsageError(f"optimizer must be one of {OPTIMIZER_KINDS}")
        if self.hidden_activation not in Activation.NAMES:
            raise UsageError(f"hidden_activation must be one of {Activation.NAMES}")
        if self.output_activation not in ("linear", "sigmoid"):
            raise UsageError("output_activation must be linear or sigmoid")
        if self.learning_rate <= 0:
            raise UsageError("learning_rate must be positive")
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise UsageError("max_epochs, patience and batch_size must be >= 1")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise UsageError("dropout_rate must lie in [0, 1)")
        return self

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    monitor_loss: float


@dataclass
class History:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


class EarlyStopper:
    """Stop after `patience` consecutive epochs without an improvement of at
    least `min_delta` over the best monitored value."""

    def __init__(self, patience: int, min_delta: float = MIN_DELTA):
        self.patience = patience
        self.min_delta = min_delta
        self.best = np.inf
        self.bad_epochs = 0

    def update(self, value: float) -> bool:
        """Record one monitor value; returns True when it improved."""
        if value <= self.best - self.min_delta:
            self.best = value
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


def eval_loss(vae: Vae, x: np.ndarray, kind: str, chunk: int = 64) -> float:
    """Eval-mode batch loss (z = mu, running batch-norm statistics)."""
    total = 0.0
    for i in range(0, len(x), chunk):
        part = vae.loss(x[i : i + chunk], kind=kind, mode="eval")
        total += part.total * len(x[i : i + chunk])
    return total / len(x)


def train(
    train_x: np.ndarray,
    val_x: np.ndarray | None,
    arch: Architecture,
    config: TrainConfig,
    dtype=np.float32,
) -> tuple[Vae, History]:
    """Train a VAE on normal-only features.

    train_x / val_x are stacked standardized features, shape (N, 1, H, W);
    val_x holds the normal validation cycles used as the early-stopping
    monitor (train_x doubles as the monitor set when val_x is empty).
    Returns the parameters of the best-monitor epoch.
    """
    config.validate()
    if train_x is None or len(train_x) == 0:
        raise DataError("cannot train on an empty train set")
    monitor_x = val_x if val_x is not None and len(val_x) > 0 else train_x
    kind = config.reconstruction_loss

    rng = np.random.default_rng(config.seed)
    vae = Vae(
        arch,
        hidden_activation=config.hidden_activation,
        output_activation=config.output_activation,
        dropout_rate=config.dropout_rate,
        rng=rng,
        dtype=dtype,
    )
    params = vae.named_params()
    opt = make_optimizer(config.optimizer, config.learning_rate)
    stopper = EarlyStopper(config.patience)
    history = History()
    best_state = vae.state_snapshot()
    history.best_epoch = 0

    n = len(train_x)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        running = 0.0
        for start in range(0, n, config.batch_size):
            batch = train_x[order[start : start + config.batch_size]]
            try:
                parts, grads = vae.loss_and_grads(batch, rng, kind=kind)
            except NumericalError as exc:
                raise NumericalError(
                    f"epoch {epoch}, batch at {start}: {exc} "
                    f"(optimizer={config.optimizer}, lr={config.learning_rate})"
                ) from exc
            opt.step(params, grads)
            running += parts.total * len(batch)
        train_loss = running / n
        monitor = eval_loss(vae, monitor_x, kind)
        if not np.isfinite(monitor):
            raise NumericalError(f"epoch {epoch}: non-finite monitor loss {monitor}")
        history.epochs.append(EpochRecord(epoch, train_loss, monitor))
        if stopper.update(monitor):
            best_state = vae.state_snapshot()
            history.best_epoch = epoch
        if stopper.should_stop:
            history.stopped_early = True
            break

    vae.load_state(best_state)
    return vae, history
