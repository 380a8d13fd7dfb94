"""Online stochastic gradient descent with momentum and learning-rate decay.

The trainer is model-agnostic: anything exposing ``parameter_arrays()``
(name -> live numpy array) and ``loss_and_grads(example)`` (scalar loss plus
gradients under the same names) can be trained.  Updates are applied one
example at a time — no minibatching.

Schedule: at cumulative update count u (starting from 0, so the very first
step uses ``lr0`` exactly), the step size is ``lr0 / (1 + decay * u)``.
Heavy-ball momentum with zero-initialized velocity:
``velocity = momentum * velocity - lr_u * grad; param += velocity``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .numerics import Rng, derive_seed


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.09
    momentum: float = 0.09
    decay: float = 1e-4
    epochs: int = 14
    seed: int = 0
    shuffle_each_epoch: bool = True

    def validate(self) -> None:
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.momentum < 0 or self.decay < 0:
            raise ConfigError("momentum and decay must be >= 0")

    def to_dict(self) -> dict:
        return {
            "lr0": self.lr0,
            "momentum": self.momentum,
            "decay": self.decay,
            "epochs": self.epochs,
            "seed": self.seed,
            "shuffle_each_epoch": self.shuffle_each_epoch,
        }


def learning_rate(config: TrainConfig, update_count: int) -> float:
    """Step size at a given cumulative update count (0-based)."""
    return config.lr0 / (1.0 + config.decay * update_count)


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)
    updates: int = 0


def train(trainable, examples, config: TrainConfig, epoch_callback=None) -> TrainLog:
    """Run online SGD over the examples for ``config.epochs`` passes.

    Mutates the trainable's parameter arrays in place and returns the loss
    log.  Example order is reshuffled each epoch from a seeded stream when
    ``shuffle_each_epoch`` is set.  ``epoch_callback(epoch, mean_loss,
    trainable)``, when given, runs after every epoch — handy for validation
    diagnostics.  A non-finite loss aborts with the offending example's id.
    """
    config.validate()
    examples = list(examples)
    if not examples and config.epochs > 0:
        raise ConfigError("training needs at least one example")
    arrays = trainable.parameter_arrays()
    velocities = {name: np.zeros_like(arr) for name, arr in arrays.items()}
    shuffle_rng = Rng(derive_seed(config.seed, "epoch-shuffle"))
    log = TrainLog()

    for epoch in range(config.epochs):
        order = list(range(len(examples)))
        if config.shuffle_each_epoch:
            shuffle_rng.shuffle(order)
        epoch_loss = 0.0
        for position in order:
            example = examples[position]
            value, grads = trainable.loss_and_grads(example)
            if not math.isfinite(value):
                name_of = getattr(trainable, "example_id", None)
                label = name_of(example) if name_of else f"#{position}"
                raise NumericError(
                    f"non-finite loss {value!r} at epoch {epoch}, example {label}"
                )
            epoch_loss += value
            lr = learning_rate(config, log.updates)
            for name, arr in arrays.items():
                v = velocities[name]
                v *= config.momentum
                v -= lr * grads[name]
                arr += v
            log.updates += 1
        log.epoch_losses.append(epoch_loss / len(examples) if examples else 0.0)
        if epoch_callback is not None:
            epoch_callback(epoch, log.epoch_losses[-1], trainable)
    return log
