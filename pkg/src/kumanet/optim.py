"""SGD with classical momentum, weight decay, step schedules and early stopping.

Epochs are 0-based throughout. The learning rate is halved every
``lr_halving_period`` epochs; momentum jumps from ``momentum0`` to
``momentum_late`` at ``momentum_switch_epoch``.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .activations import ActivationKind, Kumaraswamy
from .model import Gradients, MlpParams

__all__ = [
    "TrainConfig",
    "Velocity",
    "DivergenceError",
    "lr_at",
    "momentum_at",
    "sgd_step",
    "EarlyStopState",
    "Decision",
    "early_stop_update",
]

LR_GRID = (0.001, 0.01, 0.1)
MOMENTUM_GRID = (0.0, 0.5)
WEIGHT_DECAY_GRID = (0.0, 1e-5, 1e-4)


@dataclass(frozen=True)
class TrainConfig:
    activation: ActivationKind = field(default_factory=lambda: Kumaraswamy(8.0, 30.0))
    lr0: float = 0.1
    momentum0: float = 0.5
    momentum_late: float = 0.9
    momentum_switch_epoch: int = 50
    weight_decay: float = 0.0
    batch_size: int = 100
    max_epochs: int = 100
    lr_halving_period: int = 10
    patience: int = 10
    seed: int = 1
    hidden_units: int = 500
    train_limit: Optional[int] = None

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        for name in ("momentum0", "momentum_late"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {value}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.batch_size < 1 or self.patience < 1 or self.hidden_units < 1:
            raise ValueError("batch_size, patience and hidden_units must all be >= 1")
        if self.max_epochs < 0 or self.lr_halving_period < 1:
            raise ValueError("max_epochs must be >= 0 and lr_halving_period >= 1")
        if self.train_limit is not None and self.train_limit < 1:
            raise ValueError(f"train_limit must be >= 1, got {self.train_limit}")

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "activation"}
        kind = self.activation
        out["activation"] = {"name": kind.name, "tag": kind.tag, "params": list(kind.params)}
        return out


class DivergenceError(ArithmeticError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class Velocity:
    vW: np.ndarray
    vc: np.ndarray
    vU: np.ndarray
    vd: np.ndarray

    @classmethod
    def zeros_like(cls, params: MlpParams) -> Velocity:
        return cls(*(np.zeros_like(a) for a in params.arrays()))


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 / 2 ** (epoch // cfg.lr_halving_period)


def momentum_at(cfg: TrainConfig, epoch: int) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.momentum0 if epoch < cfg.momentum_switch_epoch else cfg.momentum_late


def sgd_step(
    params: MlpParams,
    vel: Velocity,
    grads: Gradients,
    lr: float,
    momentum: float,
    weight_decay: float,
    *,
    epoch: Optional[int] = None,
    batch: Optional[int] = None,
) -> None:
    """Update ``params`` and ``vel`` in place.

    ``v <- momentum * v - lr * (g + weight_decay * p)`` then ``p <- p + v``;
    the decay term is applied to W and U only, never to the biases.
    """
    for g in grads.arrays():
        if not np.isfinite(g).all():
            where = "" if epoch is None else f" at epoch {epoch}" + ("" if batch is None else f", batch {batch}")
            raise DivergenceError(f"non-finite gradient{where}")
    triples = (
        (params.W, vel.vW, grads.dW, weight_decay),
        (params.c, vel.vc, grads.dc, 0.0),
        (params.U, vel.vU, grads.dU, weight_decay),
        (params.d, vel.vd, grads.dd, 0.0),
    )
    for p, v, g, wd in triples:
        step = g + wd * p if wd else g
        v *= momentum
        v -= lr * step
        p += v


class Decision(enum.Enum):
    CONTINUE = "continue"
    STOP = "stop"


@dataclass
class EarlyStopState:
    patience: int = 10
    best_val_error: float = math.inf
    best_epoch: int = -1
    best_params: Optional[MlpParams] = None
    epochs_since_best: int = 0


def early_stop_update(state: EarlyStopState, epoch: int, val_error: float, params: MlpParams) -> Decision:
    """Record one epoch's validation error.

    Only a strict improvement refreshes the snapshot; ties count as a
    non-improving epoch. Stops once ``patience`` epochs pass without one.
    """
    if val_error < state.best_val_error:
        state.best_val_error = val_error
        state.best_epoch = epoch
        state.best_params = params.copy()
        state.epochs_since_best = 0
    else:
        state.epochs_since_best = epoch - state.best_epoch
    return Decision.STOP if state.epochs_since_best >= state.patience else Decision.CONTINUE
