"""Minibatch training loop for :class:`CompactCNN`."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .model import CompactCNN, ModelConfig, project_max_norm
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes NaN or infinite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    val_split: float = 0.0
    seed: int = 0
    fused: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.val_split < 1.0:
            raise ValueError("val_split must be in [0, 1)")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: CompactCNN
    loss_curve: list[float] = field(default_factory=list)
    val_curve: list[float] = field(default_factory=list)


def _split(n: int, val_split: float, rng: np.random.Generator):
    order = rng.permutation(n)
    n_val = int(round(val_split * n))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def train(model_config: ModelConfig, X: np.ndarray, labels: np.ndarray,
          config: TrainConfig = TrainConfig(), callback=None) -> TrainResult:
    """Train from scratch on segments ``X (n, C, T)`` with integer ``labels``.

    Initialisation, per-epoch shuffling and dropout masks each draw from
    their own stream spawned from ``config.seed``, so runs are bit-identical
    for a fixed seed. The loss curve holds the sample-weighted mean training
    loss of every epoch. ``callback(epoch, loss)`` is called after each epoch.

    Raises:
        TrainingDivergedError: if any minibatch loss is not finite.
    """
    labels = np.asarray(labels)
    if len(X) != len(labels) or len(X) == 0:
        raise ValueError(f"need matching non-empty data/labels, got {len(X)} and {len(labels)}")
    if labels.min() < 0 or labels.max() >= model_config.n_classes:
        raise ValueError("labels out of range for the model's class count")
    init_ss, shuffle_ss, drop_ss, split_ss = np.random.SeedSequence(config.seed).spawn(4)
    model = CompactCNN(model_config, seed=init_ss)
    X = model._check_input(X)
    tr, va = _split(len(X), config.val_split, np.random.default_rng(split_ss))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)
    state = AdamState.for_params(model.params, lr=config.lr, beta1=config.beta1,
                                 beta2=config.beta2, eps=config.adam_eps)
    result = TrainResult(model)
    for epoch in range(config.epochs):
        perm = tr[shuffle_rng.permutation(len(tr))]
        total = 0.0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start:start + config.batch_size]
            loss, grads, stats = model.loss_and_grads(X[idx], labels[idx], drop_rng, config.fused)
            if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
                raise TrainingDivergedError(
                    f"non-finite loss/gradient at epoch {epoch}, batch starting {start} "
                    f"(loss={loss}); try a lower learning rate")
            adam_step(model.params, grads, state, project=project_max_norm)
            model.update_running_stats(stats)
            total += loss * len(idx)
        result.loss_curve.append(total / len(perm))
        if len(va):
            p = model.predict_proba(X[va])
            result.val_curve.append(L.cross_entropy(p, L.one_hot(labels[va], model_config.n_classes, p.dtype)))
        log.debug("epoch %d loss %.4f", epoch, result.loss_curve[-1])
        if callback is not None:
            callback(epoch, result.loss_curve[-1])
    return result
