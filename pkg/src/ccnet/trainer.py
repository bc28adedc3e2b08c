"""Mini-batch SGD with momentum, flip augmentation and dropout.

A run is a pure function of ``(config.seed, data, config)``.  Random draws
come from a single xoshiro256** stream and are consumed in a fixed order
each epoch:

1. one permutation of the training set;
2. for every batch, in sample order, two uniforms per sample (horizontal
   flip, then vertical flip) when ``augment`` is on;
3. then the dropout masks for that batch: dropout1, dropout2, dropout3.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model as M
from .errors import InputError, NumericError
from .imaging import RgbImage, flip_horizontal, flip_vertical, to_batch
from .metrics import ConfusionMatrix, accuracy, confusion_matrix
from .rng import STREAM_TRAIN, make_rng
from .tensor import dtype_for

log = logging.getLogger(__name__)

Sample = Tuple[RgbImage, int]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 10
    seed: int = 42
    augment: bool = True
    precision: int = 32

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InputError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise InputError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise InputError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 0:
            raise InputError(f"epochs must be non-negative, got {self.epochs}")
        dtype_for(self.precision)


@dataclass
class EpochReport:
    epoch: int
    loss: float
    confusion: ConfusionMatrix
    seconds: float = field(default=0.0, compare=False)

    @property
    def accuracy(self) -> float:
        return accuracy(self.confusion)

    def to_json(self, timing: bool = False) -> dict:
        d = {"epoch": self.epoch, "loss": self.loss, **self.confusion.as_dict()}
        if timing:
            d["seconds"] = self.seconds
        return d


def augment_sample(image: RgbImage, rng) -> RgbImage:
    """Horizontal flip with probability 0.5, then vertical flip with probability 0.5."""
    flip_h = rng.random() < 0.5
    flip_v = rng.random() < 0.5
    if flip_h:
        image = flip_horizontal(image)
    if flip_v:
        image = flip_vertical(image)
    return image


def sgd_step(
    state: M.ModelState,
    grads: Dict[str, np.ndarray],
    velocity: Dict[str, np.ndarray],
    lr: float,
    momentum: float,
) -> Tuple[M.ModelState, Dict[str, np.ndarray]]:
    """``v <- momentum*v - lr*g``; ``theta <- theta + v``.  Returns new state and velocity."""
    new_params, new_velocity = {}, {}
    for name, theta in state.params.items():
        g = grads[name]
        if g.shape != theta.shape or velocity[name].shape != theta.shape:
            raise InputError(f"sgd_step: gradient/velocity shape mismatch for {name}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in layer {name.split('.')[0]} ({name})")
        dt = theta.dtype.type
        v = dt(momentum) * velocity[name] - dt(lr) * g.astype(theta.dtype, copy=False)
        new_velocity[name] = v
        new_params[name] = theta + v
    return M.ModelState(state.config, new_params), new_velocity


def zero_velocity(state: M.ModelState) -> Dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in state.params.items()}


def _check_images(state: M.ModelState, samples: Sequence[Sample], what: str) -> None:
    side = state.config.input_side
    for i, (img, label) in enumerate(samples):
        if (img.width, img.height) != (side, side):
            raise InputError(
                f"{what} sample {i} is {img.width}x{img.height}; the model expects {side}x{side}"
            )
        if label not in (0, 1):
            raise InputError(f"{what} sample {i} has invalid label {label!r}")


def evaluate(model, samples: Sequence[Sample], batch_size: int = 64) -> ConfusionMatrix:
    """Confusion matrix of eval-mode predictions.

    ``model`` is a :class:`~ccnet.model.ModelState` or any callable mapping
    a sample list to integer predictions.
    """
    if not samples:
        raise InputError("evaluate needs at least one sample")
    labels = [label for _, label in samples]
    if isinstance(model, M.ModelState):
        preds = []
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            x = to_batch([img for img, _ in chunk], model.dtype)
            preds.extend(int(p) for p in M.predict_labels(model, x, batch_size))
    else:
        preds = [int(p) for p in model(samples)]
    return confusion_matrix(labels, preds)


def train(
    state: M.ModelState,
    train_set: Sequence[Sample],
    val_set: Sequence[Sample],
    config: TrainConfig,
    on_epoch: Optional[Callable[[EpochReport], None]] = None,
) -> Tuple[M.ModelState, List[EpochReport]]:
    if not train_set or not val_set:
        raise InputError("train and validation sets must both be non-empty")
    _check_images(state, train_set, "training")
    _check_images(state, val_set, "validation")
    dtype = dtype_for(config.precision)
    state = state.astype(dtype)
    if config.epochs == 0:
        return state, []

    rng = make_rng(config.seed, STREAM_TRAIN)
    velocity = zero_velocity(state)
    reports: List[EpochReport] = []
    n = len(train_set)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = [train_set[int(i)] for i in order[start : start + config.batch_size]]
            images = [augment_sample(img, rng) if config.augment else img for img, _ in batch]
            labels = np.array([label for _, label in batch])
            x = to_batch(images, dtype)
            loss, grads = M.loss_and_grads(state, x, labels, train=True, rng=rng)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}, batch starting {start}")
            state, velocity = sgd_step(state, grads, velocity, config.learning_rate, config.momentum)
            total_loss += loss * len(batch)
        cm = evaluate(state, val_set)
        report = EpochReport(epoch, total_loss / n, cm, time.perf_counter() - t0)
        log.info("epoch %d loss %.4f val acc %.4f", epoch, report.loss, report.accuracy)
        reports.append(report)
        if on_epoch is not None:
            on_epoch(report)
    return state, reports
