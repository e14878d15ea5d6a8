"""
Losses, the unoccupied-voxel weight schedule, SGD with momentum, and the
training phases: block auto-encoder, stacked completion network with a
frozen-then-released decoder, the low-resolution direct model, and
fine-tuning on a second store.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import codec
from .codec import AutoEncoder
from .dataset import SampleStore
from .errors import DimensionError, ResolutionError, StateError, TrainingError, VariantError
from .model import HIGH_RES, LOW_RES, CompletionModel, to_output
from .neural import Gradient, ParamGroup

log = logging.getLogger(__name__)

EPS = 1e-7
S_MIN = 1e-3


@dataclass(frozen=True)
class ImbalanceSchedule:
    """Weight of unoccupied voxels: starts at ``s0`` and ramps linearly to 1."""

    s0: float
    ramp_epochs: int = 200
    s_min: float = S_MIN

    def weight_at(self, epoch: int) -> float:
        return weight_at(self, epoch)


def weight_at(schedule: ImbalanceSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    s0 = max(schedule.s0, schedule.s_min)
    if schedule.ramp_epochs <= 0:
        return 1.0
    frac = min(1.0, epoch / schedule.ramp_epochs)
    return s0 + (1.0 - s0) * frac


def occupancy_ratio(targets, s_min: float = S_MIN) -> float:
    """Pooled #occupied / #unoccupied over all targets, clamped below by ``s_min``.

    ``targets`` is a SampleStore or an array of binary grids/blocks.
    """
    if isinstance(targets, SampleStore):
        if not targets.records:
            raise ValueError("occupancy ratio of an empty store")
        occupied = sum(int(r.target.sum()) for r in targets.records)
        total = sum(r.target.size for r in targets.records)
    else:
        targets = np.asarray(targets)
        if targets.size == 0:
            raise ValueError("occupancy ratio of an empty target set")
        occupied = int(np.count_nonzero(targets))
        total = targets.size
    unoccupied = total - occupied
    if unoccupied == 0:
        return 1.0
    return max(occupied / unoccupied, s_min)


def weighted_bce(pred: np.ndarray, target: np.ndarray, w_unocc: float):
    """Mean of -[y ln p + w (1-y) ln(1-p)] and its gradient with respect to ``pred``.

    Predictions are clamped to [EPS, 1-EPS]; the gradient is evaluated at the
    clamped value so saturated wrong predictions still get pushed back.
    """
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} != target shape {target.shape}")
    p = np.clip(pred, EPS, 1.0 - EPS)
    y = target.astype(p.dtype, copy=False)
    n = p.size
    loss = -(y * np.log(p) + w_unocc * (1.0 - y) * np.log1p(-p)).sum(dtype=np.float64) / n
    grad = (-(y / p) + w_unocc * (1.0 - y) / (1.0 - p)) / n
    return float(loss), grad.astype(pred.dtype, copy=False)


def weighted_mse(pred: np.ndarray, target: np.ndarray, w_unocc: float):
    """Squared-error alternative with the same unoccupied weighting."""
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} != target shape {target.shape}")
    y = target.astype(pred.dtype, copy=False)
    w = np.where(target.astype(bool), 1.0, w_unocc).astype(pred.dtype)
    diff = pred - y
    n = pred.size
    loss = float((w * diff * diff).sum(dtype=np.float64) / n)
    return loss, (2.0 * w * diff / n).astype(pred.dtype, copy=False)


LOSSES = {"bce": weighted_bce, "mse": weighted_mse}


def sgd_step(groups: Sequence[ParamGroup], grads: dict[str, Gradient], learning_rate: float,
             momentum: float) -> None:
    """v <- momentum * v + g;  p <- p - lr * v, in place. Frozen groups are untouched."""
    names = {g.name for g in groups}
    if set(grads) != names:
        raise StateError(f"gradient set {sorted(grads)} does not match parameters {sorted(names)}")
    for g in groups:
        if not g.trainable:
            continue
        gr = grads[g.name]
        if gr.weight.shape != g.weight.shape or gr.bias.shape != g.bias.shape:
            raise StateError(f"{g.name}: gradient shape does not match parameter shape")
        g.weight_velocity *= momentum
        g.weight_velocity += gr.weight
        g.bias_velocity *= momentum
        g.bias_velocity += gr.bias
        g.weight -= learning_rate * g.weight_velocity
        g.bias -= learning_rate * g.bias_velocity


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 500
    seed: int = 0
    freeze_epochs: int = 300
    ramp_epochs: int = 200
    model_variant: str = HIGH_RES
    loss: str = "bce"
    s_min: float = S_MIN

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0:
            raise ValueError("learning rate and batch size must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 0 or self.freeze_epochs < 0 or self.ramp_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.model_variant not in (HIGH_RES, LOW_RES):
            raise ValueError(f"unknown model variant {self.model_variant!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class History:
    epoch_loss: list[float] = field(default_factory=list)
    batch_loss: list[float] = field(default_factory=list)
    unocc_weight: list[float] = field(default_factory=list)
    decoder_trainable: list[bool] = field(default_factory=list)

    def __len__(self):
        return len(self.epoch_loss)


EpochCallback = Callable[[int, object], None]


def _epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def _fit(network, groups, inputs, targets, cfg: TrainConfig, schedule: ImbalanceSchedule,
         start_epoch: int, n_epochs: int, forward, history: History,
         before_epoch: Callable[[int], None] | None = None,
         on_epoch_end: EpochCallback | None = None, owner=None, schedule_origin: int = 0):
    loss_fn = LOSSES[cfg.loss]
    n = len(inputs)
    for epoch in range(start_epoch, start_epoch + n_epochs):
        if before_epoch is not None:
            before_epoch(epoch)
        w = schedule.weight_at(epoch - schedule_origin)
        order = _epoch_order(n, cfg.seed, epoch)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = np.sort(order[s:s + cfg.batch_size])
            pred = forward(inputs[idx])
            loss, grad = loss_fn(pred, targets[idx], w)
            if not np.isfinite(loss):
                raise TrainingError("loss is not finite", epoch)
            grads, _ = network.backward(grad)
            sgd_step(groups, grads, cfg.learning_rate, cfg.momentum)
            history.batch_loss.append(loss)
            total += loss * len(idx)
        network.clear()
        history.epoch_loss.append(total / n)
        history.unocc_weight.append(w)
        if on_epoch_end is not None:
            on_epoch_end(epoch, owner)
    return history


def train_autoencoder(blocks: np.ndarray, cfg: TrainConfig,
                      on_epoch_end: EpochCallback | None = None,
                      ae: AutoEncoder | None = None,
                      history: History | None = None) -> tuple[AutoEncoder, History]:
    """Fit the shared block auto-encoder to (M, 10, 10, 10) or (M, 1000) blocks.

    Pass ``history`` to watch losses accumulate from ``on_epoch_end``.
    """
    blocks = np.asarray(blocks)
    if blocks.size == 0 or len(blocks) == 0:
        raise ValueError("auto-encoder training needs at least one block")
    x = blocks.reshape(len(blocks), codec.BLOCK_VOXELS)
    if ae is None:
        ae = AutoEncoder.initialize(cfg.seed)
    inputs = x.astype(ae.encoder.weight.dtype)
    targets = x.astype(bool)
    schedule = ImbalanceSchedule(occupancy_ratio(targets, cfg.s_min), cfg.ramp_epochs, cfg.s_min)
    history = History() if history is None else history
    _fit(ae.network, ae.groups, inputs, targets, cfg, schedule, 0, cfg.epochs,
         ae.network.forward, history, on_epoch_end=on_epoch_end, owner=ae)
    return ae, history


def _check_store(store: SampleStore, model: CompletionModel):
    if not store.records:
        raise ValueError("training store is empty")
    if store.resolution != model.resolution:
        raise ResolutionError(
            f"{model.variant} needs R = {model.resolution}, store has R = {store.resolution}")
    w, h = store.depth_size
    if (w, h) != (model.depth_size, model.depth_size):
        raise DimensionError(f"store depth maps are {w}x{h}, model expects {model.depth_size}")


def _train_model(model: CompletionModel, store: SampleStore, cfg: TrainConfig, n_epochs: int,
                 on_epoch_end: EpochCallback | None, schedule_origin: int = 0,
                 history: History | None = None) -> History:
    _check_store(store, model)
    inputs = store.depths()
    targets = to_output(store.targets(), model.variant)
    schedule = ImbalanceSchedule(occupancy_ratio(store, cfg.s_min), cfg.ramp_epochs, cfg.s_min)
    history = History() if history is None else history
    decoder = model.decoder

    def before_epoch(epoch):
        if decoder is not None:
            decoder.trainable = epoch >= cfg.freeze_epochs
            history.decoder_trainable.append(decoder.trainable)

    def on_end(epoch, owner):
        model.epoch = epoch + 1
        if on_epoch_end is not None:
            on_epoch_end(epoch, model)

    _fit(model.network, model.groups, inputs, targets, cfg, schedule, model.epoch, n_epochs,
         model.forward, history, before_epoch, on_end, model, schedule_origin)
    if decoder is not None and n_epochs > 0:
        decoder.trainable = model.epoch >= cfg.freeze_epochs
    return history


def train_completion(store: SampleStore, ae: AutoEncoder, cfg: TrainConfig,
                     on_epoch_end: EpochCallback | None = None,
                     history: History | None = None) -> tuple[CompletionModel, History]:
    """Stacked model: decoder copied from ``ae`` and held fixed for ``freeze_epochs``."""
    if cfg.model_variant != HIGH_RES:
        raise VariantError(f"train_completion needs {HIGH_RES}, config says {cfg.model_variant}")
    model = CompletionModel.initialize(HIGH_RES, cfg.seed, store.depth_size[0], autoencoder=ae)
    model.decoder.trainable = cfg.freeze_epochs == 0
    history = _train_model(model, store, cfg, cfg.epochs, on_epoch_end, history=history)
    return model, history


def train_low_res(store: SampleStore, cfg: TrainConfig,
                  on_epoch_end: EpochCallback | None = None,
                  history: History | None = None) -> tuple[CompletionModel, History]:
    """Direct regression of 10^3 occupancy, no codec."""
    if cfg.model_variant != LOW_RES:
        raise VariantError(f"train_low_res needs {LOW_RES}, config says {cfg.model_variant}")
    model = CompletionModel.initialize(LOW_RES, cfg.seed, store.depth_size[0])
    history = _train_model(model, store, cfg, cfg.epochs, on_epoch_end, history=history)
    return model, history


def finetune(model: CompletionModel, store: SampleStore, cfg: TrainConfig,
             on_epoch_end: EpochCallback | None = None, restart_ramp: bool = True,
             history: History | None = None) -> tuple[CompletionModel, History]:
    """Continue training ``model`` in place on ``store`` for ``cfg.epochs`` more epochs.

    The epoch counter, momentum buffers and freeze state carry over. The
    unoccupied-voxel weight is recomputed for the new store and its ramp
    restarts at the first fine-tuning epoch unless ``restart_ramp`` is off.
    """
    if cfg.model_variant != model.variant:
        raise VariantError(f"model is {model.variant}, config says {cfg.model_variant}")
    origin = model.epoch if restart_ramp else 0
    history = _train_model(model, store, cfg, cfg.epochs, on_epoch_end, origin, history)
    return model, history


def batch_loss(model: CompletionModel, store: SampleStore, indices, w_unocc: float,
               loss: str = "bce") -> float:
    """Loss of the current model on the given records, without updating anything."""
    idx = np.asarray(indices)
    pred = model.forward(store.depths()[idx])
    model.network.clear()
    value, _ = LOSSES[loss](pred, to_output(store.targets()[idx], model.variant), w_unocc)
    return value
