"""Reconstruction loss, epoch loop, early stopping and learning-rate reduction on plateau."""
import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import Adam, ConfigError, NumericError, ShapeError

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "lr", "train_mae_i", "train_mae_v", "train_total", "val_total", "seconds")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossValue:
    mae_i: float
    mae_v: float

    @property
    def total(self):
        return self.mae_i + self.mae_v


def _split_residual(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape or pred.ndim != 3 or pred.shape[2] != 2:
        raise ShapeError(f"pred {pred.shape} and target {target.shape} must both be (n, 112, 2)")
    return pred - target


def compute_loss(pred, target):
    """MAE of Stokes I plus MAE of Stokes V, each averaged over profiles and wavelengths."""
    r = _split_residual(pred, target)
    mae = np.abs(r).mean(axis=(0, 1), dtype=np.float64)
    return LossValue(float(mae[0]), float(mae[1]))


def loss_and_grad(pred, target):
    """:func:`compute_loss` plus its (sub)gradient with respect to ``pred``; ``sign(0) = 0``."""
    r = _split_residual(pred, target)
    n = r.shape[0] * r.shape[1]
    loss = LossValue(*(float(v) for v in np.abs(r).mean(axis=(0, 1), dtype=np.float64)))
    return loss, (np.sign(r) / r.dtype.type(n)).astype(r.dtype)


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 512
    learning_rate: float = 1e-3
    early_stop_patience: int = 100
    plateau_patience: int = 50
    plateau_factor: float = 0.1
    min_lr: float = 1e-6
    seed: int = 0
    # loss averages over profiles and wavelength points (not sums)
    loss_reduction: str = "mean"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 2:
            raise ConfigError("epochs must be >= 1 and batch_size >= 2")
        if self.early_stop_patience < 1 or self.plateau_patience < 1:
            raise ConfigError("patiences must be >= 1")
        if not 0 < self.plateau_factor < 1:
            raise ConfigError("plateau_factor must lie in (0, 1)")
        if self.learning_rate < 0 or self.min_lr < 0:
            raise ConfigError("learning rates must be non-negative")
        if self.loss_reduction != "mean":
            raise ConfigError("only the 'mean' loss reduction is implemented")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class TrainState:
    """Loss history and the two independent callback counters.

    ``stop_wait`` belongs to early stopping and ``plateau_wait`` to the
    learning-rate scheduler; a reduction never resets ``stop_wait``.
    ``lr_history[i]`` is the rate used while training epoch ``i + 1``.
    """

    lr: float
    epoch: int = 0
    train_history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)
    lr_history: list = field(default_factory=list)
    best_val: float = math.inf
    best_epoch: int = 0
    best_weights: dict | None = None
    stop_wait: int = 0
    plateau_best: float = math.inf
    plateau_wait: int = 0
    lr_reductions: list = field(default_factory=list)
    stopped_early: bool = False


def observe(state, val_loss, config, weights=None):
    """Record one finished epoch's validation loss and run both callbacks.

    Improvement means a strict decrease. Returns ``True`` when training
    should stop.
    """
    state.epoch += 1
    state.val_history.append(float(val_loss))

    state.stop_wait += 1
    if val_loss < state.best_val:
        state.best_val = float(val_loss)
        state.best_epoch = state.epoch
        state.stop_wait = 0
        if weights is not None:
            state.best_weights = weights()

    if val_loss < state.plateau_best:
        state.plateau_best = float(val_loss)
        state.plateau_wait = 0
    else:
        state.plateau_wait += 1
        if state.plateau_wait >= config.plateau_patience:
            if state.lr > config.min_lr:
                state.lr = max(state.lr * config.plateau_factor, config.min_lr)
                state.lr_reductions.append(state.epoch)
                log.info("epoch %d: reducing learning rate to %.3g", state.epoch, state.lr)
            state.plateau_wait = 0

    if state.stop_wait >= config.early_stop_patience:
        state.stopped_early = True
        log.info("epoch %d: early stopping (best epoch %d)", state.epoch, state.best_epoch)
        return True
    return False


def epoch_rng(seed, epoch):
    return np.random.default_rng([int(seed), int(epoch)])


def batch_slices(n, batch_size):
    """Batch boundaries covering all ``n`` items; a trailing batch of one joins its predecessor."""
    edges = list(range(0, n, batch_size)) + [n]
    if len(edges) > 2 and edges[-1] - edges[-2] == 1:
        del edges[-2]
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def train_epoch(model, x, config, state, optimizer):
    """One shuffled pass of Adam steps over ``x``; returns the mean batch :class:`LossValue`."""
    n = len(x)
    if n < 2:
        raise ConfigError("training needs at least 2 profiles (batch normalisation)")
    order = epoch_rng(config.seed, state.epoch + 1).permutation(n)
    net = model.network
    optimizer.lr = state.lr
    losses = []
    for b, sl in enumerate(batch_slices(n, config.batch_size)):
        batch = x[order[sl]]
        net.zero_grad()
        out = net.forward(model.to_input(batch), training=True)
        loss, grad = loss_and_grad(model.from_output(out), batch)
        if not math.isfinite(loss.total):
            raise TrainingError(f"non-finite loss at epoch {state.epoch + 1}, batch {b}")
        grad = model.to_input(grad)
        try:
            net.backward(grad)
            optimizer.step(net.parameters(trainable_only=True))
        except NumericError as exc:
            raise TrainingError(f"epoch {state.epoch + 1}, batch {b}: {exc}") from exc
        losses.append(loss)
    return LossValue(float(np.mean([l.mae_i for l in losses])), float(np.mean([l.mae_v for l in losses])))


def evaluate_loss(model, x, batch_size=4096):
    """Inference-mode :class:`LossValue` over a whole set."""
    recon = model.from_output(model.network.predict(model.to_input(x), batch_size=batch_size))
    return compute_loss(recon, x)


def fit(model, train, val, config, log_path=None, checkpoint_path=None, validate=None, meta=None):
    """Train ``model`` in place and restore the best-validation weights at the end.

    ``validate`` maps the model to a validation loss; by default it is the
    inference-mode reconstruction loss on ``val``.
    """
    if len(train) == 0 or len(val) == 0:
        raise ConfigError("training and validation sets must be non-empty")
    if validate is None:
        def validate(m):
            return evaluate_loss(m, val).total

    state = TrainState(lr=config.learning_rate)
    optimizer = Adam(lr=config.learning_rate)
    net = model.network
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
    try:
        for _ in range(config.epochs):
            t0 = time.perf_counter()
            state.lr_history.append(state.lr)
            tl = train_epoch(model, train, config, state, optimizer)
            state.train_history.append(tl)
            vl = float(validate(model))
            if not math.isfinite(vl):
                raise TrainingError(f"non-finite validation loss at epoch {state.epoch + 1}")
            prev_best = state.best_epoch
            lr_used = state.lr
            stop = observe(state, vl, config, weights=net.state_dict)
            if checkpoint_path is not None and state.best_epoch != prev_best:
                model.save(checkpoint_path, **(meta or {}), epoch=state.epoch)
            if writer is not None:
                writer.writerow([state.epoch, repr(lr_used), repr(tl.mae_i), repr(tl.mae_v), repr(tl.total),
                                 repr(vl), f"{time.perf_counter() - t0:.3f}"])
                fh.flush()
            log.debug("epoch %d train %.5f val %.5f lr %.3g", state.epoch, tl.total, vl, lr_used)
            if stop:
                break
    finally:
        if fh is not None:
            fh.close()
    if state.best_weights is not None:
        net.load_state_dict(state.best_weights)
    return state
