"""From-scratch training loop: Adam, augmentation, early stopping.

The corpus holds raw variable-size clouds; every epoch re-runs the random
subsample/pad and augmentation, so the network never sees the exact same
tensor twice.  Validation uses the chronological tail of each class (windows
overlap heavily, so a random split would leak) preprocessed once with a fixed
generator.  Training stops once validation loss has not improved for
``patience`` epochs and returns the best-validation parameters.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from gaittrack.classifier.network import TcpcnModel, loss
from gaittrack.classifier.preprocess import (
    FeatureStats,
    compute_feature_stats,
    preprocess,
    sparse_batch,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    p_drop: float = 0.5
    l2: float = 1e-4
    batch_size: int = 16
    patience: int = 3
    noise_range: float = 0.1
    seed: int = 0
    max_epochs: int = 60
    val_fraction: float = 0.15
    n_max: int = 100
    dtype: str = "float32"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.p_drop < 1.0:
            raise ValueError("p_drop must lie in [0, 1)")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")


@dataclass
class TrainingCorpus:
    """Labeled K-step windows of raw point-clouds.

    ``windows[i]`` is a list of K (n, 5) arrays; ``labels[i]`` the subject.
    """

    windows: list[list[np.ndarray]]
    labels: np.ndarray
    n_subjects: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.windows) != len(self.labels):
            raise ValueError("windows and labels must align")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    seconds: float


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def as_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_accuracy,seconds"]
        for e in self.epochs:
            lines.append(f"{e.epoch},{e.train_loss:.6f},{e.val_loss:.6f},"
                         f"{e.val_accuracy:.4f},{e.seconds:.1f}")
        return "\n".join(lines) + "\n"


class Adam:
    """Adam with bias correction; updates parameters in place."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _split_indices(labels: np.ndarray, val_fraction: float
                   ) -> tuple[np.ndarray, np.ndarray]:
    # chronological tail of each class goes to validation
    train_idx, val_idx = [], []
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        n_val = max(1, int(round(len(idx) * val_fraction)))
        train_idx.extend(idx[:-n_val])
        val_idx.extend(idx[-n_val:])
    return np.array(train_idx), np.array(val_idx)


def _snapshot(model: TcpcnModel) -> list[np.ndarray]:
    state = [arr.copy() for _, _, arr in model.parameters()]
    for layer in model.layers():
        if hasattr(layer, "running_mean"):
            state.append(layer.running_mean.copy())
            state.append(layer.running_var.copy())
    return state


def _restore(model: TcpcnModel, state: list[np.ndarray]) -> None:
    arrays = [arr for _, _, arr in model.parameters()]
    i = len(arrays)
    for dst, src in zip(arrays, state):
        dst[...] = src
    for layer in model.layers():
        if hasattr(layer, "running_mean"):
            layer.running_mean[...] = state[i]
            layer.running_var[...] = state[i + 1]
            i += 2


def evaluate_model(model: TcpcnModel, tensors: np.ndarray, labels: np.ndarray,
                   l2: float = 0.0, batch_size: int = 64
                   ) -> tuple[float, float]:
    """Eval-mode mean loss and accuracy over preprocessed windows."""
    losses, hits = [], 0
    onehot = np.eye(model.n_subjects)[labels]
    for lo in range(0, len(tensors), batch_size):
        sel = slice(lo, lo + batch_size)
        probs = model.forward(tensors[sel], mode="eval")
        losses.append(loss(probs, onehot[sel]) * (probs.shape[0]))
        hits += int((probs.argmax(axis=1) == labels[sel]).sum())
    total = float(np.sum(losses)) / len(tensors)
    if l2:
        total += l2 * float(sum(np.sum(w.astype(np.float64) ** 2)
                                for w in model.weight_arrays()))
    return total, hits / len(tensors)


def train(corpus: TrainingCorpus, cfg: TrainConfig | None = None
          ) -> tuple[TcpcnModel, TrainLog]:
    """Train a classifier on the corpus; returns the best-validation model.

    Aborts with RuntimeError if the loss diverges to NaN.
    """
    cfg = cfg or TrainConfig()
    if corpus.n_subjects < 2 or len(np.unique(corpus.labels)) < 2:
        raise ValueError("training needs at least two classes present")
    dtype = np.dtype(cfg.dtype).type
    rng = np.random.default_rng(cfg.seed)
    model = TcpcnModel(corpus.n_subjects, dtype=dtype, p_drop=cfg.p_drop,
                       rng=np.random.default_rng(cfg.seed))

    train_idx, val_idx = _split_indices(corpus.labels, cfg.val_fraction)
    stats = compute_feature_stats(
        pts for i in train_idx for pts in corpus.windows[i])
    model.feature_mean = stats.mean.astype(dtype)
    model.feature_std = stats.std.astype(dtype)
    stats = FeatureStats(model.feature_mean.astype(np.float64),
                         model.feature_std.astype(np.float64))

    val_rng = np.random.default_rng(cfg.seed + 1)
    val_tensors = np.stack([
        preprocess(corpus.windows[i], stats, cfg.n_max, val_rng, dtype)
        for i in val_idx])
    val_labels = corpus.labels[val_idx]
    onehot = np.eye(corpus.n_subjects, dtype=dtype)

    params = [arr for _, _, arr in model.parameters()]
    opt = Adam(params, lr=cfg.learning_rate)
    logbook = TrainLog()
    best_val = np.inf
    best_state = _snapshot(model)
    stale = 0

    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_idx))
        epoch_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            sel = train_idx[order[lo:lo + cfg.batch_size]]
            points, mult, counts = sparse_batch(
                [corpus.windows[i] for i in sel], stats, cfg.n_max, rng,
                noise_range=cfg.noise_range, dtype=dtype)
            y = onehot[corpus.labels[sel]]
            model.zero_grads()
            k_steps = len(corpus.windows[sel[0]])
            probs = model.forward_train_sparse(
                points, mult, counts, len(sel), k_steps, dropout_rng=rng)
            batch_loss = loss(probs, y, model, cfg.l2)
            if not np.isfinite(batch_loss):
                raise RuntimeError(
                    f"training diverged: loss became {batch_loss} at epoch "
                    f"{epoch}; lower the learning rate")
            model.backward(probs, y, l2=cfg.l2)
            opt.step([layer.grads[name] for layer, name, _ in model.parameters()])
            epoch_loss += batch_loss * len(sel)
        epoch_loss /= len(order)

        val_loss, val_acc = evaluate_model(model, val_tensors, val_labels,
                                           cfg.l2)
        seconds = time.perf_counter() - t0
        logbook.epochs.append(EpochStats(epoch, epoch_loss, val_loss, val_acc,
                                         seconds))
        log.info("epoch %d: train %.4f, val %.4f, val acc %.3f (%.0f s)",
                 epoch, epoch_loss, val_loss, val_acc, seconds)
        if val_loss < best_val:
            best_val = val_loss
            best_state = _snapshot(model)
            logbook.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                logbook.stopped_early = True
                break

    _restore(model, best_state)
    return model, logbook
