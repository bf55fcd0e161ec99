"""Class-weighted cross-entropy, SGD with weight decay, and the epoch loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import InvalidInputError, TrainingDivergedError
from .layers import softmax
from .network import DualBranchModel
from .vocab import Vocabulary, tokenize


@dataclass
class TrainConfig:
    learning_rate: float = 2e-6  # configurable at desk scale; toy runs use larger
    weight_decay: float = 5e-4
    batch_size: int = 64
    class_weights: Optional[np.ndarray] = None  # computed from counts when None
    epochs: int = 1
    seed: int = 0
    optimizer: str = "sgd"  # "sgd" | "adam" (adam keeps moment state per tensor)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise InvalidInputError("learning_rate must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidInputError("optimizer must be 'sgd' or 'adam'")
        if self.class_weights is not None:
            self.class_weights = np.asarray(self.class_weights, dtype=np.float64)
            if (self.class_weights <= 0).any():
                raise InvalidInputError("class weights must be positive")


def class_weights_from_counts(n_benign: int, n_bma: int) -> np.ndarray:
    """Balanced weights w_c = N / (2 * N_c) from training-set counts."""
    if n_benign <= 0 or n_bma <= 0:
        raise InvalidInputError("both classes must be present")
    n = n_benign + n_bma
    return np.array([n / (2.0 * n_benign), n / (2.0 * n_bma)], dtype=np.float64)


def compute_loss(logits: np.ndarray, labels: np.ndarray,
                 class_weights: np.ndarray):
    """Mean over the batch of w_y * (-log p_y). Returns (loss, dlogits)."""
    if logits.ndim != 2 or len(logits) == 0:
        raise InvalidInputError("empty batch")
    labels = np.asarray(labels, dtype=np.int64)
    w = np.asarray(class_weights, dtype=np.float64)[labels]
    probs = softmax(logits.astype(np.float64), axis=1)
    b = len(labels)
    picked = probs[np.arange(b), labels]
    loss = float(np.mean(w * -np.log(picked)))
    dlogits = probs
    dlogits[np.arange(b), labels] -= 1.0
    dlogits *= (w / b)[:, None]
    return loss, dlogits.astype(logits.dtype)


@dataclass
class TrainingSet:
    """Preprocessed tensors ready for the batch API."""

    vis: np.ndarray      # (N, 3, vh, vw)
    ids: np.ndarray      # (N, L) int64
    mask: np.ndarray     # (N, L) int64
    labels: np.ndarray   # (N,) int64, 1 = malicious
    meta: list = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    @property
    def class_counts(self) -> tuple[int, int]:
        n_pos = int((self.labels == 1).sum())
        return len(self.labels) - n_pos, n_pos

    @classmethod
    def from_pairs(cls, model: DualBranchModel, vocab: Vocabulary,
                   pairs: Sequence[tuple], max_len: int, meta: list | None = None):
        """pairs: iterable of (image, text, label01); image may be a
        NormalizedImage, an RGB8 canvas, or a preprocessed (3, vh, vw) array."""
        vis, ids, mask, labels = [], [], [], []
        vh, vw = model.config.visual_input_hw
        for img, text, label in pairs:
            if isinstance(img, np.ndarray) and img.shape == (3, vh, vw):
                vis.append(img.astype(model.config.np_dtype, copy=False))
            else:
                vis.append(model.preprocess_visual(img))
            seq = tokenize(text, vocab, max_len)
            ids.append(seq.ids)
            mask.append(seq.attention_mask)
            labels.append(int(label))
        return cls(
            vis=np.stack(vis),
            ids=np.stack(ids),
            mask=np.stack(mask),
            labels=np.asarray(labels, dtype=np.int64),
            meta=meta or [],
        )


@dataclass
class EpochStats:
    mean_loss: float
    first_batch_loss: float
    last_batch_loss: float
    n_batches: int


def sgd_update(params: dict, grads: dict, lr: float, weight_decay: float):
    """p <- (1 - wd) * p - lr * grad; decay applies even at lr = 0."""
    shrink = 1.0 - weight_decay
    for name, p in params.items():
        p *= shrink
        if lr != 0.0:
            p -= lr * grads[name].astype(p.dtype, copy=False)


class AdamState:
    """First/second moment accumulators keyed like the param dict."""

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0


def adam_update(params: dict, grads: dict, lr: float, weight_decay: float,
                state: AdamState, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8):
    """Adam step with the same decoupled multiplicative decay as SGD."""
    state.t += 1
    shrink = 1.0 - weight_decay
    for name, p in params.items():
        g = grads[name].astype(np.float64, copy=False)
        if name not in state.m:
            state.m[name] = np.zeros_like(g, dtype=np.float64)
            state.v[name] = np.zeros_like(g, dtype=np.float64)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** state.t)
        v_hat = v / (1 - beta2 ** state.t)
        p *= shrink
        if lr != 0.0:
            p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)


def train_epoch(model: DualBranchModel, dataset: TrainingSet, cfg: TrainConfig,
                epoch: int = 0, opt_state: Optional[AdamState] = None) -> EpochStats:
    """One seed-determined pass: shuffle, batch, forward/backward, update."""
    if len(dataset) == 0:
        raise InvalidInputError("dataset is empty")
    weights = cfg.class_weights
    if weights is None:
        weights = class_weights_from_counts(*dataset.class_counts)
    order_rng = np.random.default_rng([cfg.seed, epoch, 17])
    drop_rng = np.random.default_rng([cfg.seed, epoch, 31])
    order = order_rng.permutation(len(dataset))

    losses = []
    for start in range(0, len(order), cfg.batch_size):
        sel = order[start:start + cfg.batch_size]
        logits, cache = model.forward_batch(
            dataset.vis[sel], dataset.ids[sel], dataset.mask[sel],
            mode="train", rng=drop_rng,
        )
        loss, dlogits = compute_loss(logits, dataset.labels[sel], weights)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, batch {len(losses)}")
        grads, _ = model.backward_batch(dlogits, cache)
        if cfg.optimizer == "adam":
            if opt_state is None:
                raise InvalidInputError("adam needs a persistent AdamState")
            adam_update(model.params, grads, cfg.learning_rate, cfg.weight_decay,
                        opt_state, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        else:
            sgd_update(model.params, grads, cfg.learning_rate, cfg.weight_decay)
        losses.append(loss)

    return EpochStats(
        mean_loss=float(np.mean(losses)),
        first_batch_loss=losses[0],
        last_batch_loss=losses[-1],
        n_batches=len(losses),
    )


def fit(model: DualBranchModel, dataset: TrainingSet, cfg: TrainConfig,
        after_epoch: Optional[Callable[[int, EpochStats], bool]] = None) -> list[EpochStats]:
    """Run cfg.epochs passes; after_epoch may return True to stop early."""
    history = []
    opt_state = AdamState() if cfg.optimizer == "adam" else None
    for epoch in range(cfg.epochs):
        stats = train_epoch(model, dataset, cfg, epoch, opt_state=opt_state)
        history.append(stats)
        if after_epoch is not None and after_epoch(epoch, stats):
            break
    return history


def score_batch(model: DualBranchModel, dataset: TrainingSet,
                batch_size: int = 64) -> np.ndarray:
    """Eval-mode malicious-class probability for every sample."""
    out = np.empty(len(dataset), dtype=np.float64)
    for start in range(0, len(dataset), batch_size):
        sel = slice(start, start + batch_size)
        logits, _ = model.forward_batch(dataset.vis[sel], dataset.ids[sel],
                                        dataset.mask[sel])
        probs = softmax(logits.astype(np.float64), axis=1)
        out[sel] = probs[:, 1]
    return out
