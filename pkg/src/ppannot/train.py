"""Training loop: Adam with linear warmup then linear decay to zero.

The loop is single-threaded and deterministic: batch order comes from a
seeded generator and gradients are reduced in a fixed order.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyDataset, InvalidConfig
from .model import AnnotatorModel, Batch, batch_loss, make_batch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    steps: int = 3000
    batch_size: int = 32
    peak_lr: float = 2e-3
    warmup_steps: int = 200
    seed: int = 0
    checkpoint_every: int = 250
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-9
    grad_clip: float = 1.0
    val_batch_size: int = 128

    def validate(self) -> None:
        if self.steps <= 0 or self.batch_size <= 0 or self.checkpoint_every <= 0:
            raise InvalidConfig("steps, batch_size and checkpoint_every must be positive")
        if not 0 <= self.warmup_steps < self.steps:
            raise InvalidConfig("warmup_steps must be in [0, steps)")
        if self.peak_lr <= 0:
            raise InvalidConfig("peak_lr must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Learning rate used for update number ``step`` (1-based)."""
    if cfg.warmup_steps and step <= cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    span = cfg.steps - cfg.warmup_steps
    return cfg.peak_lr * max(0.0, (cfg.steps - step) / span)


class Adam:
    def __init__(self, params: dict[str, np.ndarray], names: Sequence[str], cfg: TrainConfig):
        self.names = list(names)
        self.m = {n: np.zeros_like(params[n]) for n in self.names}
        self.v = {n: np.zeros_like(params[n]) for n in self.names}
        self.b1, self.b2, self.eps = cfg.beta1, cfg.beta2, cfg.adam_eps
        self.t = 0

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for n in self.names:
            g = grads[n]
            m, v = self.m[n], self.v[n]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            step = (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            params[n] -= step.astype(params[n].dtype, copy=False)


def clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


@dataclass
class Example:
    x: np.ndarray
    ids: list[int]


def evaluate_loss(model: AnnotatorModel, data: Sequence[Example], batch_size: int = 128) -> float:
    """Token-weighted mean NLL over ``data``."""
    total = 0.0
    n_tok = 0
    order = sorted(range(len(data)), key=lambda i: data[i].x.shape[0])
    for s in range(0, len(order), batch_size):
        idx = order[s: s + batch_size]
        b = make_batch([data[i].x for i in idx], [data[i].ids for i in idx], model.vocab.pad, model.dtype)
        loss, _, n = batch_loss(model, b, with_grads=False)
        total += loss * n
        n_tok += n
    return total / n_tok


def select_best(val_losses: Sequence[float]) -> int:
    """Index of the first minimum validation loss."""
    if not val_losses:
        raise EmptyDataset("no validation checkpoints")
    return int(np.argmin(np.asarray(val_losses)))


@dataclass
class LogRow:
    step: int
    lr: float
    train_loss: float
    val_loss: float | None = None


@dataclass
class TrainResult:
    model: AnnotatorModel
    best_step: int
    best_val_loss: float
    checkpoints: list[tuple[int, float]] = field(default_factory=list)  # (step, val loss)
    log: list[LogRow] = field(default_factory=list)

    def write_log(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "lr", "train_loss", "val_loss"])
            for r in self.log:
                w.writerow([r.step, f"{r.lr:.8g}", f"{r.train_loss:.6f}",
                            "" if r.val_loss is None else f"{r.val_loss:.6f}"])


def train(
    model: AnnotatorModel,
    train_set: Sequence[Example],
    val_set: Sequence[Example],
    cfg: TrainConfig,
    progress: Callable[[LogRow], None] | None = None,
) -> TrainResult:
    """Train in place and return the checkpoint with the lowest validation loss.

    ``model`` ends in its final state; ``TrainResult.model`` is a separate copy
    holding the best parameters.
    """
    cfg.validate()
    if not train_set or not val_set:
        raise EmptyDataset("train and validation sets must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    names = model.trainable_names()
    opt = Adam(model.params, names, cfg)
    n = len(train_set)
    perm = rng.permutation(n)
    cursor = 0
    rows: list[LogRow] = []
    checkpoints: list[tuple[int, float]] = []
    best_model, best_val, best_step = None, None, 0
    for step in range(1, cfg.steps + 1):
        if cursor + cfg.batch_size > n:
            perm = rng.permutation(n)
            cursor = 0
        idx = perm[cursor: cursor + cfg.batch_size]
        cursor += cfg.batch_size
        batch: Batch = make_batch([train_set[i].x for i in idx], [train_set[i].ids for i in idx],
                                  model.vocab.pad, model.dtype)
        loss, grads, _ = batch_loss(model, batch)
        clip_grads(grads, cfg.grad_clip)
        lr = lr_at(step, cfg)
        opt.update(model.params, grads, lr)
        row = LogRow(step, lr, loss)
        if step % cfg.checkpoint_every == 0 or step == cfg.steps:
            row.val_loss = evaluate_loss(model, val_set, cfg.val_batch_size)
            checkpoints.append((step, row.val_loss))
            if best_val is None or row.val_loss < best_val:
                best_val, best_step, best_model = row.val_loss, step, model.copy()
            log.info("step %d lr %.2e train %.4f val %.4f", step, lr, loss, row.val_loss)
        rows.append(row)
        if progress is not None:
            progress(row)
    return TrainResult(best_model, best_step, best_val, checkpoints, rows)
