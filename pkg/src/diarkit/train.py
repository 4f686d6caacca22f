"""Mini-batch training loop for the segmentation network.

Teacher forcing is decided per sequence with a fresh coin each epoch;
gradients are clipped by global norm and applied with Adam. After every
epoch the dev split is scored with teacher-forced token accuracy (taking
the better of the two speaker groupings per window) and the parameters
from the best dev epoch are what the caller gets back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import EOS_ID, PAD_ID, WindowSample
from .errors import TrainingDivergedError
from .model import (
    HyperParams,
    ModelParams,
    Seq2Seq,
    _flip_array,
    init_params,
    zeros_like_params,
)


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    dev_accuracies: list[float] = field(default_factory=list)
    best_epoch: int = -1          # 0-based; -1 until one epoch finishes
    best_dev_accuracy: float = float("nan")


class Adam:
    """Standard Adam with bias correction, one slot pair per tensor."""

    def __init__(self, params: ModelParams, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in self.params.tensors.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def pad_batch(windows: Sequence[WindowSample], feature_mode: str):
    """Stack windows into dense arrays with end-token targets.

    Returns (src_ids (B,32), acoustic (B,32,13) or None,
    targets (B,L) padded, lengths (B,) float64).
    """
    src = np.asarray([w.source_ids for w in windows], dtype=np.int64)
    acoustic = None
    if feature_mode == "WM":
        acoustic = np.stack([w.acoustic for w in windows])
    seqs = [list(w.target_ids) + [EOS_ID] for w in windows]
    max_len = max(len(s) for s in seqs)
    targets = np.full((len(seqs), max_len), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        targets[i, : len(s)] = s
    lengths = np.asarray([len(s) for s in seqs], dtype=np.float64)
    return src, acoustic, targets, lengths


def dev_token_accuracy(model: Seq2Seq, windows: Sequence[WindowSample],
                       batch_size: int) -> float:
    """Teacher-forced accuracy, better speaker grouping per window."""
    if not windows:
        return float("nan")
    correct = 0
    total = 0
    for start in range(0, len(windows), batch_size):
        chunk = windows[start : start + batch_size]
        src, ac, targets, lengths = pad_batch(chunk, model.params.feature_mode)
        cache = model.forward_batch(src, ac, targets)
        pred = np.argmax(cache.logits, axis=2)
        valid = np.arange(targets.shape[1])[None, :] < lengths[:, None]
        hits_o = ((pred == targets) & valid).sum(axis=1)
        hits_f = ((pred == _flip_array(targets)) & valid).sum(axis=1)
        correct += int(np.maximum(hits_o, hits_f).sum())
        total += int(lengths.sum())
    return correct / total


def train_model(
    train_windows: Sequence[WindowSample],
    dev_windows: Sequence[WindowSample],
    hyper: HyperParams,
    vocab_size: int,
    progress: Callable[[str], None] | None = None,
) -> tuple[ModelParams, TrainReport]:
    """Train from scratch; returns the best-dev parameters and a report."""
    if not train_windows:
        raise ValueError("no training windows")
    for w in list(train_windows) + list(dev_windows):
        if w.target_ids is None:
            raise ValueError("training requires windows with target sequences")

    rng = np.random.default_rng(hyper.seed)
    params = init_params(hyper, vocab_size, rng)
    model = Seq2Seq(params, hyper)
    opt = Adam(params, hyper.learning_rate)
    report = TrainReport()
    best: dict[str, np.ndarray] | None = None

    n = len(train_windows)
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, hyper.batch_size):
            chunk = [train_windows[i] for i in order[start : start + hyper.batch_size]]
            src, ac, targets, lengths = pad_batch(chunk, hyper.feature_mode)
            self_feed = rng.random(len(chunk)) >= hyper.teacher_forcing_ratio
            cache = model.forward_batch(src, ac, targets, self_feed=self_feed)
            loss, dlogits, _ = model.batch_loss(cache.logits, targets, lengths)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}"
                )
            grads = model.backward_batch(cache, dlogits)
            clip_gradients(grads, hyper.grad_clip)
            opt.step(grads)
            epoch_loss += loss
            n_batches += 1
        mean_loss = epoch_loss / n_batches
        acc = dev_token_accuracy(model, dev_windows, hyper.batch_size)
        report.epoch_losses.append(mean_loss)
        report.dev_accuracies.append(acc)

        is_best = (
            best is None
            or math.isnan(acc)  # no dev split: keep the latest epoch
            or acc > report.best_dev_accuracy
        )
        if is_best:
            best = {k: v.copy() for k, v in params.tensors.items()}
            report.best_epoch = epoch
            report.best_dev_accuracy = acc
        if progress is not None:
            progress(
                f"epoch {epoch + 1:>3}/{hyper.epochs}  "
                f"loss {mean_loss:.4f}  dev acc {acc:.4f}"
                + ("  *" if is_best else "")
            )

    assert best is not None
    return ModelParams(feature_mode=hyper.feature_mode, tensors=best), report
