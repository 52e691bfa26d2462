"""Optimization loop: NLL loss, Adam updates, step LR schedule, logging.

The loop is single-threaded and fully deterministic for a fixed seed: batch
order comes from a seeded generator keyed by (seed, epoch), parameters update
in canonical order, and the only nondeterministic output is the wall-time
column of the training log.  Config-file plumbing lives in :mod:`.cli`; this
module exposes the pure functions it drives.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import Corpus, DatasetSplit, NUM_CLASSES, batches
from .encoder import Charset, DEFAULT_CHARSET, UrlGraph, url_to_graph
from .engine import Tape, Tensor
from .errors import (
    BadHeaderError,
    BadTargetError,
    ShapeMismatchError,
    TooFewSamplesError,
    UrlGraphNetError,
)
from .model import ModelConfig, ModelParams, BoundModel, bind, forward, init_params, save_checkpoint

TRAIN_LOG_HEADER = ("epoch", "loss", "train_acc", "test_acc", "lr", "seconds")


# ----------------------------------------------------------------------
# Loss


def nll_loss(tape: Tape, log_probs: Tensor, target: int) -> Tensor:
    """Negative log-likelihood ``-log_probs[0, target]`` as a 1x1 tensor."""
    if target not in (0, 1, 2, 3):
        raise BadTargetError(f"target class must be in 0..3, got {target!r}")
    if log_probs.shape != (1, NUM_CLASSES):
        raise ShapeMismatchError(
            f"nll_loss expects (1, {NUM_CLASSES}) log-probabilities, got {log_probs.shape}"
        )
    return tape.smul(tape.pick(log_probs, 0, int(target)), -1.0)


def batch_loss(
    tape: Tape,
    model: BoundModel,
    graphs: Sequence[UrlGraph],
    labels: Sequence[int],
) -> Tensor:
    """Mean NLL over a batch of graphs (1x1 tensor)."""
    losses = [
        nll_loss(tape, forward(tape, graph, model), int(label))
        for graph, label in zip(graphs, labels)
    ]
    if not losses:
        raise TooFewSamplesError("batch_loss requires a non-empty batch")
    if len(losses) == 1:
        return losses[0]
    return tape.smul(tape.sum(tape.concat_cols(losses)), 1.0 / len(losses))


# ----------------------------------------------------------------------
# Optimizer


@dataclass
class OptimizerState:
    """Adam moments and step counter, keyed like ``ModelParams.tensors``."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams, lr: float = 0.001) -> OptimizerState:
        return cls(
            m={name: np.zeros_like(arr) for name, arr in params.tensors.items()},
            v={name: np.zeros_like(arr) for name, arr in params.tensors.items()},
            lr=lr,
        )


def adam_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
) -> tuple[ModelParams, OptimizerState]:
    """One Adam update, in place, over every parameter in canonical order."""
    for name, arr in params.tensors.items():
        grad = grads.get(name)
        if grad is None:
            raise ShapeMismatchError(f"missing gradient for parameter {name}")
        if np.shape(grad) != arr.shape:
            raise ShapeMismatchError(
                f"{name}: gradient shape {np.shape(grad)} does not mirror {arr.shape}"
            )
    state.t += 1
    correct_m = 1.0 - state.beta1 ** state.t
    correct_v = 1.0 - state.beta2 ** state.t
    for name, arr in params.tensors.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        arr -= state.lr * (m / correct_m) / (np.sqrt(v / correct_v) + state.eps)
    return params, state


def lr_at(epoch: int, base: float = 0.001, gamma: float = 0.5, step: int = 5) -> float:
    """Step schedule ``base * gamma**(epoch // step)`` with 0-indexed epochs."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    return base * gamma ** (epoch // step)


# ----------------------------------------------------------------------
# Logging


@dataclass
class TrainLogEntry:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float
    lr: float
    seconds: float


@dataclass
class TrainLog:
    """One entry per completed epoch, serializable as CSV."""

    entries: list[TrainLogEntry] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [",".join(TRAIN_LOG_HEADER)]
        for e in self.entries:
            lines.append(
                f"{e.epoch},{e.loss!r},{e.train_acc!r},{e.test_acc!r},"
                f"{e.lr!r},{e.seconds:.3f}"
            )
        return "\n".join(lines) + "\n"

    def without_timing(self) -> str:
        """CSV text minus the wall-time column, for determinism comparisons."""
        lines = [line.rsplit(",", 1)[0] for line in self.to_csv().splitlines()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> TrainLog:
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise BadHeaderError("training log is empty") from None
        if header != list(TRAIN_LOG_HEADER):
            raise BadHeaderError(f"unexpected training-log header {header!r}")
        entries = []
        for row in reader:
            if len(row) != len(TRAIN_LOG_HEADER):
                raise BadHeaderError(f"malformed training-log row {row!r}")
            entries.append(
                TrainLogEntry(
                    epoch=int(row[0]),
                    loss=float(row[1]),
                    train_acc=float(row[2]),
                    test_acc=float(row[3]),
                    lr=float(row[4]),
                    seconds=float(row[5]),
                )
            )
        return cls(entries)


# ----------------------------------------------------------------------
# Training


def encode_subset(
    corpus: Corpus,
    indices,
    charset: Charset = DEFAULT_CHARSET,
    extended: bool = False,
) -> tuple[list[UrlGraph], np.ndarray]:
    """Graphs and labels for the given record indices.

    Encoding failures are re-raised with the offending record's index and URL
    attached, so a bad row in a large corpus is easy to locate.
    """
    graphs: list[UrlGraph] = []
    labels: list[int] = []
    for i in np.asarray(indices, dtype=np.int64):
        record = corpus.records[int(i)]
        try:
            graphs.append(url_to_graph(record.url, charset, extended, record.label))
        except UrlGraphNetError as exc:
            raise type(exc)(f"record {int(i)} ({record.url!r}): {exc}") from exc
        labels.append(record.label)
    return graphs, np.asarray(labels, dtype=np.int64)


def _accuracy(params: ModelParams, graphs: Sequence[UrlGraph], labels: np.ndarray) -> float:
    """Share of graphs whose argmax log-probability matches the label."""
    if not graphs:
        return math.nan
    tape = Tape(record=False)
    model = bind(tape, params, trainable=False)
    correct = 0
    for graph, label in zip(graphs, labels):
        log_probs = forward(tape, graph, model).data
        if int(np.argmax(log_probs[0])) == int(label):
            correct += 1
    return correct / len(graphs)


def train(
    corpus: Corpus,
    split: DatasetSplit,
    config: ModelConfig,
    *,
    epochs: int = 10,
    batch_size: int = 32,
    seed: int = 42,
    base_lr: float = 0.001,
    gamma: float = 0.5,
    lr_step: int = 5,
    charset: Charset = DEFAULT_CHARSET,
    checkpoint_dir: str | os.PathLike[str] | None = None,
    init: ModelParams | None = None,
    progress: Callable[[TrainLogEntry], None] | None = None,
) -> tuple[ModelParams, TrainLog]:
    """Run the full optimization loop and return final params plus the log.

    Per batch: forward every graph, mean NLL, one backward pass, one Adam
    step.  Per epoch: record the example-weighted mean training loss, train
    and test accuracy, and the scheduled learning rate; write a checkpoint
    into ``checkpoint_dir`` (``epoch_NNN.ckpt``) when a directory is given,
    plus ``final.ckpt`` after the last epoch.  ``init`` overrides the seeded
    initialization (it is copied, never mutated).  ``progress`` is invoked
    with each completed epoch's log entry.
    """
    if np.asarray(split.train_indices).size == 0:
        raise TooFewSamplesError("training requires a non-empty train split")
    params = init.copy() if init is not None else init_params(config)
    params.validate()
    if params.config != config:
        raise ShapeMismatchError("init parameters were built for a different config")
    train_graphs, train_labels = encode_subset(
        corpus, split.train_indices, charset, config.extended
    )
    test_graphs, test_labels = encode_subset(
        corpus, split.test_indices, charset, config.extended
    )
    state = OptimizerState.for_params(params, lr=base_lr)
    log = TrainLog()
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    positions = np.arange(len(train_graphs))
    for epoch in range(epochs):
        started = time.perf_counter()
        state.lr = lr_at(epoch, base_lr, gamma, lr_step)
        total = 0.0
        for batch in batches(positions, batch_size, seed, epoch):
            tape = Tape()
            model = bind(tape, params)
            loss = batch_loss(
                tape,
                model,
                [train_graphs[int(i)] for i in batch],
                train_labels[batch],
            )
            grad_map = tape.backward(loss)
            grads = {
                name: grad_map[leaf.node] for name, leaf in model.leaves.items()
            }
            adam_step(params, grads, state)
            total += float(loss.data[0, 0]) * batch.size
        entry = TrainLogEntry(
            epoch=epoch,
            loss=total / len(train_graphs),
            train_acc=_accuracy(params, train_graphs, train_labels),
            test_acc=_accuracy(params, test_graphs, test_labels),
            lr=state.lr,
            seconds=time.perf_counter() - started,
        )
        log.entries.append(entry)
        if progress is not None:
            progress(entry)
        if ckpt_dir is not None:
            save_checkpoint(ckpt_dir / f"epoch_{epoch:03d}.ckpt", params)
    if ckpt_dir is not None:
        save_checkpoint(ckpt_dir / "final.ckpt", params)
    return params, log
