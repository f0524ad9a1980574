"""Optimization loop: ADAM, global-norm clipping, curriculum batching,
passage truncation, gold-in-candidates filtering, early stopping.

Determinism contract: a fixed (seed, config, data) triple reproduces the
entire run bit for bit. Parameter init draws from SeededRng(seed) in
parameter-catalog order, the same stream then feeds dropout in example
order, and each epoch's shuffle comes from a child rng derived from
(seed, epoch), so batch composition is reproducible without replaying
earlier epochs.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field, fields
from functools import reduce
from typing import Sequence

import numpy as np

from . import numerics as nm
from .chunker import CandidateChunk
from .corpus import Example, Featurizer
from .evaluator import evaluate
from .model import ChunkReaderModel, nll_loss
from .numerics import SeededRng, Tensor

__all__ = [
    "TrainConfig",
    "AdamState",
    "PreparedExample",
    "Batch",
    "TrainResult",
    "load_train_config",
    "init_parameters",
    "truncate_for_training",
    "prepare_examples",
    "filter_trainable",
    "make_batches",
    "clip_gradients",
    "adam_step",
    "train",
]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 180
    clip_norm: float = 10.0
    dropout_rate: float = 0.2
    hidden_size: int = 300
    max_passage_len: int = 300
    max_epochs: int = 30
    patience: int = 10
    curriculum_group: int = 10  # batches per locally-sorted group
    init_range: float = 0.01
    seed: int = 0
    candidate_mode: str = "window"
    max_chunk_len: int = 10

    def __post_init__(self):
        positive = [
            ("learning_rate", self.learning_rate),
            ("batch_size", self.batch_size),
            ("clip_norm", self.clip_norm),
            ("hidden_size", self.hidden_size),
            ("max_passage_len", self.max_passage_len),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("curriculum_group", self.curriculum_group),
            ("init_range", self.init_range),
            ("max_chunk_len", self.max_chunk_len),
        ]
        for name, value in positive:
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.candidate_mode not in ("window", "trie"):
            raise ValueError(f"unknown candidate_mode: {self.candidate_mode!r}")


def load_train_config(path, overrides: dict | None = None) -> TrainConfig:
    """Parse a flat key-value config file (one `key value` pair per line,
    '#' comments allowed); keys must be TrainConfig field names."""
    spec = {f.name: f.type for f in fields(TrainConfig)}
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ValueError(f"line {line_no}: expected 'key value', got {line!r}")
            key, raw = parts
            if key not in spec:
                raise ValueError(f"line {line_no}: unknown config key {key!r}")
            values[key] = raw
    if overrides:
        for key in overrides:
            if key not in spec:
                raise ValueError(f"unknown config key {key!r}")
        values.update({k: str(v) for k, v in overrides.items()})
    kwargs = {}
    for key, raw in values.items():
        kind = spec[key]
        if kind in (int, "int"):
            kwargs[key] = int(raw)
        elif kind in (float, "float"):
            kwargs[key] = float(raw)
        else:
            kwargs[key] = raw
    return TrainConfig(**kwargs)


# ---------------------------------------------------------------------------
# parameter init and optimizer


def init_parameters(model: ChunkReaderModel, rng: SeededRng, init_range: float = 0.01) -> None:
    """Fill every parameter i.i.d. uniform(-init_range, init_range), drawing
    in parameter-catalog order so a seed pins the full initialization."""
    for p in model.parameters().values():
        p.data[...] = rng.uniform(-init_range, init_range, p.data.shape)


class AdamState:
    """Per-parameter moment estimates plus the shared step counter."""

    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, params: dict[str, Tensor]):
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0


def clip_gradients(grads: Sequence[np.ndarray], clip_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is <= clip_norm;
    returns the pre-clip norm."""
    if clip_norm <= 0:
        raise ValueError("clip_norm must be positive")
    total = 0.0
    for g in grads:
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm > clip_norm:
        factor = clip_norm / norm
        for g in grads:
            g *= factor
    return norm


def adam_step(
    params: dict[str, Tensor], grads: dict[str, np.ndarray | None], state: AdamState, lr: float
) -> None:
    """One ADAM update; a missing gradient is treated as all zeros."""
    state.t += 1
    t = state.t
    b1, b2, eps = state.beta1, state.beta2, state.eps
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise nm.ShapeError(f"gradient shape {g.shape} vs parameter {p.data.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# example preparation and batching


@dataclass
class PreparedExample:
    example: Example
    passage_features: np.ndarray  # (L, width)
    question_features: np.ndarray  # (K, width)
    candidates: list[CandidateChunk]
    gold_index: int  # index into candidates

    @property
    def passage_len(self) -> int:
        return self.passage_features.shape[0]

    @property
    def question_len(self) -> int:
        return self.question_features.shape[0]


def truncate_for_training(
    examples: Sequence[Example], max_passage_len: int
) -> tuple[list[Example], int]:
    """Cut passages to the first max_passage_len tokens, keep only answers
    that survive whole, and drop examples left with no answers. Returns the
    kept examples and the dropped count. Test-time evaluation never calls
    this; full-length passages are scored as-is."""
    kept = []
    dropped = 0
    for ex in examples:
        if len(ex.passage) <= max_passage_len:
            survivors = ex.answers
            passage = ex.passage
        else:
            passage = ex.passage[:max_passage_len]
            survivors = tuple(a for a in ex.answers if a.end <= max_passage_len)
        if not survivors:
            dropped += 1
            continue
        if passage is ex.passage:
            kept.append(ex)
        else:
            kept.append(Example(ex.id, passage, ex.question, survivors))
    return kept, dropped


def filter_trainable(example: Example, candidates: Sequence[CandidateChunk]) -> int | None:
    """Index (into candidates) of the training target, or None to skip.

    An example is trainable only if some gold span appears exactly in its
    candidate set; with several qualifying golds the first in dataset
    order wins."""
    spans = {(c.start, c.end): i for i, c in enumerate(candidates)}
    for a in example.answers:
        i = spans.get((a.start, a.end))
        if i is not None:
            return i
    return None


def prepare_examples(
    examples: Sequence[Example], model: ChunkReaderModel, featurizer: Featurizer
) -> tuple[list[PreparedExample], int]:
    """Featurize and generate candidates once per example; returns the
    trainable subset and the count filtered out for gold-not-in-candidates."""
    prepared = []
    filtered = 0
    for ex in examples:
        candidates = model.candidates_for(ex.passage)
        gold = filter_trainable(ex, candidates) if candidates else None
        if gold is None:
            filtered += 1
            continue
        prepared.append(
            PreparedExample(
                example=ex,
                passage_features=featurizer.passage_matrix(ex),
                question_features=featurizer.question_matrix(ex),
                candidates=candidates,
                gold_index=gold,
            )
        )
    return prepared, filtered


@dataclass
class Batch:
    """Zero-padded feature blocks with 0/1 masks; row i of each block pads
    example i out to the batch-wide max lengths."""

    items: list[PreparedExample]
    passages: np.ndarray  # (B, Tmax, width)
    questions: np.ndarray  # (B, Kmax, width)
    passage_mask: np.ndarray  # (B, Tmax) 0/1
    question_mask: np.ndarray  # (B, Kmax) 0/1

    def __len__(self) -> int:
        return len(self.items)


def _pad_block(mats: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    longest = max(m.shape[0] for m in mats)
    width = mats[0].shape[1]
    block = np.zeros((len(mats), longest, width))
    mask = np.zeros((len(mats), longest))
    for i, m in enumerate(mats):
        block[i, : m.shape[0]] = m
        mask[i, : m.shape[0]] = 1.0
    return block, mask


def make_batches(
    prepared: Sequence[PreparedExample], config: TrainConfig, rng: SeededRng, epoch: int
) -> list[Batch]:
    """Shuffle, then sort by passage length inside consecutive groups of
    curriculum_group x batch_size examples, then cut and pad batches.

    The shuffle uses a child rng derived from (rng.seed, epoch) rather than
    the live stream, so epoch k's batches can be reproduced without
    replaying epochs 0..k-1.
    """
    if not prepared:
        return []
    child = SeededRng(rng.seed * 1_000_003 + epoch + 1)
    order = list(child.permutation(len(prepared)))
    shuffled = [prepared[i] for i in order]
    group_span = config.curriculum_group * config.batch_size
    regrouped: list[PreparedExample] = []
    for start in range(0, len(shuffled), group_span):
        group = shuffled[start : start + group_span]
        group.sort(key=lambda pe: pe.passage_len)  # stable: ties keep shuffle order
        regrouped.extend(group)
    batches = []
    for start in range(0, len(regrouped), config.batch_size):
        chunk = regrouped[start : start + config.batch_size]
        passages, p_mask = _pad_block([pe.passage_features for pe in chunk])
        questions, q_mask = _pad_block([pe.question_features for pe in chunk])
        batches.append(Batch(chunk, passages, questions, p_mask, q_mask))
    return batches


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    epochs_run: int
    best_epoch: int
    best_em: float
    best_f1: float
    train_losses: list[float]
    log_lines: list[str] = field(default_factory=list)
    stats: dict = field(default_factory=dict)


def _batch_loss(model, batch: Batch, config, rng, training=True) -> Tensor:
    losses = []
    for i, pe in enumerate(batch.items):
        scored = model.forward(
            batch.passages[i],
            batch.questions[i],
            pe.candidates,
            passage_len=pe.passage_len,
            question_len=pe.question_len,
            dropout_rate=config.dropout_rate if training else 0.0,
            rng=rng,
            training=training,
        )
        losses.append(nll_loss(scored, pe.candidates[pe.gold_index]))
    return nm.scale(reduce(nm.add, losses), 1.0 / len(losses))


def train(
    model: ChunkReaderModel,
    featurizer: Featurizer,
    train_examples: Sequence[Example],
    dev_examples: Sequence[Example],
    config: TrainConfig,
    log_path=None,
    checkpoint_path=None,
    initialize: bool = True,
    echo=None,
) -> TrainResult:
    """Run the full optimization loop and return the best-epoch summary.

    Each epoch: curriculum batches -> mean batch NLL -> backward -> global
    clip -> ADAM, then exact-match on the dev set (full-length passages,
    no dropout). Training stops at max_epochs or once dev EM has gone
    `patience` consecutive epochs without a strict improvement. The best
    checkpoint and the log are written when paths are given; the persisted
    log carries only run-reproducible columns (epoch, loss, EM, F1), and
    wall-clock seconds go to `echo` (default stderr) for humans.
    """
    from .checkpoint import save_checkpoint  # local import: cycle with model

    echo = echo if echo is not None else (lambda s: print(s, file=sys.stderr))

    truncated, dropped_truncation = truncate_for_training(train_examples, config.max_passage_len)
    prepared, dropped_filter = prepare_examples(truncated, model, featurizer)
    stats = {
        "train_examples": len(train_examples),
        "dropped_by_truncation": dropped_truncation,
        "dropped_by_candidate_filter": dropped_filter,
        "trainable": len(prepared),
    }
    if not prepared:
        raise ValueError(
            "no trainable examples: "
            f"{stats['train_examples']} given, "
            f"{dropped_truncation} lost all answers to truncation, "
            f"{dropped_filter} had no gold span in the candidate set"
        )

    rng = SeededRng(config.seed)
    if initialize:
        init_parameters(model, rng, config.init_range)
    params = model.parameters()
    state = AdamState(params)

    best_em = -1.0
    best_f1 = 0.0
    best_epoch = -1
    stale = 0
    train_losses: list[float] = []
    log_lines: list[str] = []

    for epoch in range(config.max_epochs):
        started = time.monotonic()
        batches = make_batches(prepared, config, rng, epoch)
        loss_sum = 0.0
        for batch in batches:
            model.zero_grads()
            with nm.Tape() as tape:
                loss = _batch_loss(model, batch, config, rng, training=True)
                tape.backward(loss)
            loss_sum += float(loss.data) * len(batch)
            grads = {k: (p.grad if p.grad is not None else None) for k, p in params.items()}
            clip_gradients([g for g in grads.values() if g is not None], config.clip_norm)
            adam_step(params, grads, state, config.learning_rate)
        mean_loss = loss_sum / len(prepared)
        train_losses.append(mean_loss)

        predictions = {ex.id: model.predict_example(ex, featurizer).text for ex in dev_examples}
        report = evaluate(predictions, dev_examples)
        line = f"{epoch + 1}\t{mean_loss:.10f}\t{report.em:.6f}\t{report.f1:.6f}"
        log_lines.append(line)
        echo(f"{line}\t{time.monotonic() - started:.2f}s")

        if report.em > best_em:
            best_em = report.em
            best_f1 = report.f1
            best_epoch = epoch + 1
            stale = 0
            if checkpoint_path is not None:
                save_checkpoint(model, checkpoint_path)
        else:
            stale += 1
            if stale >= config.patience:
                break

    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(log_lines) + "\n")
    return TrainResult(
        epochs_run=len(train_losses),
        best_epoch=best_epoch,
        best_em=best_em,
        best_f1=best_f1,
        train_losses=train_losses,
        log_lines=log_lines,
        stats=stats,
    )
