"""End-to-end chunk ranking model.

Pipeline per example: a shared bi-GRU encodes passage and question words
(same parameters for both sides); every passage state is paired with an
attention summary of the question to form a 4d-wide fused vector; a
second bi-GRU with its own parameters re-encodes the fused sequence; each
candidate chunk is represented by the forward state at its first word
concatenated with the backward state at its last word; candidates are
ranked by softmax over dot products with the question representation.

Attention weights are raw inner products with no normalization; a
normalized variant (per-passage-word softmax over question positions)
exists behind a flag for ablation, as does cosine instead of dot scoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numerics as nm
from .chunker import CandidateChunk, PosPatternTrie, generate_candidates
from .corpus import AnswerSpan, Example, Featurizer, detokenize
from .encoder import BiGruEncoder
from .numerics import Tensor

__all__ = [
    "ModelConfig",
    "ChunkReaderModel",
    "ChunkScoreSet",
    "attend",
    "attention_pass",
    "chunk_repr",
    "question_repr",
    "score_chunks",
    "nll_loss",
    "predict",
]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and candidate-generation settings baked into checkpoints."""

    hidden_size: int
    embedding_dim: int
    pos_tags: tuple[str, ...]
    ne_tags: tuple[str, ...]
    candidate_mode: str = "window"  # "window" or "trie"
    max_chunk_len: int = 10
    scoring: str = "dot"  # "dot" or "cosine"
    normalize_attention: bool = False

    @property
    def input_width(self) -> int:
        return self.embedding_dim + len(self.pos_tags) + len(self.ne_tags) + 3


@dataclass
class ChunkScoreSet:
    """Aligned candidates and their ranking probabilities (a simplex)."""

    candidates: list[CandidateChunk]
    probabilities: Tensor

    def __post_init__(self):
        n = len(self.candidates)
        if self.probabilities.data.shape != (n,):
            raise ValueError(
                f"{n} candidates but probability shape {self.probabilities.data.shape}"
            )
        s = float(self.probabilities.data.sum())
        if abs(s - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {s!r}, not 1")

    def best_index(self) -> int:
        # np.argmax takes the first maximum; candidates are sorted by
        # (start, end), so ties resolve to the earliest span
        return int(np.argmax(self.probabilities.data))


def attend(passage_states: Tensor, question_states: Tensor, normalize: bool = False) -> Tensor:
    """Fuse each passage state with its question summary.

    For passage row j and question rows k: weight(j,k) is the raw inner
    product, the summary is the weight-pooled sum of question rows, and
    the output row is [passage_j ; summary_j], twice the input width.
    With normalize=True the weights of each row pass through a softmax
    before pooling.
    """
    if passage_states.data.ndim != 2 or question_states.data.ndim != 2:
        raise nm.ShapeError("attend expects two state matrices")
    if passage_states.data.shape[0] == 0 or question_states.data.shape[0] == 0:
        raise nm.ShapeError("attend needs non-empty state sequences")
    if passage_states.data.shape[1] != question_states.data.shape[1]:
        raise nm.ShapeError(
            f"state widths disagree: {passage_states.data.shape} vs {question_states.data.shape}"
        )
    weights = nm.matmul(passage_states, nm.transpose(question_states))  # (T, K)
    if normalize:
        rows = [nm.softmax(nm.row(weights, t)) for t in range(weights.data.shape[0])]
        weights = nm.stack_rows(rows)
    pooled = nm.matmul(weights, question_states)  # (T, 2d)
    return nm.concat(passage_states, pooled)  # (T, 4d)


def attention_pass(model: "ChunkReaderModel", fused: Tensor, length: int | None = None):
    """Second bi-GRU over the fused passage-question sequence."""
    return model.attention_encoder.encode(fused, length)


def chunk_repr(fwd_states: Tensor, bwd_states: Tensor, start: int, end: int) -> Tensor:
    """Representation of one chunk: forward state at its first word plus
    backward state at its last word, concatenated. 1-based inclusive."""
    T = fwd_states.data.shape[0]
    if not 1 <= start <= end <= T:
        raise IndexError(f"chunk [{start}, {end}] out of range for {T} positions")
    return nm.concat(nm.row(fwd_states, start - 1), nm.row(bwd_states, end - 1))


def question_repr(fwd_states: Tensor, bwd_states: Tensor, length: int | None = None) -> Tensor:
    """Question summary: last real forward state plus first backward state."""
    if length is None:
        length = fwd_states.data.shape[0]
    return nm.concat(nm.row(fwd_states, length - 1), nm.row(bwd_states, 0))


def _cosine_scores(reps: Tensor, question: Tensor) -> Tensor:
    """Dot products normalized by both vector lengths; a 1e-12 floor under
    each squared norm keeps zero vectors finite."""
    n = reps.data.shape[0]
    width = reps.data.shape[1]
    ones = nm.tensor(np.ones(width))
    eps_vec = nm.tensor(np.full(n, 1e-12))
    rep_norms = nm.sqrt(nm.add(nm.matmul(nm.mul(reps, reps), ones), eps_vec))
    q_norm = nm.sqrt(nm.add(nm.matmul(question, question), nm.tensor(1e-12)))
    raw = nm.matmul(reps, question)
    return nm.div(raw, nm.mul(rep_norms, nm.broadcast_scalar(q_norm, n)))


def score_chunks(
    chunk_reprs: Tensor,
    question: Tensor,
    candidates: Sequence[CandidateChunk],
    scoring: str = "dot",
) -> ChunkScoreSet:
    """Rank candidates: one dot product (or cosine) per chunk, softmaxed."""
    if len(candidates) == 0:
        raise ValueError("cannot score an empty candidate set")
    if chunk_reprs.data.shape[0] != len(candidates):
        raise ValueError(
            f"{len(candidates)} candidates but {chunk_reprs.data.shape[0]} representations"
        )
    if scoring == "dot":
        scores = nm.matmul(chunk_reprs, question)
    elif scoring == "cosine":
        scores = _cosine_scores(chunk_reprs, question)
    else:
        raise ValueError(f"unknown scoring: {scoring!r}")
    return ChunkScoreSet(list(candidates), nm.softmax(scores))


def nll_loss(score_set: ChunkScoreSet, gold) -> Tensor:
    """Negative log probability of the gold span's candidate.

    The gold span must be present in the candidate list; training filters
    out examples whose gold cannot be generated, so absence here is a bug.
    """
    target = (gold.start, gold.end) if hasattr(gold, "start") else (gold[0], gold[1])
    idx = None
    for i, c in enumerate(score_set.candidates):
        if (c.start, c.end) == target:
            idx = i
            break
    if idx is None:
        raise LookupError(f"gold span {target} not among {len(score_set.candidates)} candidates")
    return nm.scale(nm.log(nm.pick(score_set.probabilities, idx)), -1.0)


class ChunkReaderModel:
    """Holds both encoders plus the candidate-generation setup."""

    def __init__(self, config: ModelConfig, trie: PosPatternTrie | None = None):
        if config.candidate_mode not in ("window", "trie"):
            raise ValueError(f"unknown candidate mode: {config.candidate_mode!r}")
        if config.candidate_mode == "trie" and trie is None:
            raise ValueError("trie candidate mode needs a built trie")
        self.config = config
        self.trie = trie
        d = config.hidden_size
        self.shared_encoder = BiGruEncoder(config.input_width, d, "shared")
        self.attention_encoder = BiGruEncoder(4 * d, d, "attention")
        self.featurizer: Featurizer | None = None  # attached when a table is loaded

    def parameters(self) -> dict[str, Tensor]:
        out = dict(self.shared_encoder.parameters())
        out.update(self.attention_encoder.parameters())
        return out

    def zero_grads(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def candidates_for(self, passage) -> list[CandidateChunk]:
        return generate_candidates(
            passage, self.config.candidate_mode, self.trie, self.config.max_chunk_len
        )

    def forward(
        self,
        passage_features: np.ndarray | Tensor,
        question_features: np.ndarray | Tensor,
        candidates: Sequence[CandidateChunk],
        passage_len: int | None = None,
        question_len: int | None = None,
        dropout_rate: float = 0.0,
        rng: nm.SeededRng | None = None,
        training: bool = False,
    ) -> ChunkScoreSet:
        """Score one example's candidates.

        Feature blocks may carry trailing zero-padding rows; passage_len /
        question_len give the true lengths. Dropout, when active, hits the
        input features of both sequences (passage drawn first, question
        second, so the random stream is consumed in a fixed order).
        """
        if len(candidates) == 0:
            raise ValueError("cannot score an empty candidate set")
        Xp = passage_features if isinstance(passage_features, Tensor) else nm.tensor(passage_features)
        Xq = question_features if isinstance(question_features, Tensor) else nm.tensor(question_features)
        plen = Xp.data.shape[0] if passage_len is None else passage_len
        for c in candidates:
            if c.end > plen:
                raise IndexError(f"candidate [{c.start}, {c.end}] beyond passage length {plen}")
        if training and dropout_rate > 0.0:
            if rng is None:
                raise ValueError("dropout needs an rng")
            Xp = nm.dropout(Xp, dropout_rate, rng, training=True)
            Xq = nm.dropout(Xq, dropout_rate, rng, training=True)

        _, _, passage_ctx = self.shared_encoder.encode(Xp, passage_len)
        q_fwd, q_bwd, question_ctx = self.shared_encoder.encode(Xq, question_len)
        fused = attend(passage_ctx, question_ctx, self.config.normalize_attention)
        g_fwd, g_bwd, _ = self.attention_encoder.encode(fused, passage_len)

        starts = [c.start - 1 for c in candidates]
        ends = [c.end - 1 for c in candidates]
        reps = nm.concat(nm.gather_rows(g_fwd, starts), nm.gather_rows(g_bwd, ends))
        qrep = question_repr(q_fwd, q_bwd, question_len)
        return score_chunks(reps, qrep, candidates, self.config.scoring)

    def predict_example(self, ex: Example, featurizer: Featurizer | None = None) -> AnswerSpan:
        """Highest-probability candidate span for one example."""
        fz = featurizer or self.featurizer
        if fz is None:
            raise ValueError("no featurizer attached to the model")
        candidates = self.candidates_for(ex.passage)
        if not candidates:
            raise ValueError(f"no candidates generated for example {ex.id!r}")
        scored = self.forward(fz.passage_matrix(ex), fz.question_matrix(ex), candidates)
        best = scored.candidates[scored.best_index()]
        text = detokenize(ex.passage[best.start - 1 : best.end])
        return AnswerSpan(best.start, best.end, text)


def predict(model: ChunkReaderModel, example: Example, featurizer: Featurizer | None = None) -> AnswerSpan:
    """Functional form of ChunkReaderModel.predict_example."""
    return model.predict_example(example, featurizer)
