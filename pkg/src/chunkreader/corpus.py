"""Data model: annotated examples, embeddings, and per-word input features.

The library consumes pre-tokenized, pre-tagged data; tokenization and
tagging live upstream. Each word is featurized into six concatenated
parts: pretrained embedding, POS one-hot, NE one-hot, and three binary
indicators (surface match against the question, lemma match against the
question, first-letter capitalization).

All structures are immutable after load and safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DataError",
    "AnnotatedToken",
    "AnswerSpan",
    "Example",
    "LoadResult",
    "EmbeddingTable",
    "Featurizer",
    "load_dataset",
    "load_embeddings",
    "build_tag_inventories",
    "featurize",
    "detokenize",
]


class DataError(ValueError):
    """Malformed input file; the message cites the offending line."""


@dataclass(frozen=True)
class AnnotatedToken:
    """One word with its annotations.

    char_offset is the 0-based character position of the token in the
    original untokenized text; the library carries it through untouched.
    """

    surface: str
    lemma: str
    pos: str
    ne: str
    char_offset: int


@dataclass(frozen=True)
class AnswerSpan:
    """Gold answer as a 1-based inclusive token range plus its raw text."""

    start: int
    end: int
    text: str

    def __post_init__(self):
        if self.start < 1 or self.end < self.start:
            raise DataError(f"invalid span [{self.start}, {self.end}]")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class Example:
    id: str
    passage: tuple[AnnotatedToken, ...]
    question: tuple[AnnotatedToken, ...]
    answers: tuple[AnswerSpan, ...]


@dataclass
class LoadResult:
    """Loaded examples plus (line number, reason) for each rejected record."""

    examples: list[Example]
    dropped: list[tuple[int, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.examples)

    def __len__(self):
        return len(self.examples)


def detokenize(tokens: Sequence[AnnotatedToken]) -> str:
    """Join token surfaces with single spaces."""
    return " ".join(t.surface for t in tokens)


def _squeeze(text: str) -> str:
    """Remove all whitespace. Span text arrives from untokenized sources, so
    'round-trips through the tokens' is checked ignoring spacing entirely
    (a token split like 51.9 + % would otherwise never match '51.9%')."""
    return "".join(text.split())


_TOKEN_KEYS = ("surface", "lemma", "pos", "ne", "offset")


def _parse_token(obj, line_no: int, where: str) -> AnnotatedToken:
    if not isinstance(obj, dict):
        raise DataError(f"line {line_no}: {where} token is not an object")
    missing = [k for k in _TOKEN_KEYS if k not in obj]
    if missing:
        raise DataError(f"line {line_no}: {where} token missing keys {missing}")
    return AnnotatedToken(
        surface=str(obj["surface"]),
        lemma=str(obj["lemma"]),
        pos=str(obj["pos"]),
        ne=str(obj["ne"]),
        char_offset=int(obj["offset"]),
    )


def _validate_example(
    ex_id: str, passage, question, raw_answers, line_no: int
) -> Example | str:
    """Content checks; returns the Example or a rejection reason string."""
    for tok in passage + question:
        if not tok.surface:
            return "empty token surface"
    answers = []
    for a in raw_answers:
        start, end, text = a
        if start < 1 or end < start or end > len(passage):
            return f"span [{start}, {end}] out of range for {len(passage)} tokens"
        joined = detokenize(passage[start - 1 : end])
        if _squeeze(joined) != _squeeze(text):
            return f"span text {text!r} does not match passage tokens {joined!r}"
        answers.append(AnswerSpan(start, end, text))
    return Example(ex_id, tuple(passage), tuple(question), tuple(answers))


def load_dataset(path) -> LoadResult:
    """Read examples from a JSONL file, one object per line.

    Schema violations (bad JSON, missing keys, wrong types) raise DataError
    citing the line. Content violations (span out of range, span text not
    matching the tokens, empty surfaces) drop the record and log the reason
    in LoadResult.dropped instead of failing the whole load.
    """
    examples: list[Example] = []
    dropped: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {line_no}: invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise DataError(f"line {line_no}: record is not an object")
            for key in ("id", "passage", "question", "answers"):
                if key not in obj:
                    raise DataError(f"line {line_no}: record missing key {key!r}")
            if not isinstance(obj["passage"], list) or not isinstance(obj["question"], list):
                raise DataError(f"line {line_no}: passage/question must be arrays")
            passage = [_parse_token(t, line_no, "passage") for t in obj["passage"]]
            question = [_parse_token(t, line_no, "question") for t in obj["question"]]
            raw_answers = []
            if not isinstance(obj["answers"], list):
                raise DataError(f"line {line_no}: answers must be an array")
            for a in obj["answers"]:
                if not isinstance(a, dict) or not {"start", "end", "text"} <= a.keys():
                    raise DataError(f"line {line_no}: answer missing start/end/text")
                raw_answers.append((int(a["start"]), int(a["end"]), str(a["text"])))
            got = _validate_example(str(obj["id"]), passage, question, raw_answers, line_no)
            if isinstance(got, str):
                dropped.append((line_no, got))
            else:
                examples.append(got)
    return LoadResult(examples, dropped)


class EmbeddingTable:
    """Word to vector map with a fixed dimension.

    Lookup tries the exact surface, then its lowercasing (pretrained tables
    are usually uncased), then falls back to a zero vector. Out-of-
    vocabulary words therefore contribute nothing to the embedding block.
    """

    def __init__(self, dim: int, entries: dict[str, np.ndarray]):
        self.dim = int(dim)
        self.entries = entries
        self._zero = np.zeros(self.dim)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def lookup(self, word: str) -> np.ndarray:
        hit = self.entries.get(word)
        if hit is None:
            hit = self.entries.get(word.lower())
        return self._zero if hit is None else hit


def load_embeddings(path, dim: int) -> EmbeddingTable:
    """Parse a text embedding file: `word v1 ... v_dim` per line.

    A line whose field count disagrees with dim raises DataError citing the
    line; a repeated word keeps its first vector.
    """
    entries: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise DataError(
                    f"line {line_no}: expected word + {dim} values, got {len(parts)} fields"
                )
            word = parts[0]
            if word in entries:
                continue
            try:
                vec = np.array([float(v) for v in parts[1:]])
            except ValueError:
                raise DataError(f"line {line_no}: non-numeric embedding value") from None
            entries[word] = vec
    return EmbeddingTable(dim, entries)


def build_tag_inventories(examples: Iterable[Example]) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Collect sorted unique POS and NE tags over all passages and questions.

    Sorting fixes the one-hot layout; the inventories persist with the
    model checkpoint so reloads reproduce it exactly.
    """
    pos_tags: set[str] = set()
    ne_tags: set[str] = set()
    for ex in examples:
        for tok in ex.passage + ex.question:
            pos_tags.add(tok.pos)
            ne_tags.add(tok.ne)
    return tuple(sorted(pos_tags)), tuple(sorted(ne_tags))


def featurize(
    token: AnnotatedToken,
    question: Sequence[AnnotatedToken],
    table: EmbeddingTable,
    pos_tags: Sequence[str],
    ne_tags: Sequence[str],
) -> np.ndarray:
    """Six-part input vector for one passage token.

    Layout, in order: [embedding | POS one-hot | NE one-hot | surface-match
    | lemma-match | capitalized]. Surface match is exact and case
    sensitive; lemma match is case insensitive; capitalized means the first
    character is an uppercase letter. A tag outside the inventory leaves
    its one-hot block all zero.
    """
    fz = Featurizer(table, pos_tags, ne_tags)
    return fz.passage_token(token, question)


class Featurizer:
    """Precomputed tag index maps for repeated featurization calls."""

    def __init__(
        self,
        table: EmbeddingTable,
        pos_tags: Sequence[str],
        ne_tags: Sequence[str],
    ):
        self.table = table
        self.pos_tags = tuple(pos_tags)
        self.ne_tags = tuple(ne_tags)
        self._pos_index = {t: i for i, t in enumerate(self.pos_tags)}
        self._ne_index = {t: i for i, t in enumerate(self.ne_tags)}
        self.width = table.dim + len(self.pos_tags) + len(self.ne_tags) + 3

    def _fill(self, out: np.ndarray, token: AnnotatedToken, s_match, l_match) -> None:
        d = self.table.dim
        out[:d] = self.table.lookup(token.surface)
        p = self._pos_index.get(token.pos)
        if p is not None:
            out[d + p] = 1.0
        n = self._ne_index.get(token.ne)
        if n is not None:
            out[d + len(self.pos_tags) + n] = 1.0
        base = d + len(self.pos_tags) + len(self.ne_tags)
        out[base] = 1.0 if s_match else 0.0
        out[base + 1] = 1.0 if l_match else 0.0
        out[base + 2] = 1.0 if token.surface[:1].isupper() else 0.0

    def passage_token(
        self, token: AnnotatedToken, question: Sequence[AnnotatedToken]
    ) -> np.ndarray:
        out = np.zeros(self.width)
        surfaces = {q.surface for q in question}
        lemmas = {q.lemma.lower() for q in question}
        self._fill(out, token, token.surface in surfaces, token.lemma.lower() in lemmas)
        return out

    def passage_matrix(self, ex: Example) -> np.ndarray:
        """(|passage|, width) feature matrix for one example's passage."""
        surfaces = {q.surface for q in ex.question}
        lemmas = {q.lemma.lower() for q in ex.question}
        out = np.zeros((len(ex.passage), self.width))
        for i, tok in enumerate(ex.passage):
            self._fill(out[i], tok, tok.surface in surfaces, tok.lemma.lower() in lemmas)
        return out

    def question_matrix(self, ex: Example) -> np.ndarray:
        """(|question|, width) matrix; question words trivially match
        themselves, so both match bits are fixed at 1 to keep the input
        layout identical to the passage side."""
        out = np.zeros((len(ex.question), self.width))
        for i, tok in enumerate(ex.question):
            self._fill(out[i], tok, True, True)
        return out
