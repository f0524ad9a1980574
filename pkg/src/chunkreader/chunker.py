"""Candidate answer chunk generation.

Two interchangeable strategies produce the candidate set that the ranking
model scores. Windowed enumeration emits every span up to a length cap
and is the default. The trie strategy learns the POS tag patterns of
training answers and emits exactly the passage spans whose tag sequence
matches a learned pattern; it trades recall for a smaller candidate list.

Candidate lists are always duplicate-free and sorted by (start, end) so
that list index <-> span is a fixed mapping everywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .corpus import AnnotatedToken, Example

__all__ = [
    "CandidateChunk",
    "PosPatternTrie",
    "build_pos_trie",
    "trie_candidates",
    "enumerate_candidates",
    "generate_candidates",
    "candidate_recall",
]

DEFAULT_MAX_CHUNK_LEN = 10


@dataclass(frozen=True, order=True)
class CandidateChunk:
    """Span of passage tokens, 1-based inclusive on both ends.

    `source` records which strategy produced the chunk and is excluded
    from equality, so a trie hit and a window hit on the same span compare
    equal (recall and gold lookup only care about the span).
    """

    start: int
    end: int
    source: str = field(default="window", compare=False)

    def __post_init__(self):
        if self.start < 1 or self.end < self.start:
            raise ValueError(f"invalid chunk [{self.start}, {self.end}]")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


class _TrieNode:
    __slots__ = ("children", "terminal", "count")

    def __init__(self):
        self.children: dict[str, _TrieNode] = {}
        self.terminal = False
        self.count = 0


class PosPatternTrie:
    """Set of POS tag sequences with multiplicities, stored as a trie.

    Patterns longer than depth_cap are refused at insert; build_pos_trie
    counts them in `skipped` rather than failing.
    """

    def __init__(self, depth_cap: int = DEFAULT_MAX_CHUNK_LEN):
        if depth_cap < 1:
            raise ValueError("depth_cap must be >= 1")
        self.depth_cap = int(depth_cap)
        self.root = _TrieNode()
        self.size = 0  # number of distinct patterns
        self.skipped = 0  # patterns refused for exceeding the cap

    def insert(self, pattern: Sequence[str], count: int = 1) -> bool:
        """Add a pattern with multiplicity; returns False if over the cap."""
        if len(pattern) == 0:
            raise ValueError("empty pattern")
        if len(pattern) > self.depth_cap:
            self.skipped += 1
            return False
        node = self.root
        for tag in pattern:
            node = node.children.setdefault(tag, _TrieNode())
        if not node.terminal:
            node.terminal = True
            self.size += 1
        node.count += int(count)
        return True

    def __contains__(self, pattern: Sequence[str]) -> bool:
        node = self.root
        for tag in pattern:
            node = node.children.get(tag)
            if node is None:
                return False
        return node.terminal

    def patterns(self) -> Iterator[tuple[tuple[str, ...], int]]:
        """Yield (pattern, count) pairs in sorted pattern order, which makes
        serialized checkpoints byte-stable."""

        def walk(node, prefix):
            if node.terminal:
                yield tuple(prefix), node.count
            for tag in sorted(node.children):
                prefix.append(tag)
                yield from walk(node.children[tag], prefix)
                prefix.pop()

        yield from walk(self.root, [])


def build_pos_trie(examples: Sequence[Example], depth_cap: int = DEFAULT_MAX_CHUNK_LEN) -> PosPatternTrie:
    """Collect the POS pattern of every gold answer span into a trie."""
    trie = PosPatternTrie(depth_cap)
    for ex in examples:
        for span in ex.answers:
            pattern = [tok.pos for tok in ex.passage[span.start - 1 : span.end]]
            trie.insert(pattern)
    return trie


def trie_candidates(passage: Sequence[AnnotatedToken], trie: PosPatternTrie) -> list[CandidateChunk]:
    """All spans whose POS sequence traces a root-to-terminal trie path.

    From each start position the walk descends at most depth_cap tags, so
    the scan is O(|passage| * depth_cap)."""
    tags = [tok.pos for tok in passage]
    found: list[CandidateChunk] = []
    for s in range(len(tags)):
        node = trie.root
        for j in range(s, min(s + trie.depth_cap, len(tags))):
            node = node.children.get(tags[j])
            if node is None:
                break
            if node.terminal:
                found.append(CandidateChunk(s + 1, j + 1, source="trie"))
    return found


def enumerate_candidates(passage_length: int, max_len: int = DEFAULT_MAX_CHUNK_LEN) -> list[CandidateChunk]:
    """Every span of at most max_len tokens, ordered by (start, end)."""
    if passage_length < 1 or max_len < 1:
        raise ValueError("passage_length and max_len must be >= 1")
    out = []
    for start in range(1, passage_length + 1):
        last = min(start + max_len - 1, passage_length)
        for end in range(start, last + 1):
            out.append(CandidateChunk(start, end, source="window"))
    return out


def generate_candidates(
    passage: Sequence[AnnotatedToken],
    mode: str = "window",
    trie: PosPatternTrie | None = None,
    max_len: int = DEFAULT_MAX_CHUNK_LEN,
) -> list[CandidateChunk]:
    """Dispatch to the configured strategy for one passage."""
    if mode == "window":
        return enumerate_candidates(len(passage), max_len)
    if mode == "trie":
        if trie is None:
            raise ValueError("trie mode needs a built PosPatternTrie")
        return trie_candidates(passage, trie)
    raise ValueError(f"unknown candidate mode: {mode!r}")


def candidate_recall(
    examples: Sequence[Example], candidate_lists: Sequence[Sequence[CandidateChunk]]
) -> float:
    """Fraction of examples whose gold span set intersects the candidates.

    A hit requires exact (start, end) agreement with at least one gold
    answer span."""
    if len(examples) != len(candidate_lists):
        raise ValueError(
            f"{len(examples)} examples vs {len(candidate_lists)} candidate lists"
        )
    if not examples:
        raise ValueError("recall over zero examples is undefined")
    hits = 0
    for ex, candidates in zip(examples, candidate_lists):
        spans = {(c.start, c.end) for c in candidates}
        if any((a.start, a.end) in spans for a in ex.answers):
            hits += 1
    return hits / len(examples)
