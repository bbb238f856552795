"""Caption vocabulary with reserved control tokens.

Indices 0..3 are fixed: sequence start, sequence end, unknown word, and the
empty-input marker used when a term list has nothing to encode. Corpus words
follow, ordered by descending count then alphabetically, which makes the
index assignment reproducible for a given corpus.
"""

from __future__ import annotations

from typing import Iterable, Mapping

from .errors import ValidationError

START_TOKEN = "<start>"
END_TOKEN = "<end>"
UNK_TOKEN = "<unk>"
EMPTY_TOKEN = "<empty>"
RESERVED_TOKENS = (START_TOKEN, END_TOKEN, UNK_TOKEN, EMPTY_TOKEN)


class Vocabulary:
    """Bijection between caption words and dense indices."""

    def __init__(self, words: Iterable[str], counts: Mapping[str, int] | None = None):
        """Build from corpus words already ordered for index assignment.

        ``words`` must not contain the reserved tokens; they are prepended
        automatically.
        """
        self._index_to_word: list[str] = list(RESERVED_TOKENS)
        self._counts = dict(counts) if counts else {}
        for word in words:
            if word in RESERVED_TOKENS:
                raise ValidationError(f"{word!r} is reserved and cannot be a corpus word")
            self._index_to_word.append(word)
        self._word_to_index = {w: i for i, w in enumerate(self._index_to_word)}
        if len(self._word_to_index) != len(self._index_to_word):
            raise ValidationError("vocabulary contains a duplicate word")
        # Fraction of corpus tokens that fell below the count cut; set by the builder.
        self.unk_rate: float = 0.0

    # -- core lookups --------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self._index_to_word)

    @property
    def start_index(self) -> int:
        return 0

    @property
    def end_index(self) -> int:
        return 1

    @property
    def unk_index(self) -> int:
        return 2

    @property
    def empty_index(self) -> int:
        return 3

    def __contains__(self, word: str) -> bool:
        return word in self._word_to_index

    def index(self, word: str) -> int:
        """Index for ``word``, falling back to the unknown-word index."""
        return self._word_to_index.get(word, self.unk_index)

    def word(self, index: int) -> str:
        if not 0 <= index < self.size:
            raise ValidationError(f"index {index} outside vocabulary of size {self.size}")
        return self._index_to_word[index]

    def words(self) -> list[str]:
        """All words in index order, reserved tokens first."""
        return list(self._index_to_word)

    def count(self, word: str) -> int:
        return self._counts.get(word, 0)

    # -- encoding ------------------------------------------------------------

    def encode_tokens(self, tokens: Iterable[str]) -> list[int]:
        """Token indices wrapped in start/end markers."""
        return [self.start_index, *(self.index(t) for t in tokens), self.end_index]

    def surface(self, indices: Iterable[int]) -> list[str]:
        """Words for ``indices`` with control tokens removed."""
        keep = []
        for i in indices:
            if i in (self.start_index, self.end_index):
                continue
            keep.append(self.word(i))
        return keep

    # -- serialization -------------------------------------------------------

    def to_json(self) -> list[dict[str, object]]:
        return [
            {"word": w, "index": i, "count": self._counts.get(w, 0)}
            for i, w in enumerate(self._index_to_word)
        ]

    @classmethod
    def from_words(cls, ordered_words: Iterable[str], counts: Mapping[str, int] | None = None) -> "Vocabulary":
        """Rebuild from a full index-ordered word list (reserved tokens first)."""
        words = list(ordered_words)
        if tuple(words[:4]) != RESERVED_TOKENS:
            raise ValidationError("word list must begin with the four reserved tokens")
        return cls(words[4:], counts)
