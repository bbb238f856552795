"""Corpus-level caption metrics: BLEU, ROUGE-L, and CIDEr-D.

All three are computed from first principles over tokenized captions.

* BLEU pools clipped n-gram counts over the whole corpus, picks each image's
  closest reference length (ties to the shorter), applies the brevity penalty
  to the pooled lengths, and uses no smoothing: a zero pooled precision at any
  order zeroes the score.
* ROUGE-L is the mean over images of an F-measure (beta = 1.2) built from the
  best longest-common-subsequence precision and best recall over the
  references, each maximized independently.
* CIDEr-D averages, over n-gram orders 1..4 and references, a length-penalized
  clipped cosine similarity between tf-idf vectors, scaled by 10. Document
  frequencies count the images whose reference set contains the n-gram.

Scoring uses the same tokenizer as training, so candidates produced by the
decoder and references from the dataset meet on equal terms.
"""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ValidationError
from .text import tokenize

BLEU_MAX_ORDER = 4
CIDER_MAX_ORDER = 4
CIDER_LENGTH_SIGMA = 6.0
ROUGE_BETA = 1.2

Tokens = tuple[str, ...]


@dataclass(frozen=True)
class EvalEntry:
    """One image's candidate caption and its references, tokenized."""

    image_id: str
    candidate: Tokens
    references: tuple[Tokens, ...]

    def __post_init__(self) -> None:
        if not self.references:
            raise ValidationError(f"image {self.image_id!r} has no references")
        if any(not ref for ref in self.references):
            raise ValidationError(f"image {self.image_id!r} has an empty reference")


class EvalCorpus:
    """Aligned candidate/reference pairs for a set of images."""

    def __init__(self, entries: Iterable[EvalEntry]):
        self.entries = list(entries)
        seen: set[str] = set()
        for entry in self.entries:
            if entry.image_id in seen:
                raise ValidationError(f"duplicate image_id {entry.image_id!r}")
            seen.add(entry.image_id)
        if not self.entries:
            raise ValidationError("empty evaluation corpus")

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_text(
        cls, items: Iterable[tuple[str, str, Sequence[str]]]
    ) -> "EvalCorpus":
        """Build from raw strings: (image_id, candidate, references)."""
        return cls(
            EvalEntry(
                image_id=image_id,
                candidate=tuple(tokenize(candidate)),
                references=tuple(tuple(tokenize(r)) for r in references),
            )
            for image_id, candidate, references in items
        )


def _ngrams(tokens: Sequence[str], order: int) -> collections.Counter:
    return collections.Counter(
        tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1)
    )


# -- BLEU ----------------------------------------------------------------------


def bleu(corpus: EvalCorpus, order: int) -> float:
    """Corpus-level BLEU at ``order`` (no smoothing), in [0, 1]."""
    if not 1 <= order <= BLEU_MAX_ORDER:
        raise ValidationError(f"BLEU order must be in 1..{BLEU_MAX_ORDER}, got {order}")
    correct = [0] * order
    guess = [0] * order
    candidate_length = 0
    reference_length = 0
    for entry in corpus.entries:
        cand = entry.candidate
        candidate_length += len(cand)
        # Closest reference length; ties go to the shorter reference.
        reference_length += min(
            (abs(len(ref) - len(cand)), len(ref)) for ref in entry.references
        )[1]
        for k in range(1, order + 1):
            cand_counts = _ngrams(cand, k)
            best_ref: collections.Counter = collections.Counter()
            for ref in entry.references:
                for gram, count in _ngrams(ref, k).items():
                    if count > best_ref[gram]:
                        best_ref[gram] = count
            correct[k - 1] += sum(min(c, best_ref[g]) for g, c in cand_counts.items())
            guess[k - 1] += max(0, len(cand) - k + 1)
    if candidate_length == 0:
        return 0.0
    precisions = [
        (correct[k] / guess[k]) if guess[k] > 0 else 0.0 for k in range(order)
    ]
    if any(p == 0.0 for p in precisions):
        return 0.0
    brevity = (
        1.0
        if candidate_length > reference_length
        else math.exp(1.0 - reference_length / candidate_length)
    )
    return brevity * math.exp(sum(math.log(p) for p in precisions) / order)


# -- ROUGE-L ---------------------------------------------------------------------


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Classic dynamic program for the longest common subsequence length."""
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0] * (len(b) + 1)
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[len(b)]


def rouge_l(corpus: EvalCorpus) -> float:
    """Mean per-image LCS F-measure with recall weighted by beta = 1.2."""
    beta_sq = ROUGE_BETA * ROUGE_BETA
    total = 0.0
    for entry in corpus.entries:
        cand = entry.candidate
        if not cand:
            continue  # contributes zero
        precision_best = 0.0
        recall_best = 0.0
        for ref in entry.references:
            lcs = _lcs_length(cand, ref)
            precision_best = max(precision_best, lcs / len(cand))
            recall_best = max(recall_best, lcs / len(ref))
        if precision_best > 0.0 and recall_best > 0.0:
            total += (
                (1.0 + beta_sq)
                * recall_best
                * precision_best
                / (recall_best + beta_sq * precision_best)
            )
    return total / len(corpus.entries)


# -- CIDEr-D ---------------------------------------------------------------------


def _tfidf_vectors(
    counts: collections.Counter, document_frequency: collections.Counter, log_corpus_size: float
) -> tuple[list[dict[tuple[str, ...], float]], list[float]]:
    """Per-order tf-idf maps and their Euclidean norms."""
    vectors: list[dict[tuple[str, ...], float]] = [dict() for _ in range(CIDER_MAX_ORDER)]
    norms = [0.0] * CIDER_MAX_ORDER
    for gram, term_frequency in counts.items():
        idf = log_corpus_size - math.log(max(1.0, document_frequency[gram]))
        value = term_frequency * idf
        vectors[len(gram) - 1][gram] = value
        norms[len(gram) - 1] += value * value
    return vectors, [math.sqrt(n) for n in norms]


def _all_order_ngrams(tokens: Sequence[str]) -> collections.Counter:
    counts: collections.Counter = collections.Counter()
    for order in range(1, CIDER_MAX_ORDER + 1):
        counts.update(_ngrams(tokens, order))
    return counts


def cider_d(corpus: EvalCorpus) -> float:
    """Consensus score in [0, 10]; a single-image corpus scores 0.

    With one image every n-gram's idf is ln(1/1) = 0, so all tf-idf vectors
    vanish and the zero-norm guard yields 0 throughout.
    """
    document_frequency: collections.Counter = collections.Counter()
    for entry in corpus.entries:
        grams: set = set()
        for ref in entry.references:
            grams.update(_all_order_ngrams(ref))
        document_frequency.update(grams)
    log_corpus_size = math.log(len(corpus.entries))

    total = 0.0
    for entry in corpus.entries:
        cand_vectors, cand_norms = _tfidf_vectors(
            _all_order_ngrams(entry.candidate), document_frequency, log_corpus_size
        )
        image_score = 0.0
        for ref in entry.references:
            ref_vectors, ref_norms = _tfidf_vectors(
                _all_order_ngrams(ref), document_frequency, log_corpus_size
            )
            length_penalty = math.exp(
                -((len(entry.candidate) - len(ref)) ** 2)
                / (2.0 * CIDER_LENGTH_SIGMA * CIDER_LENGTH_SIGMA)
            )
            for k in range(CIDER_MAX_ORDER):
                if cand_norms[k] == 0.0 or ref_norms[k] == 0.0:
                    continue
                dot = 0.0
                for gram, value in cand_vectors[k].items():
                    ref_value = ref_vectors[k].get(gram)
                    if ref_value is not None:
                        dot += min(value, ref_value) * ref_value
                image_score += length_penalty * dot / (cand_norms[k] * ref_norms[k])
        total += 10.0 * image_score / (CIDER_MAX_ORDER * len(entry.references))
    return total / len(corpus.entries)


# -- the combined report ----------------------------------------------------------


@dataclass(frozen=True)
class MetricReport:
    bleu_1: float
    bleu_2: float
    bleu_3: float
    bleu_4: float
    rouge_l: float
    cider_d: float
    images_scored: int

    def to_json(self) -> dict:
        """Fractions plus conventional display scales (percent, x100)."""
        return {
            "images_scored": self.images_scored,
            "bleu_1": self.bleu_1,
            "bleu_2": self.bleu_2,
            "bleu_3": self.bleu_3,
            "bleu_4": self.bleu_4,
            "rouge_l": self.rouge_l,
            "cider_d": self.cider_d,
            "percent": {
                "bleu_1": 100.0 * self.bleu_1,
                "bleu_2": 100.0 * self.bleu_2,
                "bleu_3": 100.0 * self.bleu_3,
                "bleu_4": 100.0 * self.bleu_4,
                "rouge_l": 100.0 * self.rouge_l,
            },
            "cider_d_x100": 100.0 * self.cider_d,
        }


def evaluate(corpus: EvalCorpus) -> MetricReport:
    """Score a corpus with every metric; independent of entry order."""
    return MetricReport(
        bleu_1=bleu(corpus, 1),
        bleu_2=bleu(corpus, 2),
        bleu_3=bleu(corpus, 3),
        bleu_4=bleu(corpus, 4),
        rouge_l=rouge_l(corpus),
        cider_d=cider_d(corpus),
        images_scored=len(corpus),
    )
