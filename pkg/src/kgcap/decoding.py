"""Greedy and beam-search decoding for the caption model.

Scores are raw sums of per-token log-probabilities; there is no length
normalization. The end marker ends a hypothesis, and every tie is broken
deterministically: equal-probability tokens resolve to the lowest index, and
equal-score hypotheses resolve to the lexicographically smaller token
sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .caption_model import CaptionModelParams, EmbeddingInputs, decode_init, decode_step
from .errors import ValidationError

END_INDEX = 1  # fixed by the vocabulary layout


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 3
    max_length: int = 20

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ValidationError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.max_length < 1:
            raise ValidationError(f"max_length must be >= 1, got {self.max_length}")


def greedy_decode(
    model: CaptionModelParams, inputs: EmbeddingInputs, cfg: DecodeConfig = DecodeConfig()
) -> list[int]:
    """Follow the per-step argmax; returns the surface tokens (no markers).

    Generation stops at the end marker or after ``max_length`` emitted tokens,
    whichever comes first.
    """
    state, log_row = decode_init(model, inputs)
    surface: list[int] = []
    for _ in range(cfg.max_length):
        token = int(np.argmax(log_row))  # ties resolve to the lowest index
        if token == END_INDEX:
            break
        surface.append(token)
        state, log_row = decode_step(model, state, token)
    return surface


@dataclass
class _Hypothesis:
    tokens: tuple[int, ...]
    score: float
    state: object  # DecodeState
    log_row: np.ndarray


def beam_search(
    model: CaptionModelParams, inputs: EmbeddingInputs, cfg: DecodeConfig = DecodeConfig()
) -> list[tuple[tuple[int, ...], float]]:
    """Beam search; returns up to ``beam_size`` (sequence, log-probability).

    Each step expands every live hypothesis over the whole vocabulary and
    keeps the ``beam_size`` best extensions; extensions emitting the end
    marker retire into a completed pool. The result holds the best completed
    hypotheses, padded if they run short with the best still-unfinished
    hypotheses at the length horizon, and is sorted by descending score.
    Sequences are returned raw (the end marker stays visible on finished
    ones), so every returned sequence either ends with the end marker or has
    exactly ``max_length`` tokens.
    """
    state, log_row = decode_init(model, inputs)
    live: list[_Hypothesis] = [_Hypothesis((), 0.0, state, log_row)]
    completed: list[tuple[float, tuple[int, ...]]] = []

    for _ in range(cfg.max_length):
        if not live:
            break
        candidates: list[tuple[float, tuple[int, ...], _Hypothesis]] = []
        for hyp in live:
            scores = hyp.score + hyp.log_row
            for token in range(model.vocab_size):
                candidates.append((float(scores[token]), hyp.tokens + (token,), hyp))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        live = []
        for score, tokens, parent in candidates[: cfg.beam_size]:
            if tokens[-1] == END_INDEX:
                completed.append((score, tokens))
            else:
                new_state, new_row = decode_step(model, parent.state, tokens[-1])
                live.append(_Hypothesis(tokens, score, new_state, new_row))

    completed.sort(key=lambda c: (-c[0], c[1]))
    chosen = completed[: cfg.beam_size]
    if len(chosen) < cfg.beam_size and live:
        leftovers = sorted(((h.score, h.tokens) for h in live), key=lambda c: (-c[0], c[1]))
        chosen.extend(leftovers[: cfg.beam_size - len(chosen)])
    chosen.sort(key=lambda c: (-c[0], c[1]))
    return [(tokens, score) for score, tokens in chosen]


def strip_end(tokens: tuple[int, ...] | list[int]) -> list[int]:
    """Surface form of a beam hypothesis: drop a trailing end marker."""
    tokens = list(tokens)
    if tokens and tokens[-1] == END_INDEX:
        tokens.pop()
    return tokens
