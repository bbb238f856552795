"""Shared text normal forms.

Two normal forms cover the whole package: one for graph/detector terms and one
for caption text. Every component that touches words goes through these two
functions, so scoring and training can never drift apart on tokenization.
"""

from __future__ import annotations

from .errors import ValidationError

# Characters stripped from the end of a caption before splitting.
_TERMINAL_PUNCTUATION = ".!?"


def normalize_term(text: str) -> str:
    """Normal form for a graph or detector term.

    Lowercases and collapses internal whitespace runs to a single underscore,
    so "Dining Room" and "dining  room" name the same graph vertex.
    """
    parts = text.lower().split()
    if not parts:
        raise ValidationError(f"term {text!r} is empty after normalization")
    return "_".join(parts)


def tokenize(caption: str) -> list[str]:
    """Tokenize caption text: lowercase, drop terminal punctuation, split.

    This is the single tokenizer used for vocabulary building, training
    targets, and metric scoring.
    """
    stripped = caption.lower().strip().rstrip(_TERMINAL_PUNCTUATION).rstrip()
    return stripped.split()
