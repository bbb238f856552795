"""JSON-lines dataset loading, vocabulary building, and batching.

One line per image:

    {"image_id": "...", "feature": [...],
     "detections": [{"label": "...", "confidence": 0.9}, ...],
     "references": ["a caption", ...]}

Features are fixed-width float vectors (a precomputed image embedding);
detections and references may be empty except that training records need at
least one reference.
"""

from __future__ import annotations

import collections
import json
import logging
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .term_expansion import DetectedObject
from .text import normalize_term, tokenize
from .vocab import Vocabulary

logger = logging.getLogger(__name__)


@dataclass
class ImageRecord:
    image_id: str
    feature: np.ndarray
    detections: list[DetectedObject] = field(default_factory=list)
    references: list[str] = field(default_factory=list)


@dataclass
class Dataset:
    records: list[ImageRecord]
    split: str = "train"
    feature_dim: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, ImageRecord]:
        return {r.image_id: r for r in self.records}


def _parse_record(obj: dict, line_number: int, feature_dim: int | None) -> tuple[ImageRecord, int]:
    if not isinstance(obj, dict):
        raise ValidationError("record is not a JSON object", line=line_number)
    for key in ("image_id", "feature"):
        if key not in obj:
            raise ValidationError(f"record is missing {key!r}", line=line_number)
    image_id = obj["image_id"]
    if not isinstance(image_id, str) or not image_id:
        raise ValidationError("image_id must be a non-empty string", line=line_number)
    try:
        feature = np.asarray(obj["feature"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"feature is not numeric: {exc}", line=line_number) from exc
    if feature.ndim != 1 or feature.size == 0:
        raise ValidationError("feature must be a non-empty flat list", line=line_number)
    if not np.all(np.isfinite(feature)):
        raise ValidationError("feature contains a non-finite value", line=line_number)
    if feature_dim is None:
        feature_dim = int(feature.shape[0])
    elif feature.shape[0] != feature_dim:
        raise ValidationError(
            f"feature width {feature.shape[0]} does not match earlier width {feature_dim}",
            line=line_number,
        )

    detections = []
    for det in obj.get("detections", []):
        if not isinstance(det, dict) or "label" not in det or "confidence" not in det:
            raise ValidationError("detection needs label and confidence", line=line_number)
        try:
            detections.append(
                DetectedObject(normalize_term(str(det["label"])), float(det["confidence"]))
            )
        except ValidationError as exc:
            raise ValidationError(str(exc), line=line_number) from exc

    references = obj.get("references", [])
    if not isinstance(references, list) or any(not isinstance(r, str) for r in references):
        raise ValidationError("references must be a list of strings", line=line_number)

    return ImageRecord(image_id, feature, detections, list(references)), feature_dim


def load_dataset(source: Iterable[str] | IO[str], split: str = "train") -> Dataset:
    """Parse JSON-lines records; errors carry the 1-based line number."""
    records: list[ImageRecord] = []
    seen: set[str] = set()
    feature_dim: int | None = None
    for line_number, raw in enumerate(source, start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON: {exc}", line=line_number) from exc
        record, feature_dim = _parse_record(obj, line_number, feature_dim)
        if record.image_id in seen:
            raise ValidationError(f"duplicate image_id {record.image_id!r}", line=line_number)
        if split == "train" and not record.references:
            raise ValidationError(
                f"training record {record.image_id!r} has no reference caption", line=line_number
            )
        seen.add(record.image_id)
        records.append(record)
    return Dataset(records, split=split, feature_dim=feature_dim or 0)


def export_dataset(dataset: Dataset, sink: IO[str]) -> None:
    """Inverse of load_dataset (floats round-trip exactly)."""
    for record in dataset.records:
        obj = {
            "image_id": record.image_id,
            "feature": [float(v) for v in record.feature],
            "detections": [
                {"label": d.label, "confidence": d.confidence} for d in record.detections
            ],
            "references": list(record.references),
        }
        sink.write(json.dumps(obj, sort_keys=True) + "\n")


# -- vocabulary ---------------------------------------------------------------


def build_vocabulary(dataset: Dataset, min_count: int = 4) -> Vocabulary:
    """Count reference tokens and keep words seen at least ``min_count`` times.

    Words are indexed by descending count, alphabetical within a count. The
    fraction of corpus tokens that fall below the cut (the unknown-word rate)
    is logged and attached to the result as ``unk_rate``.
    """
    if min_count < 1:
        raise ValidationError(f"min_count must be >= 1, got {min_count}")
    counts: collections.Counter[str] = collections.Counter()
    for record in dataset.records:
        for reference in record.references:
            counts.update(tokenize(reference))
    kept = sorted(
        (w for w, c in counts.items() if c >= min_count),
        key=lambda w: (-counts[w], w),
    )
    vocabulary = Vocabulary(kept, counts)
    total = sum(counts.values())
    covered = sum(counts[w] for w in kept)
    unk_rate = 0.0 if total == 0 else (total - covered) / total
    vocabulary.unk_rate = unk_rate
    logger.info(
        "vocabulary: %d words (+%d reserved), unknown-token rate %.4f",
        len(kept), 4, unk_rate,
    )
    return vocabulary


def encode_caption(vocabulary: Vocabulary, caption: str) -> list[int]:
    """Tokenize and encode one caption, wrapped in start/end markers."""
    return vocabulary.encode_tokens(tokenize(caption))


def decode_caption(vocabulary: Vocabulary, indices: Iterable[int]) -> str:
    """Surface text for a token-index sequence (control tokens dropped)."""
    return " ".join(vocabulary.surface(indices))


# -- batching -----------------------------------------------------------------


def shuffled_index_batches(
    count: int, batch_size: int, seed: int | Sequence[int]
) -> list[np.ndarray]:
    """Index batches for one seeded shuffle of ``count`` items.

    ``seed`` may be a sequence (e.g. ``(run_seed, epoch)``) so successive
    epochs get distinct but reproducible orders. The final short batch is
    kept.
    """
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng(seed).permutation(count)
    return [order[i : i + batch_size] for i in range(0, count, batch_size)]


def batches(
    dataset: Dataset, batch_size: int, seed: int | Sequence[int]
) -> list[list[ImageRecord]]:
    """One epoch of record batches under a seeded shuffle."""
    return [
        [dataset.records[i] for i in index_batch]
        for index_batch in shuffled_index_batches(len(dataset.records), batch_size, seed)
    ]
