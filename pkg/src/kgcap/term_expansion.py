"""Expand detected objects into related-term sets via the knowledge graph.

Given a detector's (label, confidence) output, this module produces:

* ``objects``  - labels whose confidence clears the threshold,
* ``direct``   - the objects plus each object's top graph neighbors ranked by
  relatedness to that object alone,
* ``scene``    - graph terms ranked by weighted relatedness to the whole
  object set (weights are detection confidences),
* ``indirect`` - scene terms not already captured by ``direct``.

Ranked tuples for ``direct`` and ``indirect`` fix the order in which term
encoders consume the sets.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError
from .kg_store import KnowledgeGraph
from .retrofit import VectorStore, WeightedTermQuery, relatedness_score


@dataclass(frozen=True)
class DetectedObject:
    """One detector hit; the label is expected in graph normal form."""

    label: str
    confidence: float

    def __post_init__(self) -> None:
        if not self.label:
            raise ValidationError("detection with empty label")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(
                f"confidence for {self.label!r} must be in [0, 1], got {self.confidence}"
            )


@dataclass(frozen=True)
class ExpansionConfig:
    detection_threshold: float = 0.30
    per_object_k: int = 5
    scene_k: int = 10
    hop_limit: int = 2

    def __post_init__(self) -> None:
        if not 0.0 <= self.detection_threshold <= 1.0:
            raise ValidationError(f"detection_threshold must be in [0, 1], got {self.detection_threshold}")
        if self.per_object_k < 1:
            raise ValidationError(f"per_object_k must be >= 1, got {self.per_object_k}")
        if self.scene_k < 1:
            raise ValidationError(f"scene_k must be >= 1, got {self.scene_k}")
        if self.hop_limit < 1:
            raise ValidationError(f"hop_limit must be >= 1, got {self.hop_limit}")


@dataclass(frozen=True)
class TermSets:
    """The four term sets for one image plus deterministic encoder orderings."""

    objects: frozenset[str]
    direct: frozenset[str]
    indirect: frozenset[str]
    scene: frozenset[str]
    direct_ranked: tuple[str, ...]
    indirect_ranked: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.objects <= self.direct:
            raise ValidationError("every retained object must appear in the direct set")
        if self.indirect != self.scene - self.direct:
            raise ValidationError("indirect set must equal scene minus direct")


def filter_detections(
    detections: list[DetectedObject], config: ExpansionConfig = ExpansionConfig()
) -> dict[str, float]:
    """Labels at or above the confidence threshold, mapped to max confidence."""
    kept: dict[str, float] = {}
    for det in detections:
        if det.confidence >= config.detection_threshold:
            prior = kept.get(det.label)
            kept[det.label] = det.confidence if prior is None else max(prior, det.confidence)
    return kept


def _ranked(
    candidates: dict[str, int],
    query: WeightedTermQuery | None,
    store: VectorStore,
    top_k: int,
) -> list[str]:
    """Order candidates (term -> hop) and truncate.

    Terms scorable against the query come first, ascending by relatedness
    score (lower = more related) with hop then term breaking ties; terms that
    cannot be scored follow, ordered by hop then term.
    """
    scored: list[tuple[float, int, str]] = []
    unscored: list[tuple[int, str]] = []
    for term, hop in candidates.items():
        if query is not None and term in store:
            scored.append((relatedness_score(query, term, store), hop, term))
        else:
            unscored.append((hop, term))
    scored.sort()
    unscored.sort()
    ordered = [term for _, _, term in scored] + [term for _, term in unscored]
    return ordered[:top_k]


def expand_object(
    graph: KnowledgeGraph,
    store: VectorStore,
    obj: str,
    config: ExpansionConfig = ExpansionConfig(),
) -> list[str]:
    """Top hop-bounded neighbors of one object, most related first."""
    if obj not in graph:
        return []
    candidates = {term: hop for term, hop, _ in graph.neighbors(obj, config.hop_limit)}
    query = WeightedTermQuery((obj,)) if obj in store else None
    return _ranked(candidates, query, store, config.per_object_k)


def expand_scene(
    graph: KnowledgeGraph,
    store: VectorStore,
    confidences: dict[str, float],
    config: ExpansionConfig = ExpansionConfig(),
) -> list[str]:
    """Terms related to the whole detected-object set, most related first.

    The candidate pool is the union of the objects' hop-bounded neighborhoods
    minus the objects themselves; relatedness weights each object by its
    detection confidence. Objects with no vector (or zero confidence) drop out
    of the query; with no scorable object at all, candidates fall back to the
    hop/term ordering.
    """
    objects = sorted(confidences)
    candidates: dict[str, int] = {}
    for obj in objects:
        if obj not in graph:
            continue
        for term, hop, _ in graph.neighbors(obj, config.hop_limit):
            if term in confidences:
                continue
            prior = candidates.get(term)
            candidates[term] = hop if prior is None else min(prior, hop)
    query_words = tuple(o for o in objects if o in store and confidences[o] > 0)
    query = (
        WeightedTermQuery(query_words, tuple(confidences[o] for o in query_words))
        if query_words
        else None
    )
    return _ranked(candidates, query, store, config.scene_k)


def build_term_sets(
    graph: KnowledgeGraph,
    store: VectorStore,
    detections: list[DetectedObject],
    config: ExpansionConfig = ExpansionConfig(),
) -> TermSets:
    """Assemble all four term sets for one image's detections."""
    confidences = filter_detections(detections, config)
    object_order = sorted(confidences, key=lambda t: (-confidences[t], t))

    direct_ranked: list[str] = list(object_order)
    seen = set(direct_ranked)
    for obj in object_order:
        for term in expand_object(graph, store, obj, config):
            if term not in seen:
                direct_ranked.append(term)
                seen.add(term)

    scene_ranked = expand_scene(graph, store, confidences, config)
    direct = frozenset(direct_ranked)
    indirect_ranked = tuple(t for t in scene_ranked if t not in direct)

    return TermSets(
        objects=frozenset(confidences),
        direct=direct,
        indirect=frozenset(indirect_ranked),
        scene=frozenset(scene_ranked),
        direct_ranked=tuple(direct_ranked),
        indirect_ranked=indirect_ranked,
    )
