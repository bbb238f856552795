"""Commonsense knowledge-graph store.

Edges arrive as CSV rows ``relation,start,end[,weight]`` and are stored
undirected: every edge is reachable from both endpoints. Multiple relations
may connect the same pair of terms; duplicate (relation, start, end) triples
keep the maximum weight. Hop-bounded neighborhood queries return a
deterministic ranking used by the term-expansion stage.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

from .errors import ParseError, ValidationError
from .text import normalize_term

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Edge:
    """One undirected, typed, weighted edge in canonical orientation."""

    relation: str
    start: str
    end: str
    weight: float = 1.0


class KnowledgeGraph:
    """Undirected multigraph over normalized terms.

    Adjacency is term -> neighbor -> relation -> weight. Self-loops are never
    stored, and the two directions of an edge are the same edge.
    """

    def __init__(self) -> None:
        self._adjacency: dict[str, dict[str, dict[str, float]]] = {}
        self._edge_count = 0

    # -- construction -------------------------------------------------------

    def add_edge(self, relation: str, start: str, end: str, weight: float = 1.0) -> None:
        """Insert one undirected edge between already-normalized terms."""
        if weight < 0:
            raise ValidationError(f"negative edge weight {weight!r} for {start!r}-{end!r}")
        if start == end:
            raise ValidationError(f"self-loop on term {start!r}")
        fresh = end not in self._adjacency.setdefault(start, {}) or relation not in self._adjacency[start][end]
        for a, b in ((start, end), (end, start)):
            relations = self._adjacency.setdefault(a, {}).setdefault(b, {})
            relations[relation] = max(relations.get(relation, float("-inf")), weight)
        if fresh:
            self._edge_count += 1

    # -- basic queries ------------------------------------------------------

    @property
    def term_count(self) -> int:
        return len(self._adjacency)

    @property
    def edge_count(self) -> int:
        """Number of distinct (relation, unordered pair) edges."""
        return self._edge_count

    def __contains__(self, term: str) -> bool:
        return term in self._adjacency

    def terms(self) -> list[str]:
        return sorted(self._adjacency)

    def degree(self, term: str) -> int:
        """Number of distinct neighbor terms (relation multiplicity ignored)."""
        return len(self._adjacency.get(term, {}))

    def neighbor_weights(self, term: str) -> dict[str, float]:
        """Distinct neighbors of ``term`` with the best weight over relations."""
        return {
            neighbor: max(relations.values())
            for neighbor, relations in self._adjacency.get(term, {}).items()
        }

    def neighbors(self, term: str, max_hops: int) -> list[tuple[str, int, float]]:
        """Terms reachable within ``max_hops`` hops, excluding ``term`` itself.

        Returns (term, hop distance, best edge weight) tuples ordered by hop,
        then descending weight, then term. A term's weight is that of the
        strongest edge connecting it to the previous ring, which makes the
        ranking independent of traversal order.
        """
        if max_hops < 1:
            raise ValidationError(f"max_hops must be >= 1, got {max_hops}")
        if term not in self._adjacency:
            raise ValidationError(f"unknown term {term!r}")
        results: list[tuple[str, int, float]] = []
        visited = {term}
        ring = [term]
        for hop in range(1, max_hops + 1):
            discovered: dict[str, float] = {}
            for source in ring:
                for neighbor, best in self.neighbor_weights(source).items():
                    if neighbor in visited:
                        continue
                    prior = discovered.get(neighbor)
                    discovered[neighbor] = best if prior is None else max(prior, best)
            if not discovered:
                break
            ordered = sorted(discovered.items(), key=lambda item: (-item[1], item[0]))
            results.extend((t, hop, w) for t, w in ordered)
            visited.update(discovered)
            ring = [t for t, _ in ordered]
        return results

    def edges(self) -> Iterator[Edge]:
        """All edges once each, in canonical (start <= end) orientation, sorted."""
        rows = []
        for a, neighbors in self._adjacency.items():
            for b, relations in neighbors.items():
                if a > b:
                    continue
                for relation, weight in relations.items():
                    rows.append(Edge(relation, a, b, weight))
        rows.sort(key=lambda e: (e.start, e.end, e.relation))
        return iter(rows)


def ingest_edges(source: Iterable[str] | IO[str]) -> KnowledgeGraph:
    """Build a graph from CSV lines ``relation,start,end[,weight]``.

    Blank lines and ``#`` comments are skipped. Terms are normalized, the
    missing weight defaults to 1.0, and rows that normalize to self-loops are
    dropped (counted in a debug log) rather than rejected.
    """
    graph = KnowledgeGraph()
    dropped = 0
    for line_number, raw in enumerate(source, start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            fields = next(csv.reader([stripped]))
        except csv.Error as exc:
            raise ParseError(f"bad CSV syntax: {exc}", line=line_number) from exc
        fields = [f.strip() for f in fields]
        if len(fields) not in (3, 4):
            raise ParseError(
                f"expected relation,start,end[,weight], got {len(fields)} fields", line=line_number
            )
        relation, start_raw, end_raw = fields[0], fields[1], fields[2]
        if not relation:
            raise ParseError("empty relation", line=line_number)
        weight = 1.0
        if len(fields) == 4:
            try:
                weight = float(fields[3])
            except ValueError as exc:
                raise ParseError(f"non-numeric weight {fields[3]!r}", line=line_number) from exc
        try:
            start = normalize_term(start_raw)
            end = normalize_term(end_raw)
        except ValidationError as exc:
            raise ParseError(str(exc), line=line_number) from exc
        if weight < 0:
            raise ValidationError(f"negative weight {weight}", line=line_number)
        if start == end:
            dropped += 1
            continue
        graph.add_edge(relation, start, end, weight)
    if dropped:
        logger.debug("dropped %d self-loop row(s) during ingestion", dropped)
    return graph


def export_edges(graph: KnowledgeGraph, sink: IO[str]) -> None:
    """Write the canonical CSV form; re-ingesting reproduces the graph."""
    writer = csv.writer(sink, lineterminator="\n")
    for edge in graph.edges():
        writer.writerow([edge.relation, edge.start, edge.end, repr(edge.weight)])


def edges_to_csv(graph: KnowledgeGraph) -> str:
    buffer = io.StringIO()
    export_edges(graph, buffer)
    return buffer.getvalue()
