"""Word-vector store, graph retrofitting, and weighted relatedness scoring.

Retrofitting pulls each stored vector toward its graph neighbors by exact
coordinate descent on the convex quadratic

    Psi(Q) = sum_i alpha_i ||q_i - qhat_i||^2
           + sum_{unordered edges (i, j)} beta_ij ||q_i - q_j||^2

where qhat is the original embedding. Each sweep minimizes Psi one vector at a
time, so with a symmetric per-edge beta the objective never increases and the
iteration converges to the unique stationary point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

import numpy as np

from .errors import ConfigurationError, MissingWordError, ParseError, ValidationError
from .kg_store import KnowledgeGraph

logger = logging.getLogger(__name__)

# Marker for the default edge-weight policy: 1 / (number of in-vocabulary
# neighbors of the vertex being updated).
INVERSE_DEGREE = "inverse_degree"


class VectorStore:
    """Immutable-by-convention mapping from term to a fixed-width vector."""

    def __init__(self, vectors: Mapping[str, np.ndarray], dim: int | None = None):
        self._vectors: dict[str, np.ndarray] = {}
        self.dim = dim
        for term, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1:
                raise ValidationError(f"vector for {term!r} is not one-dimensional")
            if self.dim is None:
                self.dim = arr.shape[0]
            elif arr.shape[0] != self.dim:
                raise ValidationError(
                    f"vector for {term!r} has width {arr.shape[0]}, expected {self.dim}"
                )
            self._vectors[term] = arr
        if self.dim is None:
            self.dim = 0

    def __contains__(self, term: str) -> bool:
        return term in self._vectors

    def __getitem__(self, term: str) -> np.ndarray:
        try:
            return self._vectors[term]
        except KeyError:
            raise MissingWordError(term) from None

    def __len__(self) -> int:
        return len(self._vectors)

    def get(self, term: str) -> np.ndarray | None:
        return self._vectors.get(term)

    def terms(self) -> list[str]:
        return sorted(self._vectors)

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(self._vectors)


def load_vectors(source: Iterable[str] | IO[str]) -> VectorStore:
    """Read the whitespace text format: one ``term v1 ... vd`` row per line."""
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    for line_number, raw in enumerate(source, start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) < 2:
            raise ParseError("expected a term followed by at least one value", line=line_number)
        term = parts[0]
        try:
            values = np.array([float(p) for p in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"non-numeric vector component: {exc}", line=line_number) from exc
        if dim is None:
            dim = values.shape[0]
        elif values.shape[0] != dim:
            raise ParseError(
                f"vector width {values.shape[0]} does not match earlier width {dim}",
                line=line_number,
            )
        if term in vectors:
            raise ValidationError(f"duplicate term {term!r}", line=line_number)
        vectors[term] = values
    return VectorStore(vectors, dim)


def save_vectors(store: VectorStore, sink: IO[str]) -> None:
    """Write the same text format, terms sorted, full float precision."""
    for term in store.terms():
        values = " ".join(repr(v) for v in store[term])
        sink.write(f"{term} {values}\n")


# -- retrofitting ------------------------------------------------------------


@dataclass(frozen=True)
class RetrofitConfig:
    """Knobs for the retrofitting sweep.

    ``alpha`` anchors each vector to its original value and may be a constant
    or a per-term mapping. ``beta`` weights graph edges: a constant, a mapping
    keyed by (term, term) pairs (either orientation), or the default
    inverse-degree policy evaluated at the vertex being updated. Every updated
    vertex must end up with alpha + sum(beta over its edges) > 0.
    """

    alpha: float | Mapping[str, float] = 1.0
    beta: float | Mapping[tuple[str, str], float] | str = INVERSE_DEGREE
    max_iterations: int = 10
    tolerance: float = 1e-8

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ConfigurationError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.tolerance < 0:
            raise ConfigurationError(f"tolerance must be >= 0, got {self.tolerance}")
        if isinstance(self.beta, str) and self.beta != INVERSE_DEGREE:
            raise ConfigurationError(f"unknown beta policy {self.beta!r}")

    def alpha_for(self, term: str) -> float:
        value = self.alpha.get(term, 1.0) if isinstance(self.alpha, Mapping) else float(self.alpha)
        if value < 0:
            raise ConfigurationError(f"alpha for {term!r} is negative: {value}")
        return value

    def beta_for(self, updated: str, neighbor: str, updated_degree: int) -> float:
        """Edge weight used when ``updated`` absorbs ``neighbor``.

        ``updated_degree`` is the number of in-vocabulary neighbors of the
        updated vertex, so the default policy spreads unit mass over the
        neighbors that actually contribute.
        """
        if isinstance(self.beta, str):
            value = 1.0 / updated_degree
        elif isinstance(self.beta, Mapping):
            found = self.beta.get((updated, neighbor))
            if found is None:
                found = self.beta.get((neighbor, updated))
            if found is None:
                raise ConfigurationError(f"no beta entry for edge ({updated!r}, {neighbor!r})")
            value = float(found)
        else:
            value = float(self.beta)
        if value < 0:
            raise ConfigurationError(f"beta for ({updated!r}, {neighbor!r}) is negative: {value}")
        return value


def _shared_neighbors(graph: KnowledgeGraph, store: VectorStore) -> dict[str, list[str]]:
    """In-vocabulary neighbor lists for every graph term that has a vector."""
    shared: dict[str, list[str]] = {}
    for term in graph.terms():
        if term not in store:
            continue
        neighbors = sorted(n for n in graph.neighbor_weights(term) if n in store)
        shared[term] = neighbors
    return shared


def objective(
    original: VectorStore,
    current: VectorStore,
    graph: KnowledgeGraph,
    config: RetrofitConfig = RetrofitConfig(),
) -> float:
    """Evaluate Psi for ``current`` against ``original`` and the graph.

    Each unordered edge with both endpoints in the vocabulary contributes
    exactly once; asymmetric beta policies are read at the lexicographically
    smaller endpoint so the sum is well defined.
    """
    if original.dim != current.dim or set(original.terms()) != set(current.terms()):
        raise ValidationError("original and current stores must share vocabulary and width")
    shared = _shared_neighbors(graph, original)
    total = 0.0
    for term in original.terms():
        diff = current[term] - original[term]
        total += config.alpha_for(term) * float(diff @ diff)
    for term, neighbors in shared.items():
        degree = len(neighbors)
        for neighbor in neighbors:
            if neighbor <= term:
                continue  # count each unordered edge once
            beta = config.beta_for(term, neighbor, degree)
            gap = current[term] - current[neighbor]
            total += beta * float(gap @ gap)
    return total


def retrofit(
    original: VectorStore,
    graph: KnowledgeGraph,
    config: RetrofitConfig = RetrofitConfig(),
) -> VectorStore:
    """Return vectors pulled toward graph neighbors by coordinate descent.

    Vectors for terms outside the graph, and for graph terms with no
    in-vocabulary neighbor, are returned unchanged. Sweeps run in
    lexicographic term order until the largest per-coordinate change falls
    below ``config.tolerance`` or ``config.max_iterations`` is reached.
    """
    shared = _shared_neighbors(graph, original)
    targets = [term for term, neighbors in shared.items() if neighbors]
    vectors = {term: original[term].copy() for term in original.terms()}

    for sweep in range(config.max_iterations):
        largest_change = 0.0
        for term in targets:
            neighbors = shared[term]
            degree = len(neighbors)
            alpha = config.alpha_for(term)
            betas = np.array(
                [config.beta_for(term, n, degree) for n in neighbors], dtype=np.float64
            )
            denominator = alpha + float(betas.sum())
            if denominator <= 0:
                raise ConfigurationError(
                    f"term {term!r} has alpha + sum(beta) = {denominator}; nothing anchors it"
                )
            pulled = alpha * original[term]
            for beta, neighbor in zip(betas, neighbors):
                pulled = pulled + beta * vectors[neighbor]
            updated = pulled / denominator
            change = float(np.max(np.abs(updated - vectors[term])))
            largest_change = max(largest_change, change)
            vectors[term] = updated
        logger.debug("retrofit sweep %d: largest coordinate change %.3e", sweep + 1, largest_change)
        if largest_change < config.tolerance:
            break
    return VectorStore(vectors, original.dim)


# -- relatedness -------------------------------------------------------------


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cosine similarity, in [0, 2]; zero-norm inputs score a neutral 1."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 1.0
    return 1.0 - float(a @ b) / (norm_a * norm_b)


@dataclass(frozen=True)
class WeightedTermQuery:
    """A bag of query terms with positive importance weights."""

    words: tuple[str, ...]
    weights: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        weights = self.weights if self.weights else tuple(1.0 for _ in self.words)
        object.__setattr__(self, "weights", weights)
        if not self.words:
            raise ValidationError("query needs at least one word")
        if len(self.words) != len(self.weights):
            raise ValidationError("query words and weights differ in length")
        if any(w <= 0 for w in self.weights):
            raise ValidationError("query weights must be positive")


def relatedness_score(query: WeightedTermQuery, word: str, store: VectorStore) -> float:
    """Weighted mean cosine distance from ``word`` to the query terms.

    Lower is more related. Raises MissingWordError if ``word`` or any query
    term has no stored vector.
    """
    target = store[word]
    numerator = 0.0
    for term, weight in zip(query.words, query.weights):
        numerator += weight * cosine_distance(store[term], target)
    return numerator / sum(query.weights)
