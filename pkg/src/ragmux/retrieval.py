"""Retrieval modes: dense inner-product search, personalized-PageRank graph
walks, and reciprocal-rank fusion of the two, behind one dispatched entry point.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import CorpusStore, GraphNode, canonical_entity
from .embeddings import EmbeddingProvider, normalize_rows
from .errors import (DimensionMismatch, EmbeddingProviderError, EmptySeedSet,
                     GraphUnavailable, UnknownSeedNode)


class RetrievalMode(enum.Enum):
    PASSAGE = "passage"
    GRAPH = "graph"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class RankedList:
    """Ordered (passage id, score) entries.

    Scores are non-increasing, equal scores are ordered by ascending id, and
    ids are unique. ``meta`` carries non-contractual flags such as the dense
    fallback marker.
    """

    entries: tuple[tuple[str, float], ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        seen: set[str] = set()
        prev: float | None = None
        prev_id = ""
        for pid, score in self.entries:
            if pid in seen:
                raise ValueError(f"duplicate passage id {pid!r} in ranked list")
            seen.add(pid)
            if prev is not None:
                if score > prev:
                    raise ValueError("scores must be non-increasing")
                if score == prev and pid < prev_id:
                    raise ValueError("equal scores must be ordered by ascending id")
            prev, prev_id = score, pid

    @classmethod
    def from_scores(cls, scores: dict[str, float], top_k: int | None = None,
                    meta: dict | None = None) -> "RankedList":
        ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
        if top_k is not None:
            ordered = ordered[:top_k]
        return cls(entries=tuple(ordered), meta=meta or {})

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(pid for pid, _ in self.entries)

    def ranks(self) -> dict[str, int]:
        """1-based rank per passage id."""
        return {pid: i + 1 for i, (pid, _) in enumerate(self.entries)}

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class PPRParams:
    damping: float = 0.5
    tolerance: float = 1e-8
    max_iterations: int = 200

    def __post_init__(self):
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie in (0, 1)")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")


@dataclass(frozen=True)
class PPRResult:
    scores: dict[GraphNode, float]
    iterations: int
    converged: bool


@dataclass(frozen=True)
class ModeCosts:
    """Deterministic unit cost per retrieval mode.

    Graph walks cost more than dense lookups; hybrid shares work, so its
    cost may not exceed the sum of the other two.
    """

    passage: float = 1.0
    graph: float = 3.0
    hybrid: float = 4.0

    def __post_init__(self):
        if min(self.passage, self.graph, self.hybrid) < 0.0:
            raise ValueError("unit costs must be non-negative")
        if self.hybrid > self.passage + self.graph:
            raise ValueError("hybrid cost must not exceed passage + graph")

    def of(self, mode: RetrievalMode) -> float:
        return {RetrievalMode.PASSAGE: self.passage, RetrievalMode.GRAPH: self.graph,
                RetrievalMode.HYBRID: self.hybrid}[mode]


@dataclass(frozen=True)
class RetrievalCost:
    wall_seconds: float = 0.0
    unit_cost: float = 0.0

    def __post_init__(self):
        if self.wall_seconds < 0.0 or self.unit_cost < 0.0:
            raise ValueError("costs must be non-negative")

    def __add__(self, other: "RetrievalCost") -> "RetrievalCost":
        return RetrievalCost(self.wall_seconds + other.wall_seconds,
                             self.unit_cost + other.unit_cost)

    @classmethod
    def zero(cls) -> "RetrievalCost":
        return cls(0.0, 0.0)


def rrf_fuse(list_p: RankedList, list_g: RankedList, rrf_k: int = 60,
             top_k: int | None = None) -> RankedList:
    """Fuse two ranked lists by summed reciprocal rank, 1/(rrf_k + rank).

    Ranks are 1-based; a document absent from a list contributes no term for
    it. Ties break by ascending passage id.
    """
    if rrf_k <= 0:
        raise ValueError("rrf_k must be positive")
    fused: dict[str, float] = {}
    for ranked in (list_p, list_g):
        for pid, rank in ranked.ranks().items():
            fused[pid] = fused.get(pid, 0.0) + 1.0 / (rrf_k + rank)
    return RankedList.from_scores(fused, top_k=top_k)


class RetrievalEngine:
    """Mode-dispatched retrieval over an immutable :class:`CorpusStore`.

    All operations are pure with respect to the store; any number of
    concurrent calls is safe.
    """

    def __init__(self, store: CorpusStore, embedder: EmbeddingProvider,
                 ppr_params: PPRParams | None = None, n_seed: int = 5,
                 similarity_floor: float = 0.0, rrf_k: int = 60,
                 mode_costs: ModeCosts | None = None):
        self.store = store
        self.embedder = embedder
        self.ppr_params = ppr_params or PPRParams()
        self.n_seed = n_seed
        self.similarity_floor = similarity_floor
        self.rrf_k = rrf_k
        self.mode_costs = mode_costs or ModeCosts()

    # --- dense ---

    def dense_retrieve(self, query_vector: np.ndarray, top_k: int) -> RankedList:
        """Top passages by inner product (cosine, since vectors are unit)."""
        if top_k <= 0:
            raise ValueError("top_k must be positive")
        query_vector = np.asarray(query_vector, dtype=np.float64)
        if query_vector.shape != (self.store.dim,):
            raise DimensionMismatch(
                f"query dim {query_vector.shape} != store dim ({self.store.dim},)")
        ids = self.store.embedded_passage_ids
        if not ids:
            return RankedList(entries=())
        scores = self.store.passage_matrix @ query_vector
        # ids are pre-sorted, so a stable sort on -score breaks ties by id
        order = np.argsort(-scores, kind="stable")[:top_k]
        return RankedList(entries=tuple((ids[i], float(scores[i])) for i in order))

    # --- graph ---

    def personalized_pagerank(self, seeds: dict[GraphNode, float],
                              params: PPRParams | None = None) -> PPRResult:
        """Random walk with restart to the seed distribution.

        Iterates s <- (1-d)*p + d*W*s until the successive-iterate L1
        distance drops below the tolerance or the iteration cap is hit.
        Scores are non-negative and sum to 1 within the tolerance.
        """
        params = params or self.ppr_params
        gi = self.store.graph_index
        if not seeds:
            raise UnknownSeedNode("seed set is empty")
        p = np.zeros(gi.size)
        for node, weight in seeds.items():
            if node not in gi.index:
                raise UnknownSeedNode(f"seed node {node!r} not in graph")
            if weight <= 0.0:
                raise ValueError(f"seed weight for {node!r} must be positive")
            p[gi.index[node]] = weight
        p /= p.sum()

        d = params.damping
        s = p.copy()
        converged = False
        iterations = 0
        for iterations in range(1, params.max_iterations + 1):
            s_next = (1.0 - d) * p + d * (gi.transition @ s)
            if np.abs(s_next - s).sum() < params.tolerance:
                s = s_next
                converged = True
                break
            s = s_next
        return PPRResult(
            scores={node: float(s[i]) for i, node in enumerate(gi.nodes)},
            iterations=iterations, converged=converged)

    def link_seeds(self, query_vector: np.ndarray, query_text: str,
                   ) -> dict[GraphNode, float]:
        """Map a query onto graph entities.

        Entities score by embedding similarity (fact embeddings, when
        present, pass their similarity to their subject/object entities);
        the top ``n_seed`` entities above the floor become seeds. Entities
        whose canonical name appears verbatim in the query are always
        included, at the weight of the strongest similarity seed.
        """
        store = self.store
        weights: dict[str, float] = {}
        if len(store.embedded_entities):
            sims = store.entity_matrix @ query_vector
            for entity, sim in zip(store.embedded_entities, sims):
                weights[entity] = max(weights.get(entity, 0.0), float(sim))
        for key, vec in store.fact_items():
            subject, obj = _triple_endpoints(key)
            if subject is None:
                continue
            sim = float(vec @ query_vector)
            for entity in (subject, obj):
                if entity in store.graph.entity_nodes:
                    weights[entity] = max(weights.get(entity, 0.0), sim)

        candidates = sorted(weights.items(), key=lambda item: (-item[1], item[0]))
        selected = {e: w for e, w in candidates[: self.n_seed]
                    if w > self.similarity_floor}

        query_tokens = canonical_entity(query_text).split()
        forced = [e for e in sorted(store.graph.entity_nodes)
                  if _contains_tokens(query_tokens, e.split())]
        if forced:
            force_weight = max(selected.values()) if selected else 1.0
            for entity in forced:
                selected[entity] = force_weight
        if not selected:
            raise EmptySeedSet("no entity similarity above floor and no verbatim mention")
        return {GraphNode("entity", e): w for e, w in selected.items()}

    def graph_retrieve(self, query_vector: np.ndarray, query_text: str, top_k: int,
                       params: PPRParams | None = None) -> RankedList:
        """Rank passages by personalized-PageRank mass from query-linked seeds.

        Falls back to dense retrieval (flagged in ``meta``) when seed linking
        comes up empty.
        """
        if not self.store.has_graph:
            raise GraphUnavailable("no graph loaded (no passage nodes)")
        try:
            seeds = self.link_seeds(query_vector, query_text)
        except EmptySeedSet:
            ranked = self.dense_retrieve(query_vector, top_k)
            return RankedList(entries=ranked.entries,
                              meta={"fallback": "dense", "reason": "empty_seed_set"})
        result = self.personalized_pagerank(seeds, params)
        scores = {
            pid: result.scores.get(GraphNode("passage", pid), 0.0)
            for pid in self.store.passage_ids
        }
        ranked = RankedList.from_scores(scores, top_k=top_k)
        return RankedList(entries=ranked.entries,
                          meta={"ppr_iterations": result.iterations,
                                "ppr_converged": result.converged,
                                "seeds": {n.key: w for n, w in sorted(seeds.items())}})

    # --- dispatch ---

    def retrieve(self, query_text: str, mode: RetrievalMode, top_k: int,
                 ) -> tuple[RankedList, RetrievalCost]:
        """Embed the query and retrieve under the requested mode.

        Hybrid fuses the full-length dense and graph lists before truncating,
        so fusion candidates are never discarded early.
        """
        start = time.perf_counter()
        if mode in (RetrievalMode.GRAPH, RetrievalMode.HYBRID) and not self.store.has_graph:
            raise GraphUnavailable("graph or hybrid mode requires a loaded graph")
        try:
            query_vector = self.embedder.embed([query_text])[0]
        except EmbeddingProviderError:
            raise
        except Exception as exc:
            raise EmbeddingProviderError(f"embedding provider failed: {exc}") from exc
        if query_vector.shape != (self.store.dim,):
            raise DimensionMismatch(
                f"provider dim {query_vector.shape} != store dim ({self.store.dim},)")
        query_vector = normalize_rows(query_vector)

        if mode is RetrievalMode.PASSAGE:
            ranked = self.dense_retrieve(query_vector, top_k)
        elif mode is RetrievalMode.GRAPH:
            ranked = self.graph_retrieve(query_vector, query_text, top_k)
        else:
            full = max(len(self.store.passage_ids), 1)
            dense_full = self.dense_retrieve(query_vector, full)
            graph_full = self.graph_retrieve(query_vector, query_text, full)
            if graph_full.meta.get("fallback"):
                fused = rrf_fuse(dense_full, RankedList(entries=()),
                                 rrf_k=self.rrf_k, top_k=top_k)
                ranked = RankedList(entries=fused.entries,
                                    meta={"fallback": "dense", "reason": "empty_seed_set"})
            else:
                ranked = rrf_fuse(dense_full, graph_full, rrf_k=self.rrf_k, top_k=top_k)
        cost = RetrievalCost(wall_seconds=time.perf_counter() - start,
                             unit_cost=self.mode_costs.of(mode))
        return ranked, cost


def _triple_endpoints(key: str) -> tuple[str | None, str | None]:
    """Decode a fact key '["s", "r", "o"]' to its subject/object entities."""
    import json

    try:
        triple = json.loads(key)
    except (ValueError, TypeError):
        return None, None
    if (isinstance(triple, list) and len(triple) == 3
            and all(isinstance(x, str) for x in triple)):
        return canonical_entity(triple[0]), canonical_entity(triple[2])
    return None, None


def _contains_tokens(haystack: list[str], needle: list[str]) -> bool:
    """True when needle occurs as a contiguous token run inside haystack."""
    if not needle or len(needle) > len(haystack):
        return False
    return any(haystack[i:i + len(needle)] == needle
               for i in range(len(haystack) - len(needle) + 1))
