"""Immutable corpus artifacts: passages, embeddings, and the knowledge graph.

File formats (UTF-8, one JSON record per line):

* passages:   ``{"id": str, "title": str, "text": str}``
* embeddings: ``{"owner_id": str, "kind": "passage"|"entity"|"fact", "vector": [float, ...]}``
* graph:      ``{"type": "relation", "s": str, "r": str, "o": str}``
              | ``{"type": "mention", "e": str, "p": str}``
              | ``{"type": "synonym", "a": str, "b": str, "w": float}``

Entity names are canonicalized (case-folded, whitespace-collapsed) on load,
and every vector is re-normalized to unit L2 norm. Fact embeddings are keyed
by the JSON-encoded triple, e.g. ``["dave koz", "recorded", "hello tomorrow"]``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .embeddings import normalize_rows
from .errors import DanglingEdge, DimensionMismatch, DuplicateId, MalformedRecord

EMBEDDING_KINDS = ("passage", "entity", "fact")


def canonical_entity(name: str) -> str:
    """Canonical node key: case-folded with runs of whitespace collapsed."""
    return " ".join(name.split()).casefold()


@dataclass(frozen=True)
class Passage:
    id: str
    title: str
    text: str


@dataclass(frozen=True)
class KnowledgeGraph:
    """Typed nodes and edges; synonym edges are undirected and stored once."""

    entity_nodes: frozenset[str]
    passage_nodes: frozenset[str]
    relation_edges: frozenset[tuple[str, str, str]]
    mention_edges: frozenset[tuple[str, str]]
    synonym_edges: frozenset[tuple[str, str, float]]

    @property
    def is_empty(self) -> bool:
        return not (self.entity_nodes or self.passage_nodes)


class GraphNode(NamedTuple):
    kind: str  # "entity" | "passage"
    key: str


@dataclass(frozen=True)
class GraphIndex:
    """Graph compiled for random walks.

    ``transition`` is column-stochastic: entry (i, j) is the probability of
    stepping to node i from node j, built from the undirected union of
    relation, mention, and synonym edges with out-degree normalization.
    Nodes with no edges get a self-loop so no probability mass is lost.
    """

    nodes: tuple[GraphNode, ...]
    index: dict[GraphNode, int]
    transition: sp.csr_matrix

    @property
    def size(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class ValidationFinding:
    kind: str  # "dangling_mention" | "dangling_endpoint" | "orphan_node"
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[ValidationFinding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings


@dataclass(frozen=True)
class StoreCounts:
    passages: int
    embeddings: int
    entities: int
    relation_edges: int
    mention_edges: int
    synonym_edges: int


def _read_records(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path.name}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise MalformedRecord(f"{path.name}:{lineno}: record is not an object")
            yield lineno, record


def _require(record: dict, keys: tuple[str, ...], where: str) -> None:
    for key in keys:
        if key not in record:
            raise MalformedRecord(f"{where}: missing field {key!r}")


class CorpusStore:
    """Read-only view over loaded passages, embeddings, and the graph.

    Construct via :func:`load_corpus`. Safe for unlimited concurrent readers.
    """

    def __init__(self, passages: dict[str, Passage], dim: int,
                 vectors: dict[str, dict[str, np.ndarray]], graph: KnowledgeGraph,
                 graph_index: GraphIndex):
        self._passages = passages
        self._dim = dim
        self._vectors = vectors  # kind -> owner -> unit vector
        self._graph = graph
        self._graph_index = graph_index
        self._passage_ids = tuple(sorted(passages))
        embedded = [pid for pid in self._passage_ids if pid in vectors["passage"]]
        self._embedded_passage_ids = tuple(embedded)
        if embedded:
            self._passage_matrix = np.stack([vectors["passage"][pid] for pid in embedded])
        else:
            self._passage_matrix = np.zeros((0, dim))
        entities = sorted(set(vectors["entity"]) & set(graph.entity_nodes))
        self._embedded_entities = tuple(entities)
        if entities:
            self._entity_matrix = np.stack([vectors["entity"][e] for e in entities])
        else:
            self._entity_matrix = np.zeros((0, dim))

    # --- passages ---

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def passage_ids(self) -> tuple[str, ...]:
        return self._passage_ids

    def passage(self, passage_id: str) -> Passage:
        return self._passages[passage_id]

    @property
    def embedded_passage_ids(self) -> tuple[str, ...]:
        return self._embedded_passage_ids

    @property
    def passage_matrix(self) -> np.ndarray:
        """Unit vectors aligned with ``embedded_passage_ids`` (rows)."""
        return self._passage_matrix

    # --- embeddings ---

    def vectors(self, kind: str) -> dict[str, np.ndarray]:
        return dict(self._vectors[kind])

    @property
    def embedded_entities(self) -> tuple[str, ...]:
        """Graph entities that carry an embedding, sorted."""
        return self._embedded_entities

    @property
    def entity_matrix(self) -> np.ndarray:
        return self._entity_matrix

    def fact_items(self) -> list[tuple[str, np.ndarray]]:
        return sorted(self._vectors["fact"].items())

    # --- graph ---

    @property
    def graph(self) -> KnowledgeGraph:
        return self._graph

    @property
    def graph_index(self) -> GraphIndex:
        return self._graph_index

    @property
    def has_graph(self) -> bool:
        return bool(self._graph.passage_nodes)

    # --- introspection ---

    def counts(self) -> StoreCounts:
        return StoreCounts(
            passages=len(self._passages),
            embeddings=sum(len(v) for v in self._vectors.values()),
            entities=len(self._graph.entity_nodes),
            relation_edges=len(self._graph.relation_edges),
            mention_edges=len(self._graph.mention_edges),
            synonym_edges=len(self._graph.synonym_edges),
        )

    def canonical_bytes(self) -> bytes:
        """Stable serialization of everything loaded, for determinism checks."""
        payload = {
            "dim": self._dim,
            "passages": [
                [p.id, p.title, p.text] for p in
                (self._passages[pid] for pid in self._passage_ids)
            ],
            "vectors": {
                kind: [[owner, self._vectors[kind][owner].tolist()]
                       for owner in sorted(self._vectors[kind])]
                for kind in EMBEDDING_KINDS
            },
            "graph": {
                "entities": sorted(self._graph.entity_nodes),
                "passages": sorted(self._graph.passage_nodes),
                "relations": sorted(self._graph.relation_edges),
                "mentions": sorted(self._graph.mention_edges),
                "synonyms": sorted(self._graph.synonym_edges),
            },
        }
        return json.dumps(payload, sort_keys=True).encode("utf-8")

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()


def _load_passages(path: Path) -> dict[str, Passage]:
    passages: dict[str, Passage] = {}
    for lineno, record in _read_records(path):
        where = f"{path.name}:{lineno}"
        _require(record, ("id", "title", "text"), where)
        pid, title, text = record["id"], record["title"], record["text"]
        if not isinstance(pid, str) or not isinstance(title, str) or not isinstance(text, str):
            raise MalformedRecord(f"{where}: id/title/text must be strings")
        if not text:
            raise MalformedRecord(f"{where}: passage text is empty")
        if pid in passages:
            raise DuplicateId(f"{where}: duplicate passage id {pid!r}")
        passages[pid] = Passage(id=pid, title=title, text=text)
    return passages


def _load_embeddings(path: Path, passages: dict[str, Passage],
                     ) -> tuple[int, dict[str, dict[str, np.ndarray]]]:
    vectors: dict[str, dict[str, np.ndarray]] = {k: {} for k in EMBEDDING_KINDS}
    dim: int | None = None
    for lineno, record in _read_records(path):
        where = f"{path.name}:{lineno}"
        _require(record, ("owner_id", "kind", "vector"), where)
        owner, kind, raw = record["owner_id"], record["kind"], record["vector"]
        if kind not in EMBEDDING_KINDS:
            raise MalformedRecord(f"{where}: unknown kind {kind!r}")
        if not isinstance(raw, list) or not raw or \
                not all(isinstance(x, (int, float)) for x in raw):
            raise MalformedRecord(f"{where}: vector must be a non-empty list of numbers")
        vec = np.asarray(raw, dtype=np.float64)
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise DimensionMismatch(
                f"{where}: vector dim {vec.shape[0]} differs from store dim {dim}")
        if kind == "entity":
            owner = canonical_entity(owner)
        if kind == "passage" and owner not in passages:
            raise DanglingEdge(f"{where}: passage embedding for unknown id {owner!r}")
        if owner in vectors[kind]:
            raise DuplicateId(f"{where}: duplicate {kind} embedding for {owner!r}")
        vectors[kind][owner] = normalize_rows(vec)
    return (dim if dim is not None else 0), vectors


def _load_graph(path: Path, passages: dict[str, Passage]) -> KnowledgeGraph:
    entities: set[str] = set()
    passage_nodes: set[str] = set()
    relations: set[tuple[str, str, str]] = set()
    mentions: set[tuple[str, str]] = set()
    synonyms: dict[tuple[str, str], float] = {}
    for lineno, record in _read_records(path):
        where = f"{path.name}:{lineno}"
        etype = record.get("type")
        if etype == "relation":
            _require(record, ("s", "r", "o"), where)
            s, o = canonical_entity(record["s"]), canonical_entity(record["o"])
            relations.add((s, record["r"], o))
            entities.update((s, o))
        elif etype == "mention":
            _require(record, ("e", "p"), where)
            e, p = canonical_entity(record["e"]), record["p"]
            if p not in passages:
                raise DanglingEdge(f"{where}: mention edge to unknown passage {p!r}")
            mentions.add((e, p))
            entities.add(e)
            passage_nodes.add(p)
        elif etype == "synonym":
            _require(record, ("a", "b", "w"), where)
            weight = record["w"]
            if not isinstance(weight, (int, float)) or not 0.0 <= weight <= 1.0:
                raise MalformedRecord(f"{where}: synonym weight must lie in [0, 1]")
            a, b = sorted((canonical_entity(record["a"]), canonical_entity(record["b"])))
            synonyms[(a, b)] = float(weight)
            entities.update((a, b))
        else:
            raise MalformedRecord(f"{where}: unknown edge type {etype!r}")
    return KnowledgeGraph(
        entity_nodes=frozenset(entities),
        passage_nodes=frozenset(passage_nodes),
        relation_edges=frozenset(relations),
        mention_edges=frozenset(mentions),
        synonym_edges=frozenset((a, b, w) for (a, b), w in synonyms.items()),
    )


def compile_graph(graph: KnowledgeGraph) -> GraphIndex:
    """Build the column-stochastic transition operator from the edge lists."""
    nodes = tuple(
        [GraphNode("entity", e) for e in sorted(graph.entity_nodes)]
        + [GraphNode("passage", p) for p in sorted(graph.passage_nodes)]
    )
    index = {node: i for i, node in enumerate(nodes)}
    n = len(nodes)
    weights: dict[tuple[int, int], float] = {}

    def add(a: GraphNode, b: GraphNode, w: float) -> None:
        if w == 0.0:  # carries no transition mass; the node may end up dangling
            return
        i, j = index[a], index[b]
        weights[(i, j)] = weights.get((i, j), 0.0) + w
        if i != j:
            weights[(j, i)] = weights.get((j, i), 0.0) + w

    for s, _, o in sorted(graph.relation_edges):
        add(GraphNode("entity", s), GraphNode("entity", o), 1.0)
    for e, p in sorted(graph.mention_edges):
        add(GraphNode("entity", e), GraphNode("passage", p), 1.0)
    for a, b, w in sorted(graph.synonym_edges):
        add(GraphNode("entity", a), GraphNode("entity", b), w)

    out_degree = np.zeros(n)
    for (_, j), w in weights.items():
        out_degree[j] += w
    rows, cols, data = [], [], []
    for (i, j), w in sorted(weights.items()):
        rows.append(i)
        cols.append(j)
        data.append(w / out_degree[j])
    for j in range(n):  # dangling nodes keep their mass via a self-loop
        if out_degree[j] == 0.0:
            rows.append(j)
            cols.append(j)
            data.append(1.0)
    transition = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return GraphIndex(nodes=nodes, index=index, transition=transition)


def load_corpus(passages_path: str | Path, embeddings_path: str | Path,
                graph_path: str | Path) -> CorpusStore:
    """Load and validate the three corpus files into an immutable store."""
    passages = _load_passages(Path(passages_path))
    dim, vectors = _load_embeddings(Path(embeddings_path), passages)
    graph = _load_graph(Path(graph_path), passages)
    return CorpusStore(passages=passages, dim=dim, vectors=vectors, graph=graph,
                       graph_index=compile_graph(graph))


def load_corpus_dir(corpus_dir: str | Path) -> CorpusStore:
    """Load a directory holding passages.jsonl, embeddings.jsonl, graph.jsonl."""
    base = Path(corpus_dir)
    return load_corpus(base / "passages.jsonl", base / "embeddings.jsonl",
                       base / "graph.jsonl")


def validate_graph(graph: KnowledgeGraph, store: CorpusStore) -> ValidationReport:
    """List every dangling edge and orphan node; empty report means all clear."""
    findings: list[ValidationFinding] = []
    for e, p in sorted(graph.mention_edges):
        if p not in store.passage_ids:
            findings.append(ValidationFinding(
                "dangling_mention", f"mention ({e!r} -> {p!r}): unknown passage"))
    for s, r, o in sorted(graph.relation_edges):
        for endpoint in (s, o):
            if endpoint not in graph.entity_nodes:
                findings.append(ValidationFinding(
                    "dangling_endpoint", f"relation ({s!r}, {r!r}, {o!r}): missing {endpoint!r}"))
    for e, p in sorted(graph.mention_edges):
        if e not in graph.entity_nodes:
            findings.append(ValidationFinding(
                "dangling_endpoint", f"mention ({e!r} -> {p!r}): missing entity"))
        if p not in graph.passage_nodes:
            findings.append(ValidationFinding(
                "dangling_endpoint", f"mention ({e!r} -> {p!r}): passage not a node"))
    for a, b, _ in sorted(graph.synonym_edges):
        for endpoint in (a, b):
            if endpoint not in graph.entity_nodes:
                findings.append(ValidationFinding(
                    "dangling_endpoint", f"synonym ({a!r}, {b!r}): missing {endpoint!r}"))

    touched: set[str] = set()
    for s, _, o in graph.relation_edges:
        touched.update((s, o))
    for e, p in graph.mention_edges:
        touched.add(e)
        touched.add(p)
    for a, b, _ in graph.synonym_edges:
        touched.update((a, b))
    for entity in sorted(graph.entity_nodes - touched):
        findings.append(ValidationFinding("orphan_node", f"entity {entity!r} has no edges"))
    for passage in sorted(graph.passage_nodes - touched):
        findings.append(ValidationFinding("orphan_node", f"passage {passage!r} has no edges"))
    return ValidationReport(findings=tuple(findings))
