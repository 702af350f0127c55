"""The special-token action grammar spoken between the policy and the engine.

A rollout segment may end in a search action::

    <search> <Graph><Passage> who created Superstore </search>

or an answer::

    <answer> Justin Spitzer </answer>

Mode markers are the literal strings ``<Passage>`` and ``<Graph>`` (both
present means hybrid). Everything else, including ``<think>`` blocks, is
opaque text. Parsing is total: malformed input maps to an in-band
``ProtocolError`` action, never an exception.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .corpus import CorpusStore
from .errors import UnknownPassageId
from .retrieval import RankedList, RetrievalMode

SEARCH_OPEN = "<search>"
SEARCH_CLOSE = "</search>"
ANSWER_OPEN = "<answer>"
ANSWER_CLOSE = "</answer>"
PASSAGE_MARKER = "<Passage>"
GRAPH_MARKER = "<Graph>"
INFO_OPEN = "<information>"
INFO_CLOSE = "</information>"

STOP_SEQUENCES = (SEARCH_CLOSE, ANSWER_CLOSE)

# ProtocolError kinds
MISSING_MODE = "MissingMode"
EMPTY_QUERY = "EmptyQuery"
UNCLOSED_TAG = "UnclosedTag"
NESTED_TAGS = "NestedTags"


@dataclass(frozen=True)
class Search:
    mode: RetrievalMode
    query: str


@dataclass(frozen=True)
class Answer:
    text: str


@dataclass(frozen=True)
class Terminated:
    pass


@dataclass(frozen=True)
class ProtocolError:
    kind: str
    raw: str


Action = Union[Search, Answer, Terminated, ProtocolError]

_TAGS = (
    (SEARCH_OPEN, "search", True),
    (SEARCH_CLOSE, "search", False),
    (ANSWER_OPEN, "answer", True),
    (ANSWER_CLOSE, "answer", False),
)


def _tag_events(text: str) -> list[tuple[int, str, bool, str]]:
    events = []
    for literal, kind, is_open in _TAGS:
        start = 0
        while True:
            pos = text.find(literal, start)
            if pos < 0:
                break
            events.append((pos, kind, is_open, literal))
            start = pos + len(literal)
    events.sort(key=lambda e: e[0])
    return events


def parse_rollout_segment(text: str) -> Action:
    """Classify one generated segment into its action.

    Acts on the last complete block; multiple sequential complete blocks are
    tolerated (a degenerate policy), but overlapping or unmatched tags are
    protocol errors. A segment with no action tags at all is end-of-stream.
    """
    blocks: list[tuple[str, str]] = []  # (kind, content)
    open_kind: str | None = None
    content_start = 0
    for pos, kind, is_open, literal in _tag_events(text):
        if is_open:
            if open_kind is not None:
                return ProtocolError(kind=NESTED_TAGS, raw=text)
            open_kind = kind
            content_start = pos + len(literal)
        else:
            if open_kind != kind:
                return ProtocolError(kind=UNCLOSED_TAG, raw=text)
            blocks.append((kind, text[content_start:pos]))
            open_kind = None
    if open_kind is not None:
        return ProtocolError(kind=UNCLOSED_TAG, raw=text)
    if not blocks:
        return Terminated()

    kind, content = blocks[-1]
    if kind == "answer":
        return Answer(text=content.strip())
    has_passage = PASSAGE_MARKER in content
    has_graph = GRAPH_MARKER in content
    if not has_passage and not has_graph:
        return ProtocolError(kind=MISSING_MODE, raw=text)
    query = content.replace(PASSAGE_MARKER, "").replace(GRAPH_MARKER, "").strip()
    if not query:
        return ProtocolError(kind=EMPTY_QUERY, raw=text)
    if has_passage and has_graph:
        mode = RetrievalMode.HYBRID
    elif has_passage:
        mode = RetrievalMode.PASSAGE
    else:
        mode = RetrievalMode.GRAPH
    return Search(mode=mode, query=query)


def render_search(mode: RetrievalMode, query: str) -> str:
    markers = {
        RetrievalMode.PASSAGE: PASSAGE_MARKER,
        RetrievalMode.GRAPH: GRAPH_MARKER,
        RetrievalMode.HYBRID: GRAPH_MARKER + PASSAGE_MARKER,
    }[mode]
    return f"{SEARCH_OPEN} {markers} {query} {SEARCH_CLOSE}"


def render_answer(text: str) -> str:
    return f"{ANSWER_OPEN} {text} {ANSWER_CLOSE}"


def render_information(docs: RankedList, store: CorpusStore) -> str:
    """Format retrieved passages as an information block.

    Each entry renders as ``Doc i(Title: {title}) {text}``, one per line,
    in rank order.
    """
    lines = []
    for i, (pid, _) in enumerate(docs.entries, start=1):
        try:
            passage = store.passage(pid)
        except KeyError as exc:
            raise UnknownPassageId(f"ranked list references unknown passage {pid!r}") from exc
        lines.append(f"Doc {i}(Title: {passage.title}) {passage.text}")
    return INFO_OPEN + "\n".join(lines) + INFO_CLOSE
