"""Exception types shared across the package."""


class RagmuxError(Exception):
    """Base class for all package errors."""


# --- corpus loading ---

class DuplicateId(RagmuxError):
    """Two records claim the same id."""


class DimensionMismatch(RagmuxError):
    """A vector's dimension differs from the store dimension."""


class DanglingEdge(RagmuxError):
    """An edge or embedding references a node/passage that does not exist."""


class MalformedRecord(RagmuxError):
    """A line in a corpus file fails the record schema."""


# --- retrieval ---

class UnknownSeedNode(RagmuxError):
    """A seed node passed to personalized PageRank is not in the graph."""


class GraphUnavailable(RagmuxError):
    """Graph or hybrid retrieval requested but no usable graph is loaded."""


class EmptySeedSet(RagmuxError):
    """Seed linking produced no usable seeds (internal signal; triggers dense fallback)."""


class EmbeddingProviderError(RagmuxError):
    """The embedding provider was unreachable or returned a malformed reply."""


class UnknownPassageId(RagmuxError):
    """A ranked list entry does not resolve to a stored passage."""


# --- episodes ---

class PolicyUnreachable(RagmuxError):
    """The policy endpoint failed after the configured retries."""


class BatchExecutionError(RagmuxError):
    """One or more episodes in a batch failed; carries per-episode failures."""

    def __init__(self, failures: list[tuple[int, Exception]], completed: dict[int, object]):
        self.failures = failures
        self.completed = completed
        summary = "; ".join(f"#{i}: {type(e).__name__}: {e}" for i, e in failures)
        super().__init__(f"{len(failures)} episode(s) failed: {summary}")


# --- reporting / training ---

class MalformedReport(RagmuxError):
    """A report file fails schema or internal consistency checks."""


class NonFiniteGradient(RagmuxError):
    """A training update produced a non-finite gradient (exploding logits)."""
