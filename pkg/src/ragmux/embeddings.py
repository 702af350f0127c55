"""Embedding providers.

Two implementations of the same wire contract: a deterministic offline
provider used by tests and fixtures, and a thin HTTP client for a real
endpoint accepting ``{"input": [str]}`` and returning
``{"vectors": [[float, ...]]}``.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import EmbeddingProviderError

AUTH_TOKEN_ENV = "RAGMUX_EMBED_TOKEN"


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return an array of shape (len(texts), dim) of unit vectors."""
        ...


class HashEmbedder:
    """Deterministic text-to-unit-vector map with no model behind it.

    Components are drawn from a SHA-256 stream over ``"{seed}|{text}|{block}"``,
    so the same (seed, text, dim) always yields the same vector on any
    platform or language. Useful only for reproducible tests and fixtures;
    the geometry carries no semantics.
    """

    def __init__(self, dim: int, seed: int = 0):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed

    def _vector(self, text: str) -> np.ndarray:
        parts: list[float] = []
        block = 0
        while len(parts) < self.dim:
            digest = hashlib.sha256(f"{self.seed}|{text}|{block}".encode("utf-8")).digest()
            for (u,) in struct.iter_unpack(">I", digest):
                parts.append(2.0 * (u / 2.0**32) - 1.0)
            block += 1
        parts = parts[: self.dim]
        # sequential accumulation, not numpy's pairwise sum: other-language
        # ports of this construction must reproduce the exact same bits
        norm = math.sqrt(sum((x * x for x in parts), 0.0))
        if norm == 0.0:  # astronomically unlikely; keep the map total
            parts[0] = 1.0
            norm = 1.0
        return np.asarray([x / norm for x in parts], dtype=np.float64)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self._vector(t) for t in texts]) if texts else np.zeros((0, self.dim))


class HttpEmbedder:
    """Client for a remote embedding endpoint.

    POSTs ``{"input": [...]}`` to ``base_url`` with an optional bearer token
    taken from the ``RAGMUX_EMBED_TOKEN`` environment variable.
    """

    def __init__(self, base_url: str, timeout: float = 30.0,
                 post: Callable[..., object] | None = None):
        self.base_url = base_url
        self.timeout = timeout
        if post is None:
            import requests

            post = requests.post
        self._post = post

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        headers = {}
        token = os.environ.get(AUTH_TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self._post(self.base_url, json={"input": list(texts)},
                              headers=headers, timeout=self.timeout)
            payload = resp.json()
            vectors = payload["vectors"]
        except Exception as exc:
            raise EmbeddingProviderError(f"embedding endpoint failed: {exc}") from exc
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != len(texts):
            raise EmbeddingProviderError(
                f"expected {len(texts)} vectors, got shape {arr.shape}")
        return arr


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Scale each row to unit L2 norm; zero rows are left untouched."""
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return matrix / safe
