"""Text conditioning via a deterministic hashed bag-of-words embedding.

Every token hashes (sha256, platform independent) to a coordinate and a
sign in a fixed-dimensional vector; the vector is L2-normalised.  The
embedder sits behind a small protocol so a stronger encoder can be plugged
in without touching the model.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ValidationError

DEFAULT_TEXT_DIM = 512
_TOKEN_RE = re.compile(r"[a-z0-9']+")


@runtime_checkable
class TextEmbedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


@dataclass
class HashedBagOfWords:
    dim: int = DEFAULT_TEXT_DIM

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in _TOKEN_RE.findall(text.lower()):
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            idx = int.from_bytes(digest[:8], "little") % self.dim
            sign = 1.0 if digest[8] & 1 else -1.0
            vec[idx] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


@dataclass
class TextCondition:
    """An embedded prompt; ``null`` marks the unconditional guidance branch."""

    embedding: np.ndarray
    null: bool = False
    text: str = ""

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=np.float64)
        if self.embedding.ndim != 1:
            raise ValidationError("text embedding must be 1-D")
        if not np.all(np.isfinite(self.embedding)):
            raise ValidationError("text embedding contains non-finite values")


def embed_text(text: str, embedder: TextEmbedder | None = None) -> TextCondition:
    emb = embedder if embedder is not None else HashedBagOfWords()
    return TextCondition(embedding=emb.embed(text), text=text)


def null_text(dim: int = DEFAULT_TEXT_DIM) -> TextCondition:
    return TextCondition(embedding=np.zeros(dim), null=True)
