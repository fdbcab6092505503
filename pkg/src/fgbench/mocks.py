"""Deterministic stand-ins for the model backends.

Every pipeline stage that normally calls a vision-language model has a
mock here: a seeded hash embedder, a cosine compatibility scorer over
provided embeddings, and a template re-insertion sentence merger. All
are pure functions of their inputs plus an integer seed, so fixtures and
end-to-end runs are reproducible without any model weights.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

from .dataset import EmbeddingMatrix


def rng_for(seed: int, key: str) -> np.random.Generator:
    """Independent generator derived from (seed, key); stable across runs."""
    digest = hashlib.sha256(f"{seed}:{key}".encode("utf-8")).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))


def hash_vector(seed: int, key: str, dim: int) -> np.ndarray:
    """Unit float32 vector drawn deterministically from (seed, key)."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    v = rng_for(seed, key).standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def hash_embeddings(seed: int, ids, dim: int, namespace: str = "") -> EmbeddingMatrix:
    """One hash vector per id; ``namespace`` keeps id spaces from colliding."""
    ids = tuple(ids)
    rows = np.empty((len(ids), dim), dtype=np.float32)
    for n, i in enumerate(ids):
        key = f"{namespace}:{i}" if namespace else i
        rows[n] = hash_vector(seed, key, dim)
    return EmbeddingMatrix(ids, rows)


def mock_clipscores(items, image_embeddings: EmbeddingMatrix, seed: int) -> list[float]:
    """Image-text compatibility as cosine between the image embedding and a
    hash embedding of the text. ``items`` is an iterable of (image_id, text).
    """
    out = []
    for image_id, text in items:
        img = image_embeddings.row(image_id).astype(np.float64)
        norm = np.linalg.norm(img)
        if norm == 0.0:
            raise ValueError(f"image {image_id!r} has an all-zero embedding")
        txt = hash_vector(seed, f"clipscore-text:{text}", image_embeddings.dim)
        out.append(float(img @ txt.astype(np.float64) / norm))
    return out


# ---------------------------------------------------------------------------
# Sentence merger
# ---------------------------------------------------------------------------

_APPEND_RE = re.compile(r"^it(?:\s+is|'s)\s+(.+)$", re.IGNORECASE)
_COLOR_RE = re.compile(r"^the\s+color\s+of\s+(?:the\s+)?(.+?)\s+(?:is|are)\s+(.+)$",
                       re.IGNORECASE)
_ATTR_RE = re.compile(r"^the\s+(.+?)\s+(?:is|are)\s+(.+)$", re.IGNORECASE)


def _strip_terminal(text: str) -> str:
    text = text.strip()
    while text and text[-1] in ".!?":
        text = text[:-1].rstrip()
    return text


def _insert_before(rest: str, noun: str, modifier: str) -> str | None:
    pattern = re.compile(rf"\b{re.escape(noun)}\b", re.IGNORECASE)
    new, n = pattern.subn(lambda m: f"{modifier} {m.group(0)}", rest, count=1)
    return new if n else None


def mock_merge(rest: str, detail: str) -> str:
    """Fold a two-sentence (rest, detail) pair into one sentence.

    "it is X" details append X to the rest; "the N is A" and "the color
    of N is A" details insert A before the first occurrence of N. When no
    template matches (or N is absent) the detail core is appended
    verbatim. The output always ends with a single period. Appending is
    the exact inverse of prepositional-phrase splitting, so a split pair
    merges back to the original sentence.
    """
    rest_core = _strip_terminal(rest)
    detail_core = _strip_terminal(detail)

    m = _APPEND_RE.match(detail_core)
    if m:
        return f"{rest_core} {m.group(1)}."
    m = _COLOR_RE.match(detail_core) or _ATTR_RE.match(detail_core)
    if m:
        merged = _insert_before(rest_core, m.group(1), m.group(2))
        if merged is not None:
            return f"{merged}."
    return f"{rest_core} {detail_core}."
