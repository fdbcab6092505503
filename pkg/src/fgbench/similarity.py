"""Deterministic dense cosine similarity and exact top-k selection.

Scores are float32 inputs accumulated in float64, and all parallelism
partitions work into fixed-size blocks of query rows, so results are
bit-identical across runs and across worker counts. No approximate
index: candidate pools stay within exact-search budgets and benchmark
construction must be reproducible.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import EMBEDDING_MAGIC, EmbeddingMatrix, ScoreMatrix, _HEADER

# Rows per work unit. Fixed so that the decomposition (and therefore the
# floating-point reduction order) never depends on the worker count.
_QUERY_BLOCK = 256


@dataclass(frozen=True)
class RankedEntry:
    candidate_id: str
    score: float


@dataclass(frozen=True)
class RankedList:
    """Top-k candidates for one query, best first.

    Ties are broken by ascending candidate index in the source matrix, so
    the ordering is total and reproducible.
    """

    query_id: str
    entries: tuple[RankedEntry, ...]
    k: int


def l2_normalize(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit Euclidean norm."""
    norms = np.linalg.norm(matrix.values.astype(np.float64), axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"cannot normalize all-zero row {matrix.ids[int(zero[0])]!r}")
    values = (matrix.values.astype(np.float64) / norms[:, None]).astype(np.float32)
    return EmbeddingMatrix(matrix.ids, values)


def _unit_rows_f64(matrix: EmbeddingMatrix) -> np.ndarray:
    rows = matrix.values.astype(np.float64)
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"cannot normalize all-zero row {matrix.ids[int(zero[0])]!r}")
    return rows / norms[:, None]


def _run_blocks(n_rows: int, work, threads: int) -> None:
    starts = range(0, n_rows, _QUERY_BLOCK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for start in starts:
            work(start)


def cosine_scores(queries: EmbeddingMatrix, candidates: EmbeddingMatrix,
                  threads: int = 1) -> ScoreMatrix:
    """Cosine similarity of every query row against every candidate row.

    Inputs are normalized internally, so the result is invariant under
    positive per-row scaling of either side.
    """
    if queries.dim != candidates.dim:
        raise ValueError(
            f"dimension mismatch: queries are {queries.dim}-d, "
            f"candidates are {candidates.dim}-d"
        )
    q = _unit_rows_f64(queries)
    c_t = _unit_rows_f64(candidates).T
    out = np.empty((q.shape[0], c_t.shape[1]), dtype=np.float64)

    def work(start: int) -> None:
        out[start:start + _QUERY_BLOCK] = q[start:start + _QUERY_BLOCK] @ c_t

    _run_blocks(q.shape[0], work, threads)
    return ScoreMatrix(queries.ids, candidates.ids, out)


def topk_row(row: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries, sorted by (-score, index).

    Partial selection via argpartition; boundary ties are resolved by
    taking the lowest indices among equal scores.
    """
    row = np.asarray(row, dtype=np.float64)
    n = row.size
    if k >= n:
        chosen = np.arange(n)
    else:
        part = np.argpartition(-row, k - 1)[:k]
        threshold = row[part].min()
        above = np.flatnonzero(row > threshold)
        at = np.flatnonzero(row == threshold)
        chosen = np.concatenate([above, at[: k - above.size]])
    order = np.lexsort((chosen, -row[chosen]))
    return chosen[order]


def topk(scores: ScoreMatrix, k: int, threads: int = 1) -> list[RankedList]:
    """Per-query top-k ranked lists over a score matrix."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    results: list[RankedList | None] = [None] * len(scores.query_ids)
    cand_ids = scores.candidate_ids

    def work(start: int) -> None:
        stop = min(start + _QUERY_BLOCK, len(scores.query_ids))
        for i in range(start, stop):
            row = scores.scores[i]
            idx = topk_row(row, k)
            entries = tuple(
                RankedEntry(cand_ids[j], float(row[j])) for j in idx
            )
            results[i] = RankedList(scores.query_ids[i], entries, k)

    _run_blocks(len(scores.query_ids), work, threads)
    return results  # type: ignore[return-value]


def rank_of_target(scores_row: np.ndarray, target_index: int) -> int:
    """Pessimistic 1-based rank of one candidate within a score row.

    Every other candidate scoring >= the target counts ahead of it, so a
    tied target is never ranked first.
    """
    row = np.asarray(scores_row, dtype=np.float64)
    if row.ndim != 1:
        raise ValueError("expected a single score row")
    if not 0 <= target_index < row.size:
        raise IndexError(f"target index {target_index} out of range for {row.size} candidates")
    return int(np.count_nonzero(row >= row[target_index]))


# ---------------------------------------------------------------------------
# Score matrix dump: float32 payload in the embedding container plus a JSON
# header sidecar naming the query and candidate ids.
# ---------------------------------------------------------------------------

def default_header_path(path: Path | str) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_scores(scores: ScoreMatrix, path: Path | str,
                 header_path: Path | str | None = None) -> Path:
    path = Path(path)
    header_path = default_header_path(path) if header_path is None else Path(header_path)
    with path.open("wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(_HEADER.pack(len(scores.query_ids), len(scores.candidate_ids)))
        fh.write(scores.scores.astype("<f4").tobytes())
    header_path.write_text(json.dumps({
        "query_ids": list(scores.query_ids),
        "candidate_ids": list(scores.candidate_ids),
    }) + "\n", encoding="utf-8")
    return path


def load_scores(path: Path | str, header_path: Path | str | None = None) -> ScoreMatrix:
    path = Path(path)
    header_path = default_header_path(path) if header_path is None else Path(header_path)
    header = json.loads(Path(header_path).read_text(encoding="utf-8"))
    raw = path.read_bytes()
    if raw[:4] != EMBEDDING_MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    rows, cols = _HEADER.unpack_from(raw, 4)
    values = np.frombuffer(raw, dtype="<f4", offset=4 + _HEADER.size)
    if values.size != rows * cols:
        raise ValueError(f"{path}: payload size does not match {rows}x{cols} header")
    return ScoreMatrix(
        tuple(header["query_ids"]),
        tuple(header["candidate_ids"]),
        values.reshape(rows, cols).astype(np.float64),
    )
