"""Similar-image pool construction.

Given an original image pool and a larger auxiliary image source, build a
per-target set of the 10 most similar images (the target plus 9 confusers
found by image-to-image and caption-to-image matching, combined with
reciprocal rank fusion), then merge all sets into one deduplicated pool.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import (
    EmbeddingMatrix,
    Manifest,
    default_ids_path,
    load_captions,
    load_embeddings,
)
from .similarity import RankedEntry, RankedList, topk_row

log = logging.getLogger(__name__)

SIMILAR_SET_SIZE = 10
DEFAULT_K_PRIME = 30
DEFAULT_K_DPRIME = 30
DEFAULT_RRF_CONSTANT = 60

_TARGET_BLOCK = 32  # targets per work unit; fixed so output never depends on thread count


@dataclass(frozen=True, eq=False)
class CandidatePool:
    """Search space for similar images: original pool plus auxiliary images.

    ``embeddings`` rows are aligned with ``ids`` (originals first, in
    manifest order, then auxiliaries).
    """

    ids: tuple[str, ...]
    old_pool_ids: frozenset[str]
    source_tags: dict[str, str]
    embeddings: EmbeddingMatrix

    def index_of(self, image_id: str) -> int:
        return self.embeddings.index_of(image_id)

    def unit_rows(self) -> np.ndarray:
        """Float64 row-normalized embedding matrix, cached after first use."""
        cached = getattr(self, "_unit_rows", None)
        if cached is None:
            rows = self.embeddings.values.astype(np.float64)
            norms = np.linalg.norm(rows, axis=1)
            cached = rows / norms[:, None]
            object.__setattr__(self, "_unit_rows", cached)
        return cached


@dataclass(frozen=True)
class SimilarSet:
    """One target image and its 9 fused most-similar candidates."""

    target_id: str
    member_ids: tuple[str, ...]
    fusion_scores: dict[str, float]

    def __post_init__(self):
        if len(self.member_ids) != SIMILAR_SET_SIZE:
            raise ValueError(
                f"similar set for {self.target_id!r} has {len(self.member_ids)} "
                f"members, expected {SIMILAR_SET_SIZE}"
            )
        if self.member_ids[0] != self.target_id:
            raise ValueError(f"target {self.target_id!r} must be the first member")
        if len(set(self.member_ids)) != len(self.member_ids):
            raise ValueError(f"similar set for {self.target_id!r} contains duplicates")


@dataclass(frozen=True)
class NewPool:
    """Deduplicated union of all similar sets, in first-seen order.

    ``provenance`` maps every image to the targets whose similar set
    contributed it.
    """

    ids: tuple[str, ...]
    provenance: dict[str, tuple[str, ...]]


def prepare_candidates(manifest: Manifest, auxiliary_ids,
                       auxiliary_embeddings: EmbeddingMatrix) -> CandidatePool:
    """Combine the original pool with auxiliary images into one search space.

    Auxiliary ids already present in the original pool are dropped; any
    auxiliary id on the manifest's exclusion list is an error (train/val
    leakage). Embeddings are concatenated in pool order.
    """
    old = load_embeddings(manifest.image_embeddings_path,
                          default_ids_path(manifest.image_embeddings_path))
    old = old.select(manifest.image_ids)

    if old.dim != auxiliary_embeddings.dim:
        raise ValueError(
            f"embedding dim mismatch: original pool is {old.dim}-d, "
            f"auxiliary is {auxiliary_embeddings.dim}-d"
        )
    excluded = sorted(set(auxiliary_ids) & manifest.exclusion_ids)
    if excluded:
        raise ValueError(f"auxiliary ids overlap the exclusion list: {excluded}")

    old_ids = set(manifest.image_ids)
    aux_order: list[str] = []
    seen = set(old_ids)
    for aid in auxiliary_ids:
        if aid in seen:
            continue
        seen.add(aid)
        aux_order.append(aid)
    if len(aux_order) < len(old_ids):
        log.warning(
            "auxiliary source (%d images) is smaller than the original pool (%d); "
            "similar-image search quality may suffer", len(aux_order), len(old_ids),
        )

    aux = auxiliary_embeddings.select(aux_order) if aux_order else None
    ids = tuple(manifest.image_ids) + tuple(aux_order)
    if aux is None:
        values = old.values
    else:
        values = np.concatenate([old.values, aux.values], axis=0)
    matrix = EmbeddingMatrix(ids, values)

    norms = np.linalg.norm(matrix.values.astype(np.float64), axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"candidate {ids[int(zero[0])]!r} has an all-zero embedding")

    tags = {i: ("original" if i in old_ids else "auxiliary") for i in ids}
    return CandidatePool(ids, frozenset(old_ids), tags, matrix)


def _ranked_from_row(query_id: str, row: np.ndarray, pool_ids, k: int,
                     exclude_index: int) -> RankedList:
    row = row.copy()
    row[exclude_index] = -np.inf
    idx = topk_row(row, k)
    entries = tuple(
        RankedEntry(pool_ids[j], float(row[j]))
        for j in idx
        if j != exclude_index
    )
    return RankedList(query_id, entries, k)


def image_similar_set(target_id: str, pool: CandidatePool, k_prime: int) -> RankedList:
    """Top-k' candidates by image-to-image cosine, target excluded."""
    ti = pool.index_of(target_id)
    unit = pool.unit_rows()
    row = unit @ unit[ti]
    return _ranked_from_row(target_id, row, pool.ids, k_prime, ti)


def text_similar_set(target_id: str, target_caption_ids,
                     text_embeddings: EmbeddingMatrix, pool: CandidatePool,
                     k_dprime: int) -> RankedList:
    """Top-k'' candidates by caption-to-image cosine, target excluded.

    Each candidate's score is the max over the target's captions, so an
    image resembling any one description counts as a confuser.
    """
    caption_ids = list(target_caption_ids)
    if not caption_ids:
        raise ValueError(f"target {target_id!r} has no captions to search with")
    missing = [c for c in caption_ids if c not in text_embeddings]
    if missing:
        raise ValueError(f"missing text embedding for caption id {missing[0]!r}")
    cap = text_embeddings.select(caption_ids).values.astype(np.float64)
    cap_norms = np.linalg.norm(cap, axis=1)
    zero = np.flatnonzero(cap_norms == 0.0)
    if zero.size:
        raise ValueError(f"caption {caption_ids[int(zero[0])]!r} has an all-zero embedding")
    cap /= cap_norms[:, None]

    ti = pool.index_of(target_id)
    fused = (pool.unit_rows() @ cap.T).max(axis=1)
    return _ranked_from_row(target_id, fused, pool.ids, k_dprime, ti)


def fuse_similar_sets(s_prime: RankedList, s_dprime: RankedList, target_id: str,
                      pool: CandidatePool,
                      rrf_constant: int = DEFAULT_RRF_CONSTANT) -> SimilarSet:
    """Combine the two channels into the final 10-image similar set.

    Candidates are ordered by reciprocal rank fusion, sum of
    1 / (constant + rank) over the lists containing them with 1-based
    ranks; ties break by ascending pool index. The target is re-inserted
    at position 0, so a duplicate embedding elsewhere in the pool can
    never displace it.
    """
    if not s_prime.entries or not s_dprime.entries:
        raise ValueError("both ranked lists must be non-empty")
    fused: dict[str, float] = {}
    for ranked in (s_prime, s_dprime):
        for rank, entry in enumerate(ranked.entries, start=1):
            if entry.candidate_id == target_id:
                raise ValueError(f"ranked list must exclude the target {target_id!r}")
            fused[entry.candidate_id] = fused.get(entry.candidate_id, 0.0) + 1.0 / (rrf_constant + rank)
    need = SIMILAR_SET_SIZE - 1
    if len(fused) < need:
        raise ValueError(
            f"only {len(fused)} distinct candidates across both lists for "
            f"{target_id!r}; need {need}"
        )
    order = sorted(fused, key=lambda cid: (-fused[cid], pool.index_of(cid)))
    members = (target_id,) + tuple(order[:need])
    return SimilarSet(target_id, members, {cid: fused[cid] for cid in order[:need]})


def assemble_pool(sets) -> NewPool:
    """Union all similar sets into the new pool, duplicates removed.

    Order is first-seen over the sets as supplied; provenance records every
    target whose set contributed each image.
    """
    ids: list[str] = []
    provenance: dict[str, list[str]] = {}
    for s in sets:
        for mid in s.member_ids:
            if mid not in provenance:
                provenance[mid] = []
                ids.append(mid)
            provenance[mid].append(s.target_id)
    return NewPool(tuple(ids), {i: tuple(t) for i, t in provenance.items()})


# ---------------------------------------------------------------------------
# End-to-end driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PoolBuildResult:
    pool: CandidatePool
    similar_sets: tuple[SimilarSet, ...]
    new_pool: NewPool


def build_similar_sets(manifest: Manifest, auxiliary_ids,
                       auxiliary_embeddings: EmbeddingMatrix, *,
                       k_prime: int = DEFAULT_K_PRIME,
                       k_dprime: int = DEFAULT_K_DPRIME,
                       rrf_constant: int = DEFAULT_RRF_CONSTANT,
                       threads: int = 1) -> PoolBuildResult:
    """Run candidate preparation, per-target search, fusion, and assembly.

    Per-target searches are independent; work is split into fixed blocks
    of targets so the result is byte-identical for any thread count.
    """
    pool = prepare_candidates(manifest, auxiliary_ids, auxiliary_embeddings)
    pool.unit_rows()  # materialize once before fanning out

    captions = load_captions(manifest.captions_path)
    caption_ids_by_image: dict[str, list[str]] = {}
    for rec in captions:
        caption_ids_by_image.setdefault(rec.image_id, []).append(rec.caption_id)
    text_embeddings = load_embeddings(manifest.text_embeddings_path,
                                      default_ids_path(manifest.text_embeddings_path))

    targets = manifest.image_ids
    for t in targets:
        if t not in caption_ids_by_image:
            raise ValueError(f"target {t!r} has no captions; cannot run text matching")

    results: list[SimilarSet | None] = [None] * len(targets)

    def work(start: int) -> None:
        for i in range(start, min(start + _TARGET_BLOCK, len(targets))):
            t = targets[i]
            s_prime = image_similar_set(t, pool, k_prime)
            s_dprime = text_similar_set(t, caption_ids_by_image[t],
                                        text_embeddings, pool, k_dprime)
            results[i] = fuse_similar_sets(s_prime, s_dprime, t, pool, rrf_constant)

    starts = range(0, len(targets), _TARGET_BLOCK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            list(executor.map(work, starts))
    else:
        for start in starts:
            work(start)

    sets = tuple(results)  # type: ignore[arg-type]
    return PoolBuildResult(pool, sets, assemble_pool(sets))


def save_pools(result: PoolBuildResult, path: Path | str) -> Path:
    path = Path(path)
    payload = {
        "targets": [
            {
                "target_id": s.target_id,
                "member_ids": list(s.member_ids),
                "fusion_scores": s.fusion_scores,
            }
            for s in result.similar_sets
        ],
        "new_pool_ids": list(result.new_pool.ids),
        "provenance": {i: list(t) for i, t in result.new_pool.provenance.items()},
    }
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def load_pools(path: Path | str) -> tuple[tuple[SimilarSet, ...], NewPool]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    sets = tuple(
        SimilarSet(t["target_id"], tuple(t["member_ids"]),
                   {k: float(v) for k, v in t["fusion_scores"].items()})
        for t in obj["targets"]
    )
    new_pool = NewPool(tuple(obj["new_pool_ids"]),
                       {i: tuple(t) for i, t in obj["provenance"].items()})
    return sets, new_pool
