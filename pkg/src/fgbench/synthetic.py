"""Seeded synthetic datasets for exercising the pipeline.

The planted-cluster construction gives every target image a known set of
near-duplicate confusers hidden among random distractors, so pool
building has an exact expected answer and retrieval difficulty can be
dialed with noise levels. Everything derives from hash embeddings, so a
fixture is a pure function of its parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import (
    CaptionRecord,
    EmbeddingMatrix,
    Manifest,
    load_manifest,
    write_captions,
    write_embeddings,
    write_manifest,
)
from .mocks import hash_embeddings, hash_vector


def perturb(matrix: EmbeddingMatrix, sigma: float, seed: int,
            namespace: str = "noise") -> EmbeddingMatrix:
    """Unit-normalized rows plus seeded gaussian noise, renormalized.

    Models an imperfect encoder: sigma 0 returns the clean directions,
    larger sigma degrades them smoothly.
    """
    rows = matrix.values.astype(np.float64)
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"cannot perturb all-zero row {matrix.ids[int(zero[0])]!r}")
    unit = rows / norms[:, None]
    out = np.empty_like(unit)
    for n, row_id in enumerate(matrix.ids):
        noise = hash_vector(seed, f"{namespace}:{row_id}", matrix.dim).astype(np.float64)
        noisy = unit[n] + sigma * noise
        out[n] = noisy / np.linalg.norm(noisy)
    return EmbeddingMatrix(matrix.ids, out.astype(np.float32))


@dataclass(frozen=True, eq=False)
class PlantedFixture:
    """A written-to-disk planted-cluster dataset plus its ground truth."""

    root: Path
    manifest_path: Path
    manifest: Manifest
    target_ids: tuple[str, ...]
    planted: dict[str, tuple[str, ...]]
    distractor_ids: tuple[str, ...]
    aux_path: Path
    aux_ids: tuple[str, ...]


def make_planted_fixture(root: Path | str, *, seed: int = 0, n_targets: int = 100,
                         n_planted: int = 9, n_distractors: int = 1000,
                         dim: int = 32, captions_per_image: int = 2,
                         planted_noise: float = 0.1,
                         caption_noise: float = 0.1) -> PlantedFixture:
    """Write a complete dataset where each target has known near-duplicates.

    Targets are random unit vectors; each target gets ``n_planted``
    auxiliary images at ``planted_noise`` from it and captions embedded at
    ``caption_noise`` from it; distractors are unrelated random vectors.
    With the default noise levels the planted images are far closer to
    their target than any distractor.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)

    target_ids = tuple(f"img{t:04d}" for t in range(n_targets))
    images = hash_embeddings(seed, target_ids, dim, namespace="image")

    captions = []
    text_rows = []
    text_ids = []
    for t, target in enumerate(target_ids):
        base = images.row(target).astype(np.float64)
        for j in range(captions_per_image):
            cid = f"{target}_c{j}"
            captions.append(CaptionRecord(cid, target, f"a synthetic scene number {t}, view {j}."))
            noise = hash_vector(seed, f"capnoise:{cid}", dim).astype(np.float64)
            row = base + caption_noise * noise
            text_rows.append(row / np.linalg.norm(row))
            text_ids.append(cid)
    texts = EmbeddingMatrix(tuple(text_ids), np.array(text_rows, dtype=np.float32))

    planted: dict[str, tuple[str, ...]] = {}
    aux_ids: list[str] = []
    aux_rows: list[np.ndarray] = []
    for target in target_ids:
        base = images.row(target).astype(np.float64)
        members = []
        for j in range(n_planted):
            pid = f"{target}_p{j}"
            noise = hash_vector(seed, f"plant:{pid}", dim).astype(np.float64)
            row = base + planted_noise * noise
            aux_ids.append(pid)
            aux_rows.append(row / np.linalg.norm(row))
            members.append(pid)
        planted[target] = tuple(members)
    distractor_ids = tuple(f"dis{i:05d}" for i in range(n_distractors))
    distractors = hash_embeddings(seed, distractor_ids, dim, namespace="image")
    aux_ids.extend(distractor_ids)
    aux_rows.extend(distractors.values)
    aux = EmbeddingMatrix(tuple(aux_ids), np.array(aux_rows, dtype=np.float32))

    write_captions(captions, root / "captions.jsonl")
    write_embeddings(images, root / "images.fge1")
    write_embeddings(texts, root / "texts.fge1")
    aux_path = write_embeddings(aux, root / "aux.fge1")
    manifest_path = write_manifest(Manifest(
        name="planted-synthetic",
        image_ids=target_ids,
        captions_path=Path("captions.jsonl"),
        image_embeddings_path=Path("images.fge1"),
        text_embeddings_path=Path("texts.fge1"),
        exclusion_ids=frozenset(),
        captions_per_image=captions_per_image,
    ), root / "manifest.json")

    return PlantedFixture(
        root=root,
        manifest_path=manifest_path,
        manifest=load_manifest(manifest_path),
        target_ids=target_ids,
        planted=planted,
        distractor_ids=distractor_ids,
        aux_path=aux_path,
        aux_ids=tuple(aux_ids),
    )
