"""Shared fixture builders: annotated captions and small on-disk datasets."""

from __future__ import annotations

from pathlib import Path

import pytest

from fgbench.dataset import (
    CaptionRecord,
    Manifest,
    Token,
    load_manifest,
    write_captions,
    write_embeddings,
    write_manifest,
)
from fgbench.mocks import hash_embeddings


def make_caption(caption_id: str, image_id: str, text: str, specs) -> CaptionRecord:
    """specs: list of (surface, pos, head, deprel) tuples."""
    return CaptionRecord(
        caption_id, image_id, text,
        tuple(Token(s, p, h, d) for s, p, h, d in specs),
    )


def boy_caption(caption_id: str = "boy", image_id: str = "img0") -> CaptionRecord:
    return make_caption(
        caption_id, image_id,
        "a young boy play a frisbee on top of a mountain.",
        [
            ("a", "DET", 2, "det"), ("young", "ADJ", 2, "amod"),
            ("boy", "NOUN", 3, "nsubj"), ("play", "VERB", -1, "root"),
            ("a", "DET", 5, "det"), ("frisbee", "NOUN", 3, "dobj"),
            ("on", "ADP", 3, "prep"), ("top", "NOUN", 6, "pobj"),
            ("of", "ADP", 7, "prep"), ("a", "DET", 10, "det"),
            ("mountain", "NOUN", 8, "pobj"), (".", "PUNCT", 3, "punct"),
        ],
    )


def red_car_caption(caption_id: str = "car", image_id: str = "img0") -> CaptionRecord:
    return make_caption(caption_id, image_id, "a red car.", [
        ("a", "DET", 2, "det"), ("red", "ADJ", 2, "amod"),
        ("car", "NOUN", -1, "root"), (".", "PUNCT", 2, "punct"),
    ])


def woman_caption(caption_id: str = "woman", image_id: str = "img0") -> CaptionRecord:
    return make_caption(caption_id, image_id, "a woman standing on a sidewalk", [
        ("a", "DET", 1, "det"), ("woman", "NOUN", 2, "nsubj"),
        ("standing", "VERB", -1, "root"), ("on", "ADP", 2, "prep"),
        ("a", "DET", 5, "det"), ("sidewalk", "NOUN", 3, "pobj"),
    ])


_ADJS = ("red", "young", "small", "shiny", "old", "tall", "green", "quiet")
_SUBJECTS = ("boy", "dog", "woman", "man", "girl", "cat", "rider", "player")
_VERBS = ("holds", "throws", "carries", "watches", "pushes", "kicks")
_OBJECTS = ("ball", "kite", "frisbee", "bag", "stick", "camera", "box")
_PREPS = ("on", "near", "under", "beside", "behind")
_PLACES = ("mountain", "beach", "street", "field", "river", "bridge", "market")


def pp_sentence(i: int, image_id: str = "img0") -> CaptionRecord:
    """Deterministic annotated sentence with one top-level PP and one adjective."""
    adj = _ADJS[i % len(_ADJS)]
    subj = _SUBJECTS[i % len(_SUBJECTS)]
    verb = _VERBS[i % len(_VERBS)]
    obj = _OBJECTS[i % len(_OBJECTS)]
    prep = _PREPS[i % len(_PREPS)]
    place = _PLACES[i % len(_PLACES)]
    text = f"a {adj} {subj} {verb} a {obj} {prep} a {place}."
    return make_caption(f"pp{i}", image_id, text, [
        ("a", "DET", 2, "det"), (adj, "ADJ", 2, "amod"),
        (subj, "NOUN", 3, "nsubj"), (verb, "VERB", -1, "root"),
        ("a", "DET", 5, "det"), (obj, "NOUN", 3, "dobj"),
        (prep, "ADP", 3, "prep"), ("a", "DET", 8, "det"),
        (place, "NOUN", 6, "pobj"), (".", "PUNCT", 3, "punct"),
    ])


def write_dataset(root: Path, *, n_images: int = 3, captions_per_image: int = 5,
                  dim: int = 8, seed: int = 11, exclusion=()) -> Path:
    """Write a consistent dataset; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    image_ids = tuple(f"img{i}" for i in range(n_images))
    captions = [
        CaptionRecord(f"img{i}_c{j}", f"img{i}", f"synthetic caption {j} for image {i}.")
        for i in range(n_images) for j in range(captions_per_image)
    ]
    write_captions(captions, root / "captions.jsonl")
    write_embeddings(hash_embeddings(seed, image_ids, dim, namespace="image"),
                     root / "images.fge1")
    write_embeddings(hash_embeddings(seed, [c.caption_id for c in captions], dim,
                                     namespace="text"),
                     root / "texts.fge1")
    return write_manifest(Manifest(
        name="unit-fixture",
        image_ids=image_ids,
        captions_path=Path("captions.jsonl"),
        image_embeddings_path=Path("images.fge1"),
        text_embeddings_path=Path("texts.fge1"),
        exclusion_ids=frozenset(exclusion),
        captions_per_image=captions_per_image,
    ), root / "manifest.json")


@pytest.fixture
def dataset_dir(tmp_path):
    manifest_path = write_dataset(tmp_path / "data")
    return manifest_path.parent


@pytest.fixture
def manifest(dataset_dir):
    return load_manifest(dataset_dir / "manifest.json")
