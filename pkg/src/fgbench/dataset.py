"""Core dataset types and their on-disk formats.

Everything downstream (pool building, caption renovation, evaluation)
operates on three file formats defined here:

* embeddings: magic ``FGE1``, u32-LE row count, u32-LE dim, then
  rows x dim float32-LE values in row-major order. Row identifiers live
  in a sidecar text file, one UTF-8 id per line, order-aligned.
* captions: JSON lines, one object per caption with fields
  ``caption_id``, ``image_id``, ``text`` and ``tokens`` (each token a
  ``{surface, pos, head, deprel}`` object; ``head`` is a 0-based token
  index, -1 for the root). An empty token list marks an unannotated
  caption.
* manifest: a single JSON document indexing a dataset (image ids,
  caption/embedding paths, excluded ids, captions per image).

All types are immutable after loading and safe to share across workers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EMBEDDING_MAGIC = b"FGE1"
_HEADER = struct.Struct("<II")

#: Universal POS tagset; any annotation backend must map into these.
UPOS_TAGS = frozenset({
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
})


class ManifestError(ValueError):
    """Manifest file is missing, malformed, or breaks an invariant."""


class EmbeddingFormatError(ValueError):
    """Embedding binary or its id sidecar is malformed."""


class CaptionError(ValueError):
    """Caption record is malformed or inconsistent with its annotations."""


# ---------------------------------------------------------------------------
# Captions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    surface: str
    pos: str
    head: int
    deprel: str


@dataclass(frozen=True)
class CaptionRecord:
    """One caption with optional token-level linguistic annotations."""

    caption_id: str
    image_id: str
    text: str
    tokens: tuple[Token, ...] = ()

    def __post_init__(self):
        n = len(self.tokens)
        for i, tok in enumerate(self.tokens):
            if tok.pos not in UPOS_TAGS:
                raise CaptionError(
                    f"caption {self.caption_id!r}: token {i} has non-universal "
                    f"POS tag {tok.pos!r}"
                )
            if tok.head == i or tok.head < -1 or tok.head >= n:
                raise CaptionError(
                    f"caption {self.caption_id!r}: token {i} has invalid head "
                    f"index {tok.head}"
                )
        if self.tokens and _spaceless(detokenize(t.surface for t in self.tokens)) != _spaceless(self.text):
            raise CaptionError(
                f"caption {self.caption_id!r}: token surfaces do not "
                f"reconstruct the text"
            )

    @property
    def annotated(self) -> bool:
        return bool(self.tokens)


_NO_SPACE_BEFORE = frozenset({".", ",", "!", "?", ";", ":", ")", "'s", "n't", "'"})


def detokenize(surfaces) -> str:
    """Join token surfaces with single spaces, closing up punctuation."""
    out: list[str] = []
    for s in surfaces:
        if out and s not in _NO_SPACE_BEFORE:
            out.append(" ")
        out.append(s)
    return "".join(out)


def _spaceless(text: str) -> str:
    return "".join(text.split())


def load_captions(path: Path | str) -> list[CaptionRecord]:
    """Load a captions JSONL file, validating every record."""
    path = Path(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CaptionError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            try:
                tokens = tuple(
                    Token(t["surface"], t["pos"], int(t["head"]), t["deprel"])
                    for t in obj.get("tokens", ())
                )
                records.append(
                    CaptionRecord(obj["caption_id"], obj["image_id"], obj["text"], tokens)
                )
            except KeyError as exc:
                raise CaptionError(f"{path}:{lineno}: missing field {exc}") from exc
    seen: set[str] = set()
    for rec in records:
        if rec.caption_id in seen:
            raise CaptionError(f"{path}: duplicate caption id {rec.caption_id!r}")
        seen.add(rec.caption_id)
    return records


def write_captions(records, path: Path | str) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "caption_id": rec.caption_id,
                "image_id": rec.image_id,
                "text": rec.text,
                "tokens": [
                    {"surface": t.surface, "pos": t.pos, "head": t.head, "deprel": t.deprel}
                    for t in rec.tokens
                ],
            }, ensure_ascii=False) + "\n")
    return path


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Dense float32 matrix with an aligned, duplicate-free id list."""

    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        vals = np.ascontiguousarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2:
            raise EmbeddingFormatError("embedding values must be a 2-D matrix")
        if len(self.ids) != vals.shape[0]:
            raise EmbeddingFormatError(
                f"id count {len(self.ids)} does not match row count {vals.shape[0]}"
            )
        if len(set(self.ids)) != len(self.ids):
            dup = _first_duplicate(self.ids)
            raise EmbeddingFormatError(f"duplicate embedding id {dup!r}")
        bad = np.argwhere(~np.isfinite(vals))
        if bad.size:
            r, c = int(bad[0][0]), int(bad[0][1])
            raise EmbeddingFormatError(f"non-finite value at ({r}, {c})")
        object.__setattr__(self, "_index", {i: n for n, i in enumerate(self.ids)})

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __contains__(self, row_id: str) -> bool:
        return row_id in self._index

    def index_of(self, row_id: str) -> int:
        try:
            return self._index[row_id]
        except KeyError:
            raise KeyError(f"unknown embedding id {row_id!r}") from None

    def row(self, row_id: str) -> np.ndarray:
        return self.values[self.index_of(row_id)]

    def select(self, row_ids) -> "EmbeddingMatrix":
        """Gather a sub-matrix in the order of ``row_ids``."""
        idx = [self.index_of(i) for i in row_ids]
        return EmbeddingMatrix(tuple(row_ids), self.values[idx])


def _first_duplicate(items):
    seen = set()
    for item in items:
        if item in seen:
            return item
        seen.add(item)
    return None


def default_ids_path(path: Path | str) -> Path:
    """Sidecar id file convention: the payload path with ``.ids`` appended."""
    path = Path(path)
    return path.with_name(path.name + ".ids")


def load_embeddings(path: Path | str, ids_path: Path | str | None = None) -> EmbeddingMatrix:
    """Load an ``FGE1`` embedding file plus its id sidecar."""
    path = Path(path)
    ids_path = default_ids_path(path) if ids_path is None else Path(ids_path)
    raw = path.read_bytes()
    if raw[:4] != EMBEDDING_MAGIC:
        raise EmbeddingFormatError(
            f"{path}: bad magic {raw[:4]!r}, expected {EMBEDDING_MAGIC!r}"
        )
    if len(raw) < 4 + _HEADER.size:
        raise EmbeddingFormatError(f"{path}: truncated header")
    rows, dim = _HEADER.unpack_from(raw, 4)
    expected = 4 + _HEADER.size + rows * dim * 4
    if len(raw) != expected:
        raise EmbeddingFormatError(
            f"{path}: payload is {len(raw)} bytes, expected {expected} "
            f"for {rows}x{dim} float32"
        )
    values = np.frombuffer(raw, dtype="<f4", offset=4 + _HEADER.size).reshape(rows, dim)
    ids = _read_id_lines(ids_path)
    if len(ids) != rows:
        raise EmbeddingFormatError(
            f"{ids_path}: {len(ids)} ids for {rows} embedding rows"
        )
    return EmbeddingMatrix(tuple(ids), values.copy())


def write_embeddings(matrix: EmbeddingMatrix, path: Path | str,
                     ids_path: Path | str | None = None) -> Path:
    """Write ``FGE1`` + id sidecar; a reload round-trips byte-identically."""
    path = Path(path)
    ids_path = default_ids_path(path) if ids_path is None else Path(ids_path)
    with path.open("wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(_HEADER.pack(matrix.rows, matrix.dim))
        fh.write(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())
    _write_id_lines(matrix.ids, ids_path)
    return path


def _read_id_lines(path: Path) -> list[str]:
    ids = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                raise EmbeddingFormatError(f"{path}:{lineno}: empty id line")
            ids.append(line)
    return ids


def _write_id_lines(ids, path: Path) -> None:
    for i in ids:
        if not i or "\n" in i:
            raise EmbeddingFormatError(f"id {i!r} cannot be written to a line-based sidecar")
    path.write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")


# ---------------------------------------------------------------------------
# Score matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Similarity scores for every (query, candidate) pair.

    Carrier for any model's similarities; queries index rows, candidates
    index columns. Scores are kept in float64 in memory and serialized as
    float32.
    """

    query_ids: tuple[str, ...]
    candidate_ids: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "query_ids", tuple(self.query_ids))
        object.__setattr__(self, "candidate_ids", tuple(self.candidate_ids))
        scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        if scores.ndim != 2 or scores.shape != (len(self.query_ids), len(self.candidate_ids)):
            raise ValueError(
                f"score matrix shape {scores.shape} does not match "
                f"{len(self.query_ids)} queries x {len(self.candidate_ids)} candidates"
            )
        for name, ids in (("query", self.query_ids), ("candidate", self.candidate_ids)):
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate {name} id {_first_duplicate(ids)!r}")
        if not np.isfinite(scores).all():
            bad = np.argwhere(~np.isfinite(scores))[0]
            raise ValueError(f"non-finite score at ({int(bad[0])}, {int(bad[1])})")
        object.__setattr__(self, "_qindex", {i: n for n, i in enumerate(self.query_ids)})
        object.__setattr__(self, "_cindex", {i: n for n, i in enumerate(self.candidate_ids)})

    def query_index(self, query_id: str) -> int:
        try:
            return self._qindex[query_id]
        except KeyError:
            raise KeyError(f"unknown query id {query_id!r}") from None

    def candidate_index(self, candidate_id: str) -> int:
        try:
            return self._cindex[candidate_id]
        except KeyError:
            raise KeyError(f"unknown candidate id {candidate_id!r}") from None


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Manifest:
    """Index of one dataset: its image pool, captions, and embedding files.

    ``exclusion_ids`` lists images that must never enter a candidate pool
    (anything seen by retrieval models during training or validation).
    """

    name: str
    image_ids: tuple[str, ...]
    captions_path: Path
    image_embeddings_path: Path
    text_embeddings_path: Path
    exclusion_ids: frozenset[str]
    captions_per_image: int


_MANIFEST_FIELDS = (
    "name", "image_ids", "captions_path", "image_embeddings_path",
    "text_embeddings_path", "exclusion_ids", "captions_per_image",
)


def load_manifest(path: Path | str) -> Manifest:
    """Parse and validate a manifest file.

    Relative paths resolve against the manifest's own directory. Raises
    :class:`ManifestError` on duplicate image ids, overlap between the
    image pool and the exclusion list, or captions that reference images
    missing from the pool.
    """
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc.msg})") from exc
    missing = [f for f in _MANIFEST_FIELDS if f not in obj]
    if missing:
        raise ManifestError(f"{path}: missing manifest fields {missing}")

    image_ids = tuple(str(i) for i in obj["image_ids"])
    dup = _first_duplicate(image_ids)
    if dup is not None:
        raise ManifestError(f"{path}: duplicate image id {dup!r}")
    exclusion = frozenset(str(i) for i in obj["exclusion_ids"])
    overlap = sorted(exclusion.intersection(image_ids))
    if overlap:
        raise ManifestError(
            f"{path}: exclusion list overlaps the image pool: {overlap}"
        )
    m = int(obj["captions_per_image"])
    if m < 1:
        raise ManifestError(f"{path}: captions_per_image must be >= 1, got {m}")

    base = path.parent
    manifest = Manifest(
        name=str(obj["name"]),
        image_ids=image_ids,
        captions_path=_resolve(base, obj["captions_path"]),
        image_embeddings_path=_resolve(base, obj["image_embeddings_path"]),
        text_embeddings_path=_resolve(base, obj["text_embeddings_path"]),
        exclusion_ids=exclusion,
        captions_per_image=m,
    )
    # Caption -> image references must stay inside the pool.
    try:
        captions = load_captions(manifest.captions_path)
    except OSError as exc:
        raise ManifestError(f"cannot read captions {manifest.captions_path}: {exc}") from exc
    known = set(image_ids)
    for rec in captions:
        if rec.image_id not in known:
            raise ManifestError(
                f"caption {rec.caption_id!r} references image {rec.image_id!r} "
                f"which is not in the pool"
            )
    return manifest


def write_manifest(manifest: Manifest, path: Path | str) -> Path:
    path = Path(path)
    path.write_text(json.dumps({
        "name": manifest.name,
        "image_ids": list(manifest.image_ids),
        "captions_path": str(manifest.captions_path),
        "image_embeddings_path": str(manifest.image_embeddings_path),
        "text_embeddings_path": str(manifest.text_embeddings_path),
        "exclusion_ids": sorted(manifest.exclusion_ids),
        "captions_per_image": manifest.captions_per_image,
    }, indent=2) + "\n", encoding="utf-8")
    return path


def _resolve(base: Path, p) -> Path:
    p = Path(str(p))
    return p if p.is_absolute() else base / p


# ---------------------------------------------------------------------------
# Dataset validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a full dataset audit; consistent iff ``issues`` is empty."""

    dataset: str
    n_images: int
    n_captions: int
    issues: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.issues


def validate_dataset(manifest: Manifest) -> ValidationReport:
    """Audit a dataset against its manifest.

    Unlike :func:`load_manifest` this never raises on inconsistent data;
    every problem becomes a report entry. Repeated calls on the same
    inputs yield identical reports.
    """
    issues: list[str] = []

    for image_id in sorted(manifest.exclusion_ids.intersection(manifest.image_ids)):
        issues.append(f"image {image_id!r} appears in both the pool and the exclusion list")

    captions: list[CaptionRecord] = []
    try:
        captions = load_captions(manifest.captions_path)
    except (OSError, CaptionError) as exc:
        issues.append(f"captions unreadable: {exc}")

    pool = set(manifest.image_ids)
    counts: dict[str, int] = {}
    for rec in captions:
        counts[rec.image_id] = counts.get(rec.image_id, 0) + 1
        if rec.image_id not in pool:
            issues.append(
                f"caption {rec.caption_id!r} references unknown image {rec.image_id!r}"
            )
    m = manifest.captions_per_image
    for image_id in manifest.image_ids:
        got = counts.get(image_id, 0)
        if got != m:
            issues.append(f"image {image_id!r}: caption count {got} != {m}")

    issues.extend(_embedding_alignment_issues(
        manifest.image_embeddings_path, set(manifest.image_ids), "image"))
    issues.extend(_embedding_alignment_issues(
        manifest.text_embeddings_path, {rec.caption_id for rec in captions}, "caption"))

    return ValidationReport(
        dataset=manifest.name,
        n_images=len(manifest.image_ids),
        n_captions=len(captions),
        issues=tuple(issues),
    )


def _embedding_alignment_issues(path: Path, expected_ids: set[str], kind: str) -> list[str]:
    try:
        matrix = load_embeddings(path)
    except (OSError, EmbeddingFormatError) as exc:
        return [f"{kind} embeddings unreadable: {exc}"]
    issues = []
    have = set(matrix.ids)
    for missing in sorted(expected_ids - have):
        issues.append(f"{kind} {missing!r} has no embedding row")
    for extra in sorted(have - expected_ids):
        issues.append(f"embedding id {extra!r} matches no known {kind}")
    return issues
