"""Adapter jobs: one input file, one model pass, one output file.

Every handler validates its whole input against the file contract before
any model work starts, so a malformed row is reported without paying for
inference. Outputs are written through temporary names and renamed into
place; a failing job never leaves a partial file at the output path.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from fgbench_adapters import annotate as annotate_mod
from fgbench_adapters import embed as embed_mod
from fgbench_adapters import generate as generate_mod
from fgbench_adapters import merge as merge_mod
from fgbench_adapters.fileio import FormatError, read_jsonl, write_jsonl, write_matrix


class AdapterInputError(ValueError):
    """The input, model name, or job shape violates an adapter contract."""


KINDS = (
    "embed-images", "embed-texts", "score-pairs",
    "generate-details", "merge", "annotate",
)

_MODELS = {
    "embed-images": ("tiny-clip",),
    "embed-texts": ("tiny-clip",),
    "score-pairs": ("tiny-clip",),
    "generate-details": ("grammar",),
    "merge": ("template", "lm"),
    "annotate": ("rule-tagger",),
}


@dataclass(frozen=True)
class AdapterJob:
    kind: str
    input_path: Path
    output_path: Path
    model_name: str | None = None  # None picks the kind's default backend
    device: str = "cpu"
    seed: int = 0
    fine_tune_path: Path | None = None


def run_adapter(job: AdapterJob) -> int:
    """Execute one job; 0 on success, 1 with a stderr line otherwise."""
    import sys

    try:
        summary = _execute(job)
    except (AdapterInputError, FormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


def _execute(job: AdapterJob) -> str:
    if job.kind not in KINDS:
        raise AdapterInputError(f"unknown adapter kind {job.kind!r}")
    model = job.model_name or _MODELS[job.kind][0]
    if model not in _MODELS[job.kind]:
        known = ", ".join(_MODELS[job.kind])
        raise AdapterInputError(
            f"unknown model {model!r} for {job.kind} (known: {known})")
    if job.fine_tune_path is not None and job.kind != "merge":
        raise AdapterInputError("fine-tune pairs apply to the merge kind only")
    handler = _HANDLERS[job.kind]
    return handler(job, model)


def _require_str(row: dict, field: str, where: str) -> str:
    value = row.get(field)
    if not isinstance(value, str) or not value.strip():
        raise AdapterInputError(f"{where}: field {field!r} must be a non-empty string")
    return value


def _require_unique(values, what: str) -> None:
    seen: set[str] = set()
    for v in values:
        if v in seen:
            raise AdapterInputError(f"duplicate {what} {v!r}")
        seen.add(v)


def _image_rows(path: Path, required: tuple[str, ...]) -> list[dict]:
    """Rows naming image files; every path must exist before any is opened."""
    rows = read_jsonl(path, required=required)
    if not rows:
        raise AdapterInputError(f"{path}: no rows")
    base = path.parent
    for i, row in enumerate(rows, start=1):
        where = f"{path}:{i}"
        _require_str(row, "image_id", where)
        rel = Path(_require_str(row, "path", where))
        resolved = rel if rel.is_absolute() else base / rel
        if not resolved.is_file():
            raise AdapterInputError(f"{where}: image file {resolved} not found")
        row["path"] = resolved
    return rows


def _run_embed_images(job: AdapterJob, model: str) -> str:
    rows = _image_rows(job.input_path, required=("image_id", "path"))
    ids = [row["image_id"] for row in rows]
    _require_unique(ids, "image_id")
    vectors = embed_mod.embed_images([row["path"] for row in rows], seed=job.seed)
    write_matrix(ids, vectors, job.output_path)
    return f"embedded {len(ids)} images -> {job.output_path}"


def _run_embed_texts(job: AdapterJob, model: str) -> str:
    rows = read_jsonl(job.input_path, required=("caption_id", "text"))
    if not rows:
        raise AdapterInputError(f"{job.input_path}: no rows")
    ids, texts = [], []
    for i, row in enumerate(rows, start=1):
        where = f"{job.input_path}:{i}"
        ids.append(_require_str(row, "caption_id", where))
        texts.append(_require_str(row, "text", where))
    _require_unique(ids, "caption_id")
    vectors = embed_mod.embed_texts(texts, seed=job.seed)
    write_matrix(ids, vectors, job.output_path)
    return f"embedded {len(ids)} texts -> {job.output_path}"


def _run_score_pairs(job: AdapterJob, model: str) -> str:
    required = ("image_id", "path", "text_correct", "text_wrong")
    rows = _image_rows(job.input_path, required=required)
    for i, row in enumerate(rows, start=1):
        where = f"{job.input_path}:{i}"
        _require_str(row, "text_correct", where)
        _require_str(row, "text_wrong", where)

    out = []
    for row in rows:
        image_vec = embed_mod.embed_image_file(row["path"])
        out.append({
            "image_id": row["image_id"],
            "score_correct": embed_mod.pair_score(
                image_vec, embed_mod.embed_text(row["text_correct"], job.seed)),
            "score_wrong": embed_mod.pair_score(
                image_vec, embed_mod.embed_text(row["text_wrong"], job.seed)),
        })
    write_jsonl(out, job.output_path)
    return f"scored {len(out)} pairs -> {job.output_path}"


def _run_generate(job: AdapterJob, model: str) -> str:
    required = ("caption_id", "image_id", "template_row", "prompted_input")
    rows = read_jsonl(job.input_path, required=required)
    if not rows:
        raise AdapterInputError(f"{job.input_path}: no rows")
    for i, row in enumerate(rows, start=1):
        where = f"{job.input_path}:{i}"
        _require_str(row, "caption_id", where)
        _require_str(row, "prompted_input", where)
        tr = row["template_row"]
        if isinstance(tr, bool) or not isinstance(tr, int) or not 1 <= tr <= 5:
            raise AdapterInputError(f"{where}: template_row must be an integer in 1..5")

    out = [{
        "caption_id": row["caption_id"],
        "generated_detail": generate_mod.generate_detail(
            row["caption_id"], row["template_row"], row["prompted_input"],
            seed=job.seed),
    } for row in rows]
    write_jsonl(out, job.output_path)
    return f"generated {len(out)} details -> {job.output_path}"


def _merge_rows(path: Path) -> list[dict]:
    rows = read_jsonl(path, required=("rest", "detail"))
    if not rows:
        raise AdapterInputError(f"{path}: no rows")
    for i, row in enumerate(rows, start=1):
        where = f"{path}:{i}"
        _require_str(row, "rest", where)
        _require_str(row, "detail", where)
    return rows


def _run_merge(job: AdapterJob, model: str) -> str:
    rows = _merge_rows(job.input_path)
    trained = None
    n_train = 0
    if model == "lm":
        if job.fine_tune_path is None:
            raise AdapterInputError("the lm model requires fine-tune pairs")
        train_rows = _merge_rows(job.fine_tune_path)
        n_train = len(train_rows)
        trained = merge_mod.train_merger(
            [(r["rest"], r["detail"]) for r in train_rows],
            seed=job.seed, device=job.device)
    elif job.fine_tune_path is not None:
        raise AdapterInputError("fine-tune pairs require the lm model")

    out = []
    for row in rows:
        if trained is None:
            merged = merge_mod.template_merge(row["rest"], row["detail"])
        else:
            merged = trained.merge(row["rest"], row["detail"])
        kept = {k: row[k] for k in ("caption_id",) if k in row}
        kept.update(rest=row["rest"], detail=row["detail"], merged=merged)
        out.append(kept)
    write_jsonl(out, job.output_path)
    if trained is not None:
        return f"fine-tuned on {n_train} pairs; merged {len(out)} -> {job.output_path}"
    return f"merged {len(out)} pairs -> {job.output_path}"


def _run_annotate(job: AdapterJob, model: str) -> str:
    rows = read_jsonl(job.input_path, required=("caption_id", "image_id", "text"))
    if not rows:
        raise AdapterInputError(f"{job.input_path}: no rows")
    ids = []
    for i, row in enumerate(rows, start=1):
        where = f"{job.input_path}:{i}"
        ids.append(_require_str(row, "caption_id", where))
        _require_str(row, "image_id", where)
        _require_str(row, "text", where)
    _require_unique(ids, "caption_id")

    out = [{
        "caption_id": row["caption_id"],
        "image_id": row["image_id"],
        "text": row["text"],
        "tokens": annotate_mod.annotate_text(row["text"]),
    } for row in rows]
    write_jsonl(out, job.output_path)
    return f"annotated {len(out)} captions -> {job.output_path}"


_HANDLERS = {
    "embed-images": _run_embed_images,
    "embed-texts": _run_embed_texts,
    "score-pairs": _run_score_pairs,
    "generate-details": _run_generate,
    "merge": _run_merge,
    "annotate": _run_annotate,
}
