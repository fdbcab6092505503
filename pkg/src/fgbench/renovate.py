"""Coarse-caption detection and renovation.

A caption is *fine* when the matcher ranks its own image first, *coarse*
otherwise. Coarse captions are rewritten in four file-mediated stages:
prompt batches elicit new image details from a captioning backend, the
detail is appended to the original text, a merging backend folds the two
sentences into one, and compatibility scores filter and pick the best
rewrite. A review queue captures the final human pass.

Generation, merging, and scoring backends are external processes; this
module owns the formats between them and all the deterministic logic.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from .dataset import CaptionError, CaptionRecord, ScoreMatrix, detokenize
from .similarity import rank_of_target

COARSE = "coarse"
FINE = "fine"

REVIEW_STATUSES = ("pending", "accepted", "corrected", "rejected")

_TERMINALS = (".", "!", "?")

# Nouns treated as plural when choosing is/are in templates: bare -s
# (but not -ss) plus the common irregulars.
_IRREGULAR_PLURALS = frozenset({
    "men", "women", "children", "people", "feet", "teeth", "mice", "geese",
})


def _is_plural(noun: str) -> bool:
    w = noun.lower()
    if w in _IRREGULAR_PLURALS:
        return True
    return w.endswith("s") and not w.endswith("ss")


def _ensure_sentence(text: str) -> str:
    text = text.strip()
    return text if text.endswith(_TERMINALS) else text + "."


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------

def detect_coarse(t2i_scores: ScoreMatrix, targets: dict[str, str]) -> dict[str, str]:
    """Label every caption ``coarse`` or ``fine``.

    ``targets`` maps caption id to its ground-truth image id. A caption is
    fine only when its image outranks every other candidate strictly; a
    tie for first place counts as a detection failure, so tied captions
    come out coarse.
    """
    labels: dict[str, str] = {}
    for caption_id, image_id in targets.items():
        qi = t2i_scores.query_index(caption_id)
        ci = t2i_scores.candidate_index(image_id)
        rank = rank_of_target(t2i_scores.scores[qi], ci)
        labels[caption_id] = FINE if rank == 1 else COARSE
    return labels


def write_detection(labels: dict[str, str], path: Path | str) -> Path:
    path = Path(path)
    path.write_text(json.dumps(labels, indent=2) + "\n", encoding="utf-8")
    return path


def load_detection(path: Path | str) -> dict[str, str]:
    labels = json.loads(Path(path).read_text(encoding="utf-8"))
    for caption_id, label in labels.items():
        if label not in (COARSE, FINE):
            raise ValueError(f"caption {caption_id!r} has unknown label {label!r}")
    return labels


# ---------------------------------------------------------------------------
# Prompt construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Prompt:
    template_row: int
    text: str


@dataclass(frozen=True)
class PromptSet:
    """All detail-eliciting prompts for one caption.

    ``prompted_inputs`` pairs the caption text with each prompt, ready to
    feed a captioning backend as a generation prefix.
    """

    caption_id: str
    nouns: tuple[str, ...]
    prompts: tuple[Prompt, ...]
    prompted_inputs: tuple[str, ...]

    def __post_init__(self):
        if len(self.prompts) != len(self.prompted_inputs):
            raise ValueError(
                f"caption {self.caption_id!r}: {len(self.prompts)} prompts but "
                f"{len(self.prompted_inputs)} prompted inputs"
            )
        for p in self.prompts:
            if not 1 <= p.template_row <= 5:
                raise ValueError(f"caption {self.caption_id!r}: bad template row {p.template_row}")


def extract_nouns(caption: CaptionRecord) -> list[str]:
    """Noun and proper-noun surfaces in sentence order, deduplicated.

    Deduplication is case-insensitive and keeps the first spelling seen.
    """
    if not caption.annotated:
        raise CaptionError(f"caption {caption.caption_id!r} lacks token annotations")
    nouns: list[str] = []
    seen: set[str] = set()
    for tok in caption.tokens:
        if tok.pos in ("NOUN", "PROPN") and tok.surface.lower() not in seen:
            seen.add(tok.surface.lower())
            nouns.append(tok.surface)
    return nouns


def build_prompts(caption: CaptionRecord, nouns) -> PromptSet:
    """Instantiate the five prompt templates for one caption.

    Rows 1-2 are unconditional ("It is", "There is"); rows 3-4 repeat per
    noun ("The X is/are", "The color of X"); row 5 fires only for person
    nouns ("The man/woman wears"). Each prompt is appended to the caption
    text to form the generation input.
    """
    nouns = tuple(nouns)
    prompts: list[Prompt] = [Prompt(1, "It is"), Prompt(2, "There is")]
    for noun in nouns:
        copula = "are" if _is_plural(noun) else "is"
        prompts.append(Prompt(3, f"The {noun} {copula}"))
        prompts.append(Prompt(4, f"The color of {noun}"))
    for noun in nouns:
        if noun.lower() in ("man", "woman"):
            prompts.append(Prompt(5, f"The {noun} wears"))
    inputs = tuple(f"{caption.text} {p.text}" for p in prompts)
    return PromptSet(caption.caption_id, nouns, tuple(prompts), inputs)


def write_prompt_batch(prompt_sets, captions_by_id: dict[str, CaptionRecord],
                       path: Path | str) -> Path:
    """One JSONL line per prompted input: {caption_id, image_id, template_row, prompted_input}."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for ps in prompt_sets:
            image_id = captions_by_id[ps.caption_id].image_id
            for prompt, prompted in zip(ps.prompts, ps.prompted_inputs):
                fh.write(json.dumps({
                    "caption_id": ps.caption_id,
                    "image_id": image_id,
                    "template_row": prompt.template_row,
                    "prompted_input": prompted,
                }, ensure_ascii=False) + "\n")
    return path


def load_generations(path: Path | str) -> list[tuple[str, str]]:
    """Generation backend output: JSONL {caption_id, generated_detail}, file order kept."""
    out: list[tuple[str, str]] = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            try:
                out.append((obj["caption_id"], obj["generated_detail"]))
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: missing field {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# Renovation candidates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RenovationCandidate:
    """One possible rewrite of a coarse caption.

    ``combined_text`` is the two-sentence form (original + detail);
    ``merged_text`` the one-sentence form once a merger has run. Scores
    arrive from a compatibility scorer before filtering.
    """

    caption_id: str
    image_id: str
    original_text: str
    generated_detail: str
    combined_text: str
    merged_text: str | None = None
    clipscore_original: float | None = None
    clipscore_candidate: float | None = None

    def __post_init__(self):
        expected = combine_text(self.original_text, self.generated_detail)
        if self.combined_text != expected:
            raise ValueError(
                f"candidate for {self.caption_id!r}: combined_text "
                f"{self.combined_text!r} != original + detail {expected!r}"
            )

    @property
    def final_text(self) -> str:
        return self.merged_text if self.merged_text is not None else self.combined_text


def combine_text(original: str, detail: str) -> str:
    """Two-sentence concatenation with terminal punctuation normalized."""
    return f"{_ensure_sentence(original)} {_ensure_sentence(detail)}"


def assemble_candidates(captions, generations) -> list[RenovationCandidate]:
    """Join generated details back onto their captions, in generation order."""
    by_id = {c.caption_id: c for c in captions}
    out = []
    for caption_id, detail in generations:
        if caption_id not in by_id:
            raise ValueError(f"generation references unknown caption {caption_id!r}")
        rec = by_id[caption_id]
        out.append(RenovationCandidate(
            caption_id=caption_id,
            image_id=rec.image_id,
            original_text=rec.text,
            generated_detail=detail,
            combined_text=combine_text(rec.text, detail),
        ))
    return out


def _require_scores(candidate: RenovationCandidate) -> None:
    if candidate.clipscore_original is None or candidate.clipscore_candidate is None:
        raise ValueError(f"candidate for {candidate.caption_id!r} is missing a clipscore")


def filter_candidates(candidates) -> list[RenovationCandidate]:
    """Drop candidates scoring strictly below their original text.

    Equality survives: only a *lower* score signals the rewrite hurt the
    image-text match. Order is preserved.
    """
    kept = []
    for c in candidates:
        _require_scores(c)
        if c.clipscore_candidate >= c.clipscore_original:
            kept.append(c)
    return kept


def select_best(candidates) -> RenovationCandidate | None:
    """Highest-scoring candidate, earliest wins ties; None when none survive."""
    best: RenovationCandidate | None = None
    for c in candidates:
        _require_scores(c)
        if best is None or c.clipscore_candidate > best.clipscore_candidate:
            best = c
    return best


def select_renovations(candidates) -> dict[str, RenovationCandidate]:
    """Per-caption best candidate, keyed in first-appearance order."""
    grouped: dict[str, list[RenovationCandidate]] = {}
    for c in candidates:
        grouped.setdefault(c.caption_id, []).append(c)
    out: dict[str, RenovationCandidate] = {}
    for caption_id, group in grouped.items():
        best = select_best(group)
        if best is not None:
            out[caption_id] = best
    return out


_CANDIDATE_FIELDS = (
    "caption_id", "image_id", "original_text", "generated_detail",
    "combined_text", "merged_text", "clipscore_original", "clipscore_candidate",
)


def write_candidates(candidates, path: Path | str) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for c in candidates:
            fh.write(json.dumps(
                {f: getattr(c, f) for f in _CANDIDATE_FIELDS}, ensure_ascii=False
            ) + "\n")
    return path


def load_candidates(path: Path | str) -> list[RenovationCandidate]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            missing = [f for f in _CANDIDATE_FIELDS[:5] if f not in obj]
            if missing:
                raise ValueError(f"{path}:{lineno}: missing fields {missing}")
            out.append(RenovationCandidate(
                caption_id=obj["caption_id"],
                image_id=obj["image_id"],
                original_text=obj["original_text"],
                generated_detail=obj["generated_detail"],
                combined_text=obj["combined_text"],
                merged_text=obj.get("merged_text"),
                clipscore_original=obj.get("clipscore_original"),
                clipscore_candidate=obj.get("clipscore_candidate"),
            ))
    return out


def apply_renovations(captions, selections: dict[str, RenovationCandidate]) -> list[CaptionRecord]:
    """Replace selected captions' text in place, keeping ids and order.

    Rewritten captions lose their token annotations (the text changed, so
    they no longer apply) and must be re-annotated downstream.
    """
    out = []
    for rec in captions:
        best = selections.get(rec.caption_id)
        if best is None or best.final_text == rec.text:
            out.append(rec)
        else:
            out.append(CaptionRecord(rec.caption_id, rec.image_id, best.final_text))
    return out


# ---------------------------------------------------------------------------
# Split fine captions into merge-training pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPair:
    """(rest, detail) training pair for the sentence merger."""

    rest: str
    detail: str


def split_for_merge_training(caption: CaptionRecord) -> list[SplitPair]:
    """Extract (rest, detail) pairs from one annotated caption.

    Two structures produce pairs, each removing only its own span:

    * prepositional phrase: an ADP heading a noun subtree and attached to
      a verb or the root; detail = "it is <phrase>."
    * adjective-noun: an adjectival modifier; detail = "the <noun> is
      <adjective>."

    Pairs come back ordered by where the removed span starts. A caption
    with neither structure yields an empty list.
    """
    if not caption.annotated:
        raise CaptionError(f"caption {caption.caption_id!r} lacks token annotations")
    toks = caption.tokens
    n = len(toks)
    children: dict[int, list[int]] = defaultdict(list)
    for i, tok in enumerate(toks):
        if tok.head >= 0:
            children[tok.head].append(i)

    def subtree(i: int) -> list[int]:
        out, stack = [], [i]
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(children[j])
        return sorted(out)

    def without(span: set[int]) -> str:
        rest = detokenize(toks[j].surface for j in range(n) if j not in span)
        return _ensure_sentence(rest)

    pairs: list[tuple[int, SplitPair]] = []
    for i, tok in enumerate(toks):
        if tok.pos != "ADP" or tok.head < 0:
            continue
        head = toks[tok.head]
        if head.pos not in ("VERB", "AUX") and head.head != -1:
            continue
        span = subtree(i)
        if not any(toks[j].pos in ("NOUN", "PROPN", "PRON") for j in span):
            continue
        phrase = detokenize(toks[j].surface for j in span if toks[j].pos != "PUNCT")
        pairs.append((span[0], SplitPair(without(set(span)), _ensure_sentence(f"it is {phrase}"))))

    for i, tok in enumerate(toks):
        if tok.deprel != "amod" or tok.pos != "ADJ" or tok.head < 0:
            continue
        noun = toks[tok.head]
        span = subtree(i)
        adj = detokenize(toks[j].surface for j in span if toks[j].pos != "PUNCT")
        copula = "are" if _is_plural(noun.surface) else "is"
        detail = _ensure_sentence(f"the {noun.surface} {copula} {adj}")
        pairs.append((span[0], SplitPair(without(set(span)), detail)))

    pairs.sort(key=lambda p: p[0])
    return [p for _, p in pairs]


def write_split_pairs(captions, path: Path | str) -> tuple[Path, int]:
    """Split every annotated caption; JSONL {caption_id, rest, detail} per pair."""
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for rec in captions:
            for pair in split_for_merge_training(rec):
                fh.write(json.dumps({
                    "caption_id": rec.caption_id,
                    "rest": pair.rest,
                    "detail": pair.detail,
                }, ensure_ascii=False) + "\n")
                count += 1
    return path, count


# ---------------------------------------------------------------------------
# Review queue
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReviewItem:
    """One caption awaiting (or past) human review."""

    caption_id: str
    image_id: str
    original_text: str
    candidate_text: str
    status: str = "pending"
    corrected_text: str | None = None

    def __post_init__(self):
        if self.status not in REVIEW_STATUSES:
            raise ValueError(
                f"review item {self.caption_id!r}: unknown status {self.status!r}"
            )
        if (self.corrected_text is not None) != (self.status == "corrected"):
            raise ValueError(
                f"review item {self.caption_id!r}: corrected_text must be present "
                f"exactly when status is 'corrected'"
            )


def export_review_queue(original_captions, renovated_captions, path: Path | str) -> Path:
    """Queue every caption whose text changed, all pending."""
    originals = {c.caption_id: c for c in original_captions}
    items = []
    for rec in renovated_captions:
        if rec.caption_id not in originals:
            raise ValueError(f"renovated caption {rec.caption_id!r} has no original")
        orig = originals[rec.caption_id]
        if rec.text != orig.text:
            items.append(ReviewItem(rec.caption_id, rec.image_id, orig.text, rec.text))
    return write_review_queue(items, path)


def write_review_queue(items, path: Path | str) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps({
                "caption_id": item.caption_id,
                "image_id": item.image_id,
                "original_text": item.original_text,
                "candidate_text": item.candidate_text,
                "status": item.status,
                "corrected_text": item.corrected_text,
            }, ensure_ascii=False) + "\n")
    return path


def load_review_queue(path: Path | str) -> list[ReviewItem]:
    items = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            try:
                items.append(ReviewItem(
                    caption_id=obj["caption_id"],
                    image_id=obj["image_id"],
                    original_text=obj["original_text"],
                    candidate_text=obj["candidate_text"],
                    status=obj["status"],
                    corrected_text=obj.get("corrected_text"),
                ))
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: missing field {exc}") from exc
    return items


def apply_corrections(items, original_captions) -> list[CaptionRecord]:
    """Resolve a fully reviewed queue into the final caption set.

    accepted keeps the candidate text, corrected takes the reviewer's
    text, rejected reverts to the original. Captions never queued pass
    through untouched, annotations intact.
    """
    pending = [item.caption_id for item in items if item.status == "pending"]
    if pending:
        raise ValueError(f"review queue still has pending items: {pending}")
    known = {c.caption_id for c in original_captions}
    final_text: dict[str, str] = {}
    for item in items:
        if item.caption_id not in known:
            raise ValueError(f"review item {item.caption_id!r} matches no caption")
        if item.status == "accepted":
            final_text[item.caption_id] = item.candidate_text
        elif item.status == "corrected":
            final_text[item.caption_id] = item.corrected_text
        else:
            final_text[item.caption_id] = item.original_text

    out = []
    for rec in original_captions:
        text = final_text.get(rec.caption_id, rec.text)
        if text == rec.text:
            out.append(rec)
        else:
            out.append(CaptionRecord(rec.caption_id, rec.image_id, text))
    return out
