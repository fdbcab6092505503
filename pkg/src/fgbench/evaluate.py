"""Recall@K evaluation and benchmark-difficulty probes.

Covers the standard retrieval report (T2I: one true image per text; I2T:
any of an image's captions counts), the 100-query mini test that swaps
the full pool for per-query similar pools, equal-size pool comparisons,
wrong-vs-correct pair matching, and token-level caption statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .dataset import CaptionError, ScoreMatrix
from .similarity import topk_row

TASKS = ("t2i", "i2t")


@dataclass(frozen=True)
class RetrievalReport:
    """Recall@K percentages for one task over one candidate pool."""

    task: str
    pool_label: str
    n_queries: int
    pool_size: int
    recalls: dict[int, float]

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        last = 0.0
        for k in sorted(self.recalls):
            v = self.recalls[k]
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"R@{k} = {v} outside [0, 100]")
            if v < last:
                raise ValueError(f"R@{k} = {v} below the recall at a smaller K ({last})")
            last = v


@dataclass(frozen=True)
class TextStats:
    """Aggregate noun/adjective/length statistics over a caption set."""

    n_texts: int
    total_nouns: int
    total_adjs: int
    avg_nouns: float
    avg_adjs: float
    avg_length: float

    def __post_init__(self):
        for name in ("n_texts", "total_nouns", "total_adjs",
                     "avg_nouns", "avg_adjs", "avg_length"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_texts:
            for avg, total in ((self.avg_nouns, self.total_nouns),
                               (self.avg_adjs, self.total_adjs)):
                if abs(avg - total / self.n_texts) > 1e-9:
                    raise ValueError("average inconsistent with its total")


def t2i_truth(captions) -> dict[str, set[str]]:
    """Each caption queries for its single ground-truth image."""
    return {rec.caption_id: {rec.image_id} for rec in captions}


def i2t_truth(captions) -> dict[str, set[str]]:
    """Each image queries for any of its captions."""
    truth: dict[str, set[str]] = {}
    for rec in captions:
        truth.setdefault(rec.image_id, set()).add(rec.caption_id)
    return truth


def _normalized_ks(ks) -> tuple[int, ...]:
    out = tuple(int(k) for k in ks)
    if not out:
        raise ValueError("need at least one K")
    if any(k < 1 for k in out):
        raise ValueError(f"every K must be >= 1, got {out}")
    return tuple(sorted(set(out)))


def _first_hit_position(row, candidate_ids, truth: set, max_k: int) -> int | None:
    """0-based position of the best-ranked true candidate, None if outside top max_k."""
    for pos, j in enumerate(topk_row(row, max_k)):
        if candidate_ids[j] in truth:
            return pos
    return None


def _check_truth(scores: ScoreMatrix, ground_truth: dict) -> None:
    for query_id, truth in ground_truth.items():
        scores.query_index(query_id)
        if not truth:
            raise ValueError(f"query {query_id!r} has an empty ground-truth set")
        for t in truth:
            scores.candidate_index(t)


def recall_at_k(scores: ScoreMatrix, ground_truth: dict[str, set[str]],
                ks=(1, 5, 10), *, task: str = "t2i",
                pool_label: str = "full") -> RetrievalReport:
    """Fraction of queries whose truth appears in the top-K, as a percentage.

    Ranking uses the engine's total order (descending score, ties by
    ascending candidate index). Queries evaluated are exactly the keys of
    ``ground_truth``; every truth id must be among the candidates.
    """
    ks = _normalized_ks(ks)
    _check_truth(scores, ground_truth)
    max_k = min(ks[-1], len(scores.candidate_ids))
    hits = {k: 0 for k in ks}
    for query_id in scores.query_ids:
        truth = ground_truth.get(query_id)
        if truth is None:
            continue
        row = scores.scores[scores.query_index(query_id)]
        pos = _first_hit_position(row, scores.candidate_ids, set(truth), max_k)
        if pos is not None:
            for k in ks:
                if pos < k:
                    hits[k] += 1
    n = len(ground_truth)
    recalls = {k: 100.0 * hits[k] / n for k in ks}
    return RetrievalReport(task, pool_label, n, len(scores.candidate_ids), recalls)


def mini_test(scores_full: ScoreMatrix, similar_sets: dict[str, list[str]],
              sample: list[str], ground_truth: dict[str, set[str]],
              ks=(1, 5, 10), *, task: str = "t2i",
              pool_size: int = 100) -> tuple[RetrievalReport, RetrievalReport]:
    """Evaluate sampled queries on the full pool and on per-query similar pools.

    Each sampled query must have a similar candidate list of exactly
    ``pool_size`` images containing at least one of its true targets; the
    second report restricts that query's candidates to its own list.
    """
    ks = _normalized_ks(ks)
    sample = list(sample)
    truth_sub: dict[str, set[str]] = {}
    for q in sample:
        if q not in ground_truth:
            raise ValueError(f"sampled query {q!r} has no ground truth")
        truth_sub[q] = set(ground_truth[q])
    _check_truth(scores_full, truth_sub)

    for q in sample:
        members = similar_sets.get(q)
        if members is None:
            raise ValueError(f"sampled query {q!r} has no similar candidate list")
        if len(members) != pool_size:
            raise ValueError(
                f"query {q!r}: similar list has {len(members)} candidates, "
                f"expected {pool_size}"
            )
        if not truth_sub[q].intersection(members):
            raise ValueError(f"query {q!r}: no true target in its similar list")

    original = recall_at_k(scores_full, truth_sub, ks, task=task, pool_label="original")

    max_k = min(ks[-1], pool_size)
    hits = {k: 0 for k in ks}
    for q in sample:
        members = similar_sets[q]
        qi = scores_full.query_index(q)
        cols = [scores_full.candidate_index(c) for c in members]
        row = scores_full.scores[qi][cols]
        pos = _first_hit_position(row, members, truth_sub[q], max_k)
        if pos is not None:
            for k in ks:
                if pos < k:
                    hits[k] += 1
    recalls = {k: 100.0 * hits[k] / len(sample) for k in ks}
    similar = RetrievalReport(task, "similar", len(sample), pool_size, recalls)
    return original, similar


def compare_pools(scores: ScoreMatrix, ground_truth: dict[str, set[str]],
                  pool_a_ids, pool_b_ids, ks=(1, 5, 10), *, task: str = "t2i",
                  labels: tuple[str, str] = ("pool_a", "pool_b"),
                  ) -> tuple[RetrievalReport, RetrievalReport]:
    """Same metric under two equal-size candidate restrictions, side by side."""
    pool_a = list(pool_a_ids)
    pool_b = list(pool_b_ids)
    if len(pool_a) != len(pool_b):
        raise ValueError(
            f"pool sizes differ: {len(pool_a)} vs {len(pool_b)}"
        )
    reports = []
    for pool, label in ((pool_a, labels[0]), (pool_b, labels[1])):
        cols = [scores.candidate_index(c) for c in pool]
        restricted = ScoreMatrix(scores.query_ids, tuple(pool), scores.scores[:, cols])
        reports.append(recall_at_k(restricted, ground_truth, ks,
                                   task=task, pool_label=label))
    return reports[0], reports[1]


# ---------------------------------------------------------------------------
# Pair matching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairJudgment:
    """Model scores for an image against its correct and a wrong caption."""

    image_id: str
    score_correct: float
    score_wrong: float


def pair_match_accuracy(pairs) -> float:
    """Percentage of pairs where the correct caption scores strictly higher.

    A tie means the model failed to separate the two, so it counts as a
    miss.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no pairs to evaluate")
    correct = sum(1 for p in pairs if p.score_correct > p.score_wrong)
    return 100.0 * correct / len(pairs)


# ---------------------------------------------------------------------------
# Caption statistics
# ---------------------------------------------------------------------------

def text_stats(captions) -> TextStats:
    """Noun/adjective counts and token lengths over annotated captions.

    Length excludes terminal punctuation tokens. An empty input yields
    zero counts with averages defined as 0.
    """
    n_texts = 0
    total_nouns = 0
    total_adjs = 0
    total_length = 0
    for rec in captions:
        if not rec.annotated:
            raise CaptionError(f"caption {rec.caption_id!r} lacks token annotations")
        n_texts += 1
        total_nouns += sum(1 for t in rec.tokens if t.pos in ("NOUN", "PROPN"))
        total_adjs += sum(1 for t in rec.tokens if t.pos == "ADJ")
        length = len(rec.tokens)
        while length > 0 and rec.tokens[length - 1].pos == "PUNCT":
            length -= 1
        total_length += length
    if n_texts == 0:
        return TextStats(0, 0, 0, 0.0, 0.0, 0.0)
    return TextStats(
        n_texts, total_nouns, total_adjs,
        total_nouns / n_texts, total_adjs / n_texts, total_length / n_texts,
    )


# ---------------------------------------------------------------------------
# Report files (percentages serialized with 2 decimals)
# ---------------------------------------------------------------------------

def report_to_dict(report: RetrievalReport) -> dict:
    return {
        "task": report.task,
        "pool_label": report.pool_label,
        "n_queries": report.n_queries,
        "pool_size": report.pool_size,
        "recalls": {str(k): round(report.recalls[k], 2) for k in sorted(report.recalls)},
    }


def report_from_dict(obj: dict) -> RetrievalReport:
    return RetrievalReport(
        task=obj["task"],
        pool_label=obj["pool_label"],
        n_queries=int(obj["n_queries"]),
        pool_size=int(obj["pool_size"]),
        recalls={int(k): float(v) for k, v in obj["recalls"].items()},
    )


def write_reports(reports, path: Path | str) -> Path:
    """One report serializes as an object, several as an array."""
    path = Path(path)
    reports = list(reports)
    payload = report_to_dict(reports[0]) if len(reports) == 1 else [
        report_to_dict(r) for r in reports
    ]
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def load_reports(path: Path | str) -> list[RetrievalReport]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(obj, dict):
        return [report_from_dict(obj)]
    return [report_from_dict(o) for o in obj]


def stats_to_dict(stats: TextStats) -> dict:
    return {
        "n_texts": stats.n_texts,
        "total_nouns": stats.total_nouns,
        "total_adjs": stats.total_adjs,
        "avg_nouns": round(stats.avg_nouns, 2),
        "avg_adjs": round(stats.avg_adjs, 2),
        "avg_length": round(stats.avg_length, 2),
    }


def write_stats(stats: TextStats, path: Path | str) -> Path:
    path = Path(path)
    path.write_text(json.dumps(stats_to_dict(stats), indent=2) + "\n", encoding="utf-8")
    return path
