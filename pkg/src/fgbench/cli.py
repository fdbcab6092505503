"""Command-line interface: one subcommand per pipeline stage.

Every subcommand reads and writes the declared file formats and nothing
else, so stages compose through the filesystem and external model
backends can be swapped in between any two steps. Identical inputs and
seed produce byte-identical outputs.

Exit codes: 0 success, 1 validation or data failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import dataset, evaluate, mocks, pool, renovate, similarity


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("FGBENCH_SEED", "0"))


def _ks_arg(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse K list {text!r}")
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("every K must be a positive integer")
    if list(ks) != sorted(ks):
        raise argparse.ArgumentTypeError("K values must be sorted ascending")
    return ks


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="randomness seed (default: $FGBENCH_SEED or 0)")


def _add_scores_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scores", type=Path, help="score matrix dump")
    p.add_argument("--scores-header", type=Path,
                   help="score header sidecar (default: <scores>.json)")
    p.add_argument("--query-emb", type=Path,
                   help="query embeddings (alternative to --scores)")
    p.add_argument("--cand-emb", type=Path,
                   help="candidate embeddings (alternative to --scores)")
    p.add_argument("--threads", type=int, default=1)


def _resolve_scores(args) -> dataset.ScoreMatrix:
    if args.scores is not None:
        return similarity.load_scores(args.scores, args.scores_header)
    if args.query_emb is not None and args.cand_emb is not None:
        queries = dataset.load_embeddings(args.query_emb)
        candidates = dataset.load_embeddings(args.cand_emb)
        return similarity.cosine_scores(queries, candidates, threads=args.threads)
    args.parser.error("provide --scores or both --query-emb and --cand-emb")


def _load_truth(path: Path) -> dict[str, set[str]]:
    obj = json.loads(path.read_text(encoding="utf-8"))
    return {q: set(ids) for q, ids in obj.items()}


def _load_id_list(path: Path) -> list[str]:
    obj = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(obj, list):
        raise ValueError(f"{path}: expected a JSON array of ids")
    return [str(i) for i in obj]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    report = dataset.validate_dataset(manifest)
    if args.out:
        Path(args.out).write_text(json.dumps({
            "dataset": report.dataset,
            "n_images": report.n_images,
            "n_captions": report.n_captions,
            "issues": list(report.issues),
        }, indent=2) + "\n", encoding="utf-8")
    for issue in report.issues:
        print(issue)
    print(f"{report.dataset}: {report.n_images} images, {report.n_captions} captions, "
          f"{len(report.issues)} issue(s)")
    return 0 if report.ok else 1


def cmd_build_pool(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    aux = dataset.load_embeddings(args.aux, args.aux_ids)
    result = pool.build_similar_sets(
        manifest, aux.ids, aux,
        k_prime=args.k_prime, k_dprime=args.k_dprime,
        rrf_constant=args.rrf_constant, threads=args.threads,
    )
    pool.save_pools(result, args.out)
    print(f"{len(result.similar_sets)} similar sets -> pool of "
          f"{len(result.new_pool.ids)} images ({args.out})")
    return 0


def cmd_detect_coarse(args) -> int:
    scores = _resolve_scores(args)
    captions = dataset.load_captions(args.captions)
    targets = {rec.caption_id: rec.image_id for rec in captions}
    labels = renovate.detect_coarse(scores, targets)
    renovate.write_detection(labels, args.out)
    n_coarse = sum(1 for v in labels.values() if v == renovate.COARSE)
    print(f"{n_coarse} coarse / {len(labels) - n_coarse} fine ({args.out})")
    return 0


def cmd_make_prompts(args) -> int:
    captions = dataset.load_captions(args.captions)
    if args.labels:
        labels = renovate.load_detection(args.labels)
        captions = [c for c in captions
                    if labels.get(c.caption_id) == renovate.COARSE]
    sets = [renovate.build_prompts(c, renovate.extract_nouns(c)) for c in captions]
    by_id = {c.caption_id: c for c in captions}
    renovate.write_prompt_batch(sets, by_id, args.out)
    n_prompts = sum(len(s.prompts) for s in sets)
    print(f"{n_prompts} prompts for {len(sets)} captions ({args.out})")
    return 0


def cmd_filter(args) -> int:
    if (args.candidates is None) == (args.generations is None):
        args.parser.error("provide exactly one of --candidates or --generations")
    if args.candidates is not None:
        candidates = renovate.load_candidates(args.candidates)
    else:
        if args.captions is None:
            args.parser.error("--generations requires --captions")
        captions = dataset.load_captions(args.captions)
        generations = renovate.load_generations(args.generations)
        candidates = renovate.assemble_candidates(captions, generations)
    if args.mock_merge:
        candidates = [
            c if c.merged_text is not None
            else replace(c, merged_text=mocks.mock_merge(c.original_text, c.generated_detail))
            for c in candidates
        ]
    if args.mock_score:
        if args.image_emb is None:
            args.parser.error("--mock-score requires --image-emb")
        images = dataset.load_embeddings(args.image_emb)
        seed = _seed(args)
        originals = mocks.mock_clipscores(
            ((c.image_id, c.original_text) for c in candidates), images, seed)
        rewrites = mocks.mock_clipscores(
            ((c.image_id, c.final_text) for c in candidates), images, seed)
        candidates = [
            replace(c, clipscore_original=so, clipscore_candidate=sc)
            for c, so, sc in zip(candidates, originals, rewrites)
        ]
    kept = renovate.filter_candidates(candidates)
    renovate.write_candidates(kept, args.out)
    print(f"kept {len(kept)} of {len(candidates)} candidates ({args.out})")
    return 0


def cmd_select_best(args) -> int:
    candidates = renovate.load_candidates(args.candidates)
    captions = dataset.load_captions(args.captions)
    selections = renovate.select_renovations(candidates)
    renovated = renovate.apply_renovations(captions, selections)
    dataset.write_captions(renovated, args.out)
    changed = sum(1 for old, new in zip(captions, renovated) if old.text != new.text)
    print(f"renovated {changed} of {len(captions)} captions ({args.out})")
    return 0


def cmd_split_merge_data(args) -> int:
    captions = dataset.load_captions(args.captions)
    _, count = renovate.write_split_pairs(captions, args.out)
    print(f"{count} training pairs from {len(captions)} captions ({args.out})")
    return 0


def cmd_review_export(args) -> int:
    originals = dataset.load_captions(args.captions)
    renovated = dataset.load_captions(args.renovated)
    renovate.export_review_queue(originals, renovated, args.out)
    n = len(renovate.load_review_queue(args.out))
    print(f"{n} items queued for review ({args.out})")
    return 0


def cmd_review_apply(args) -> int:
    items = renovate.load_review_queue(args.queue)
    originals = dataset.load_captions(args.captions)
    final = renovate.apply_corrections(items, originals)
    dataset.write_captions(final, args.out)
    print(f"applied {len(items)} review decisions ({args.out})")
    return 0


def cmd_evaluate(args) -> int:
    scores = _resolve_scores(args)
    truth = _load_truth(args.truth)
    report = evaluate.recall_at_k(scores, truth, args.ks, task=args.task,
                                  pool_label=args.pool_label)
    evaluate.write_reports([report], args.out)
    recalls = " ".join(f"R@{k}={v:.2f}" for k, v in sorted(report.recalls.items()))
    print(f"{report.task} {report.pool_label}: {recalls} ({args.out})")
    return 0


def cmd_mini_test(args) -> int:
    scores = _resolve_scores(args)
    truth = _load_truth(args.truth)
    sample = _load_id_list(args.sample)
    similar = json.loads(Path(args.similar).read_text(encoding="utf-8"))
    original, restricted = evaluate.mini_test(
        scores, {q: list(ids) for q, ids in similar.items()}, sample, truth,
        args.ks, task=args.task, pool_size=args.pool_size,
    )
    evaluate.write_reports([original, restricted], args.out)
    for rep in (original, restricted):
        recalls = " ".join(f"R@{k}={v:.2f}" for k, v in sorted(rep.recalls.items()))
        print(f"{rep.pool_label}: {recalls}")
    return 0


def cmd_compare_pools(args) -> int:
    scores = _resolve_scores(args)
    truth = _load_truth(args.truth)
    pool_a = _load_id_list(args.pool_a)
    pool_b = _load_id_list(args.pool_b)
    labels = tuple(args.labels.split(",")) if args.labels else ("pool_a", "pool_b")
    if len(labels) != 2:
        args.parser.error("--labels needs exactly two comma-separated names")
    rep_a, rep_b = evaluate.compare_pools(scores, truth, pool_a, pool_b,
                                          args.ks, task=args.task, labels=labels)
    evaluate.write_reports([rep_a, rep_b], args.out)
    for rep in (rep_a, rep_b):
        recalls = " ".join(f"R@{k}={v:.2f}" for k, v in sorted(rep.recalls.items()))
        print(f"{rep.pool_label}: {recalls}")
    return 0


def cmd_pairs_eval(args) -> int:
    pairs = []
    with Path(args.pairs).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            pairs.append(evaluate.PairJudgment(
                obj["image_id"], float(obj["score_correct"]), float(obj["score_wrong"])))
    accuracy = evaluate.pair_match_accuracy(pairs)
    Path(args.out).write_text(json.dumps({
        "n_pairs": len(pairs),
        "accuracy": round(accuracy, 2),
    }, indent=2) + "\n", encoding="utf-8")
    print(f"pair-matching accuracy {accuracy:.2f} over {len(pairs)} pairs ({args.out})")
    return 0


def cmd_stats(args) -> int:
    captions = dataset.load_captions(args.captions)
    stats = evaluate.text_stats(captions)
    evaluate.write_stats(stats, args.out)
    print(f"{stats.n_texts} texts: avg nouns {stats.avg_nouns:.2f}, "
          f"avg adjs {stats.avg_adjs:.2f}, avg length {stats.avg_length:.2f} ({args.out})")
    return 0


def cmd_mock_embed(args) -> int:
    ids = dataset._read_id_lines(Path(args.ids))
    matrix = mocks.hash_embeddings(_seed(args), ids, args.dim, namespace=args.namespace)
    dataset.write_embeddings(matrix, args.out, args.out_ids)
    print(f"{matrix.rows} x {matrix.dim} embeddings ({args.out})")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fgbench",
        description="Harden an image-text retrieval benchmark: build similar-image "
                    "pools, detect and renovate coarse captions, evaluate Recall@K.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func, parser=p)
        return p

    p = add("validate", cmd_validate, "audit a dataset against its manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, help="also write the report as JSON")

    p = add("build-pool", cmd_build_pool, "build per-target similar sets and the new pool")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--aux", type=Path, required=True, help="auxiliary image embeddings")
    p.add_argument("--aux-ids", type=Path, help="auxiliary id sidecar (default: <aux>.ids)")
    p.add_argument("--k-prime", type=int, default=pool.DEFAULT_K_PRIME)
    p.add_argument("--k-dprime", type=int, default=pool.DEFAULT_K_DPRIME)
    p.add_argument("--rrf-constant", type=int, default=pool.DEFAULT_RRF_CONSTANT)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)

    p = add("detect-coarse", cmd_detect_coarse, "label captions coarse or fine")
    _add_scores_source(p)
    p.add_argument("--captions", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("make-prompts", cmd_make_prompts, "emit detail-eliciting prompt batches")
    p.add_argument("--captions", type=Path, required=True)
    p.add_argument("--labels", type=Path, help="detection labels; only coarse captions prompted")
    p.add_argument("--out", type=Path, required=True)

    p = add("filter", cmd_filter, "drop rewrites scoring below their original")
    p.add_argument("--candidates", type=Path, help="scored rewrite candidates")
    p.add_argument("--generations", type=Path,
                   help="raw generation output {caption_id, generated_detail}; "
                        "assembles candidates (requires --captions)")
    p.add_argument("--captions", type=Path, help="captions for --generations")
    p.add_argument("--mock-merge", action="store_true",
                   help="fill missing merged_text with the builtin merger")
    p.add_argument("--mock-score", action="store_true",
                   help="fill clipscores with the builtin scorer")
    p.add_argument("--image-emb", type=Path, help="image embeddings for --mock-score")
    _add_seed(p)
    p.add_argument("--out", type=Path, required=True)

    p = add("select-best", cmd_select_best, "pick each caption's best surviving rewrite")
    p.add_argument("--candidates", type=Path, required=True)
    p.add_argument("--captions", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("split-merge-data", cmd_split_merge_data,
            "split annotated captions into merger training pairs")
    p.add_argument("--captions", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    review = add("review", lambda args: 2, "manual review queue")
    review_sub = review.add_subparsers(dest="review_command", required=True)
    p = review_sub.add_parser("export", help="queue changed captions for review")
    p.set_defaults(func=cmd_review_export, parser=p)
    p.add_argument("--captions", type=Path, required=True, help="original captions")
    p.add_argument("--renovated", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p = review_sub.add_parser("apply", help="apply resolved review decisions")
    p.set_defaults(func=cmd_review_apply, parser=p)
    p.add_argument("--queue", type=Path, required=True)
    p.add_argument("--captions", type=Path, required=True, help="original captions")
    p.add_argument("--out", type=Path, required=True)

    p = add("evaluate", cmd_evaluate, "Recall@K report")
    _add_scores_source(p)
    p.add_argument("--truth", type=Path, required=True,
                   help="JSON map query id -> list of true candidate ids")
    p.add_argument("--task", choices=evaluate.TASKS, required=True)
    p.add_argument("--ks", type=_ks_arg, default=(1, 5, 10))
    p.add_argument("--pool-label", default="full")
    p.add_argument("--out", type=Path, required=True)

    p = add("mini-test", cmd_mini_test, "full-pool vs per-query similar-pool reports")
    _add_scores_source(p)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--sample", type=Path, required=True, help="JSON array of query ids")
    p.add_argument("--similar", type=Path, required=True,
                   help="JSON map query id -> candidate id list")
    p.add_argument("--pool-size", type=int, default=100)
    p.add_argument("--task", choices=evaluate.TASKS, default="t2i")
    p.add_argument("--ks", type=_ks_arg, default=(1, 5, 10))
    p.add_argument("--out", type=Path, required=True)

    p = add("compare-pools", cmd_compare_pools, "same metric under two candidate pools")
    _add_scores_source(p)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--pool-a", type=Path, required=True, help="JSON array of ids")
    p.add_argument("--pool-b", type=Path, required=True, help="JSON array of ids")
    p.add_argument("--labels", help="two comma-separated report labels")
    p.add_argument("--task", choices=evaluate.TASKS, default="t2i")
    p.add_argument("--ks", type=_ks_arg, default=(1, 5, 10))
    p.add_argument("--out", type=Path, required=True)

    p = add("pairs-eval", cmd_pairs_eval, "correct-vs-wrong caption matching accuracy")
    p.add_argument("--pairs", type=Path, required=True,
                   help="JSONL {image_id, score_correct, score_wrong}")
    p.add_argument("--out", type=Path, required=True)

    p = add("stats", cmd_stats, "noun/adjective/length statistics")
    p.add_argument("--captions", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("mock-embed", cmd_mock_embed, "deterministic seeded embeddings for fixtures")
    p.add_argument("--ids", type=Path, required=True, help="one id per line")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--namespace", default="")
    _add_seed(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--out-ids", type=Path, help="id sidecar (default: <out>.ids)")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
