"""Toolkit for hardening image-text retrieval benchmarks.

Three capabilities, composable via files or this API: build similar-image
candidate pools that make retrieval genuinely hard, detect and renovate
coarse captions into fine-grained ones, and evaluate Recall@K under the
resulting pools.
"""

from .dataset import (
    CaptionError,
    CaptionRecord,
    EmbeddingMatrix,
    EmbeddingFormatError,
    Manifest,
    ManifestError,
    ScoreMatrix,
    Token,
    ValidationReport,
    load_captions,
    load_embeddings,
    load_manifest,
    validate_dataset,
    write_captions,
    write_embeddings,
    write_manifest,
)
from .evaluate import (
    PairJudgment,
    RetrievalReport,
    TextStats,
    compare_pools,
    mini_test,
    pair_match_accuracy,
    recall_at_k,
    text_stats,
)
from .pool import (
    CandidatePool,
    NewPool,
    SimilarSet,
    assemble_pool,
    build_similar_sets,
    fuse_similar_sets,
    image_similar_set,
    prepare_candidates,
    text_similar_set,
)
from .renovate import (
    PromptSet,
    RenovationCandidate,
    ReviewItem,
    apply_corrections,
    build_prompts,
    detect_coarse,
    export_review_queue,
    extract_nouns,
    filter_candidates,
    select_best,
    split_for_merge_training,
)
from .similarity import (
    RankedEntry,
    RankedList,
    cosine_scores,
    l2_normalize,
    rank_of_target,
    topk,
)

__version__ = "0.1.0"
