"""Similar-set construction and pool assembly contracts."""

from __future__ import annotations

import json
import logging

import numpy as np
import pytest

from fgbench.dataset import EmbeddingMatrix, load_embeddings, load_manifest
from fgbench.mocks import hash_embeddings, hash_vector
from fgbench.pool import (
    NewPool,
    SimilarSet,
    assemble_pool,
    build_similar_sets,
    fuse_similar_sets,
    image_similar_set,
    load_pools,
    prepare_candidates,
    save_pools,
    text_similar_set,
)
from fgbench.similarity import RankedEntry, RankedList
from fgbench.synthetic import make_planted_fixture

from conftest import write_dataset


def cosine_oracle(query, rows):
    """Descending cosine order by (-score, index), full sort in float64."""
    q = np.asarray(query, dtype=np.float64)
    q = q / np.linalg.norm(q)
    r = np.asarray(rows, dtype=np.float64)
    r = r / np.linalg.norm(r, axis=1)[:, None]
    scores = r @ q
    return sorted(range(len(scores)), key=lambda j: (-scores[j], j)), scores


@pytest.fixture
def small_pool(tmp_path):
    manifest = load_manifest(write_dataset(tmp_path, n_images=4, dim=8))
    aux = hash_embeddings(2, [f"aux{i}" for i in range(30)], 8, namespace="image")
    return manifest, aux, prepare_candidates(manifest, aux.ids, aux)


class TestPrepareCandidates:
    def test_tags_and_order(self, tmp_path):
        manifest = load_manifest(write_dataset(tmp_path, n_images=2, dim=8))
        aux = hash_embeddings(2, ["c", "d"], 8)
        pool = prepare_candidates(manifest, aux.ids, aux)
        assert pool.ids == ("img0", "img1", "c", "d")
        assert [pool.source_tags[i] for i in pool.ids] == [
            "original", "original", "auxiliary", "auxiliary"]
        assert pool.old_pool_ids == {"img0", "img1"}

    def test_excluded_auxiliary_named(self, tmp_path):
        manifest = load_manifest(write_dataset(tmp_path, n_images=2, dim=8,
                                               exclusion=("t17",)))
        aux = hash_embeddings(2, ["c", "t17"], 8)
        with pytest.raises(ValueError, match="t17"):
            prepare_candidates(manifest, aux.ids, aux)

    def test_duplicate_auxiliary_ids_dropped(self, tmp_path):
        manifest = load_manifest(write_dataset(tmp_path, n_images=2, dim=8))
        aux = hash_embeddings(2, ["img1", "c", "c2"], 8)
        pool = prepare_candidates(manifest, ["img1", "c", "c", "c2"], aux)
        assert pool.ids == ("img0", "img1", "c", "c2")
        # The original pool's embedding wins over an auxiliary duplicate.
        np.testing.assert_array_equal(
            pool.embeddings.row("img1"),
            load_embeddings(manifest.image_embeddings_path).row("img1"))

    def test_dim_mismatch(self, tmp_path):
        manifest = load_manifest(write_dataset(tmp_path, n_images=2, dim=8))
        aux = hash_embeddings(2, ["c"], 16)
        with pytest.raises(ValueError, match="8-d.*16-d"):
            prepare_candidates(manifest, aux.ids, aux)

    def test_small_auxiliary_warns(self, tmp_path, caplog):
        manifest = load_manifest(write_dataset(tmp_path, n_images=3, dim=8))
        aux = hash_embeddings(2, ["c"], 8)
        with caplog.at_level(logging.WARNING, logger="fgbench.pool"):
            prepare_candidates(manifest, aux.ids, aux)
        assert any("smaller than the original pool" in r.message for r in caplog.records)

    def test_zero_embedding_rejected(self, tmp_path):
        manifest = load_manifest(write_dataset(tmp_path, n_images=2, dim=8))
        aux = EmbeddingMatrix(("c",), np.zeros((1, 8), dtype=np.float32))
        with pytest.raises(ValueError, match="'c'"):
            prepare_candidates(manifest, aux.ids, aux)


class TestImageSimilarSet:
    def test_duplicate_embedding_ranks_first(self, tmp_path):
        manifest = load_manifest(write_dataset(tmp_path, n_images=2, dim=8))
        target_row = load_embeddings(manifest.image_embeddings_path).row("img0")
        aux = EmbeddingMatrix(
            ("dup", "other"),
            np.vstack([target_row, hash_vector(9, "other", 8)]))
        pool = prepare_candidates(manifest, aux.ids, aux)
        ranked = image_similar_set("img0", pool, 3)
        assert ranked.entries[0].candidate_id == "dup"
        assert ranked.entries[0].score == pytest.approx(1.0, abs=1e-6)
        assert all(e.candidate_id != "img0" for e in ranked.entries)

    def test_large_k_returns_all_non_target(self, small_pool):
        _, _, pool = small_pool
        ranked = image_similar_set("img0", pool, 1000)
        assert len(ranked.entries) == len(pool.ids) - 1

    def test_matches_full_sort_oracle(self, tmp_path):
        manifest = load_manifest(write_dataset(tmp_path, n_images=1, dim=16))
        aux = hash_embeddings(5, [f"aux{i}" for i in range(2000)], 16, namespace="image")
        pool = prepare_candidates(manifest, aux.ids, aux)
        ranked = image_similar_set("img0", pool, 30)
        order, scores = cosine_oracle(pool.embeddings.row("img0"), pool.embeddings.values)
        expected = [j for j in order if pool.ids[j] != "img0"][:30]
        assert [e.candidate_id for e in ranked.entries] == [pool.ids[j] for j in expected]
        got = np.array([e.score for e in ranked.entries])
        np.testing.assert_allclose(got, scores[expected], atol=1e-12)


class TestTextSimilarSet:
    def test_single_caption_equals_plain_topk(self, small_pool, tmp_path):
        manifest, _, pool = small_pool
        texts = load_embeddings(manifest.text_embeddings_path)
        cid = "img0_c0"
        ranked = text_similar_set("img0", [cid], texts, pool, 5)
        order, _ = cosine_oracle(texts.row(cid), pool.embeddings.values)
        expected = [pool.ids[j] for j in order if pool.ids[j] != "img0"][:5]
        assert [e.candidate_id for e in ranked.entries] == expected

    def test_max_aggregation_over_captions(self, small_pool):
        manifest, _, pool = small_pool
        # cap2 is nearly parallel to candidate aux0, cap1 is not.
        aux0 = pool.embeddings.row("aux0").astype(np.float64)
        cap1 = hash_vector(33, "cap1", 8).astype(np.float64)
        texts = EmbeddingMatrix(("cap1", "cap2"),
                                np.vstack([cap1, aux0]).astype(np.float32))
        ranked = text_similar_set("img0", ["cap1", "cap2"], texts, pool, 3)
        scores = {e.candidate_id: e.score for e in ranked.entries}
        assert ranked.entries[0].candidate_id == "aux0"
        assert scores["aux0"] == pytest.approx(1.0, abs=1e-6)

    def test_five_captions_match_max_then_sort_oracle(self, small_pool):
        manifest, _, pool = small_pool
        cap_ids = [f"cap{i}" for i in range(5)]
        texts = hash_embeddings(44, cap_ids, 8, namespace="text")
        ranked = text_similar_set("img1", cap_ids, texts, pool, 10)

        cap = texts.values.astype(np.float64)
        cap /= np.linalg.norm(cap, axis=1)[:, None]
        rows = pool.embeddings.values.astype(np.float64)
        rows /= np.linalg.norm(rows, axis=1)[:, None]
        fused = (rows @ cap.T).max(axis=1)
        order = sorted(range(len(fused)), key=lambda j: (-fused[j], j))
        expected = [pool.ids[j] for j in order if pool.ids[j] != "img1"][:10]
        assert [e.candidate_id for e in ranked.entries] == expected

    def test_missing_text_embedding_named(self, small_pool):
        manifest, _, pool = small_pool
        texts = hash_embeddings(1, ["present"], 8)
        with pytest.raises(ValueError, match="'ghost'"):
            text_similar_set("img0", ["present", "ghost"], texts, pool, 3)


def ranked(query_id, ids, start_score=1.0):
    entries = tuple(
        RankedEntry(cid, start_score - 0.01 * i) for i, cid in enumerate(ids))
    return RankedList(query_id, entries, len(ids))


class TestFusion:
    def test_agreement_preserves_order(self, small_pool):
        _, _, pool = small_pool
        ids = [f"aux{i}" for i in range(12)]
        s = fuse_similar_sets(ranked("img0", ids), ranked("img0", ids), "img0", pool)
        assert s.member_ids == ("img0",) + tuple(ids[:9])

    def test_hand_computed_rrf(self, small_pool):
        _, _, pool = small_pool
        # c appears only in s' at rank 1: 1/61. d sits at rank 5 in both:
        # 2/65. Double presence beats a single first place.
        s_prime = ranked("img0", ["aux1", "aux2", "aux3", "aux4", "aux5",
                                  "aux6", "aux7", "aux8", "aux9"])
        s_dprime = ranked("img0", ["aux10", "aux11", "aux12", "aux13", "aux5",
                                   "aux14", "aux15", "aux16", "aux17"])
        fused = fuse_similar_sets(s_prime, s_dprime, "img0", pool)
        rrf_c = fused.fusion_scores["aux1"]
        rrf_d = fused.fusion_scores["aux5"]
        assert rrf_c == pytest.approx(1 / 61)
        assert rrf_d == pytest.approx(1 / 65 + 1 / 65)
        assert fused.member_ids.index("aux5") < fused.member_ids.index("aux1")

    def test_score_ties_break_by_pool_index(self, small_pool):
        _, _, pool = small_pool
        # aux9 and aux2 each appear once at rank 1; equal RRF, lower pool
        # index (aux2) must come first.
        s_prime = ranked("img0", ["aux9", "aux1", "aux3", "aux4", "aux5"])
        s_dprime = ranked("img0", ["aux2", "aux6", "aux7", "aux8", "aux10"])
        fused = fuse_similar_sets(s_prime, s_dprime, "img0", pool)
        assert fused.member_ids.index("aux2") < fused.member_ids.index("aux9")

    def test_too_few_candidates(self, small_pool):
        _, _, pool = small_pool
        s_prime = ranked("img0", ["aux1", "aux2", "aux3", "aux4"])
        s_dprime = ranked("img0", ["aux5", "aux6", "aux7", "aux8"])
        with pytest.raises(ValueError, match="only 8"):
            fuse_similar_sets(s_prime, s_dprime, "img0", pool)

    def test_lists_must_exclude_target(self, small_pool):
        _, _, pool = small_pool
        s_prime = ranked("img0", ["img0"] + [f"aux{i}" for i in range(9)])
        s_dprime = ranked("img0", [f"aux{i}" for i in range(9)])
        with pytest.raises(ValueError, match="exclude the target"):
            fuse_similar_sets(s_prime, s_dprime, "img0", pool)


class TestSimilarSetInvariants:
    def test_size_enforced(self):
        with pytest.raises(ValueError, match="expected 10"):
            SimilarSet("t", ("t", "a"), {"a": 1.0})

    def test_target_first(self):
        members = tuple(f"m{i}" for i in range(10))
        with pytest.raises(ValueError, match="first member"):
            SimilarSet("t", members, {})

    def test_duplicates_rejected(self):
        members = ("t",) + tuple(f"m{i}" for i in range(8)) + ("m0",)
        with pytest.raises(ValueError, match="duplicates"):
            SimilarSet("t", members, {})


def make_set(target, others):
    return SimilarSet(target, (target,) + tuple(others),
                      {o: 1.0 for o in others})


class TestAssemblePool:
    def test_disjoint_sets_concatenate(self):
        s1 = make_set("t1", [f"a{i}" for i in range(9)])
        s2 = make_set("t2", [f"b{i}" for i in range(9)])
        merged = assemble_pool([s1, s2])
        assert len(merged.ids) == 20
        assert merged.provenance["a3"] == ("t1",)

    def test_shared_members_deduplicated_with_provenance(self):
        shared = ["s0", "s1", "s2"]
        s1 = make_set("t1", shared + [f"a{i}" for i in range(6)])
        s2 = make_set("t2", shared + [f"b{i}" for i in range(6)])
        merged = assemble_pool([s1, s2])
        assert len(merged.ids) == 17
        for sid in shared:
            assert merged.provenance[sid] == ("t1", "t2")

    def test_targets_always_members(self):
        sets = [make_set(f"t{i}", [f"t{i}x{j}" for j in range(9)]) for i in range(5)]
        merged = assemble_pool(sets)
        assert {s.target_id for s in sets} <= set(merged.ids)
        assert len(merged.ids) <= 10 * len(sets)


class TestBuildSimilarSets:
    def test_planted_cluster_recovery(self, tmp_path):
        fx = make_planted_fixture(tmp_path / "fx", seed=3, n_targets=15,
                                  n_planted=9, n_distractors=150, dim=24)
        aux = load_embeddings(fx.aux_path)
        result = build_similar_sets(fx.manifest, aux.ids, aux)
        assert len(result.similar_sets) == 15
        for s in result.similar_sets:
            assert s.member_ids[0] == s.target_id
            assert set(s.member_ids[1:]) == set(fx.planted[s.target_id])
        assert set(fx.target_ids) <= set(result.new_pool.ids)
        assert len(result.new_pool.ids) == len(set(result.new_pool.ids))

    def test_thread_counts_agree_and_json_roundtrips(self, tmp_path):
        fx = make_planted_fixture(tmp_path / "fx", seed=5, n_targets=12,
                                  n_planted=9, n_distractors=100, dim=16)
        aux = load_embeddings(fx.aux_path)
        outputs = []
        for t in (1, 4):
            result = build_similar_sets(fx.manifest, aux.ids, aux, threads=t)
            path = tmp_path / f"pools{t}.json"
            save_pools(result, path)
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1]

        sets, new_pool = load_pools(tmp_path / "pools1.json")
        obj = json.loads(outputs[0].decode())
        assert [s.target_id for s in sets] == [t["target_id"] for t in obj["targets"]]
        assert isinstance(new_pool, NewPool)

    def test_target_without_captions_rejected(self, tmp_path):
        fx = make_planted_fixture(tmp_path / "fx", seed=6, n_targets=3,
                                  n_planted=9, n_distractors=30, dim=16)
        captions = fx.manifest.captions_path.read_text().splitlines()
        fx.manifest.captions_path.write_text(
            "\n".join(l for l in captions if '"img0000"' not in l) + "\n")
        aux = load_embeddings(fx.aux_path)
        with pytest.raises(ValueError, match="img0000.*no captions"):
            build_similar_sets(fx.manifest, aux.ids, aux)
