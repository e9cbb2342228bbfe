import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from albench.corpus import Token, build_corpus
from albench.unsup import (
    PAD_TOKEN,
    assign_cluster,
    assign_clusters,
    bigram_vector,
    compose_span_vector,
    default_unsup_config,
    emit_unsup_features,
    kmeans,
)
from albench.vectors import EmbeddingTable, LexicalTable, SkipgramParams, lexical_vector, normalize


def make_embeddings(tokens, dim=6, seed=0):
    rng = np.random.default_rng(seed)
    return EmbeddingTable({t: rng.normal(size=dim) for t in tokens}, dim, SkipgramParams(dim=dim))


class TestComposeSpanVector:
    def test_single_in_vocab_token(self):
        emb = make_embeddings(["head"])
        lex = LexicalTable(dim_lex=8, seed=1)
        vec = compose_span_vector(["head"], emb, lex)
        assert np.allclose(vec.lex_part, lexical_vector("head", lex))
        assert np.allclose(vec.word_part, normalize(emb["head"]))
        assert abs(np.linalg.norm(vec.combined) - 1.0) <= 1e-9

    def test_all_oov_span_has_zero_word_part(self):
        emb = make_embeddings(["other"])
        lex = LexicalTable(dim_lex=8, seed=1)
        vec = compose_span_vector(["aa", "bb"], emb, lex)
        assert np.array_equal(vec.word_part, np.zeros(emb.dim))
        assert abs(np.linalg.norm(vec.combined) - 1.0) <= 1e-9

    def test_order_free(self):
        emb = make_embeddings(["a", "b", "c"])
        lex = LexicalTable(dim_lex=8, seed=1)
        fwd = compose_span_vector(["a", "b", "c"], emb, lex)
        rev = compose_span_vector(["c", "a", "b"], emb, lex)
        assert np.allclose(fwd.combined, rev.combined)

    def test_combined_is_normalized_concat(self):
        emb = make_embeddings(["a", "b"])
        lex = LexicalTable(dim_lex=8, seed=1)
        vec = compose_span_vector(["a", "b"], emb, lex)
        assert np.allclose(vec.combined, normalize(np.concatenate([vec.lex_part, vec.word_part])))

    def test_empty_span_rejected(self):
        emb = make_embeddings(["a"])
        with pytest.raises(ValueError):
            compose_span_vector([], emb, LexicalTable(dim_lex=8))

    @given(st.lists(st.text(alphabet="abcdxy", min_size=1, max_size=6), min_size=1, max_size=5))
    @settings(max_examples=50)
    def test_fuzzed_spans_unit_norm(self, tokens):
        emb = make_embeddings(["abcd", "xy"])
        lex = LexicalTable(dim_lex=8, seed=2)
        vec = compose_span_vector(tokens, emb, lex)
        assert abs(np.linalg.norm(vec.combined) - 1.0) <= 1e-9
        assert abs(np.linalg.norm(vec.lex_part) - 1.0) <= 1e-9
        word_norm = np.linalg.norm(vec.word_part)
        assert word_norm == 0.0 or abs(word_norm - 1.0) <= 1e-9


class TestKmeans:
    def test_k_equals_n_distinct_gives_zero_objective(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(6, 3))
        book = kmeans(x, k=6, seed=1)
        assert book.objective_trace[-1] == pytest.approx(0.0, abs=1e-18)
        assigned = sorted(assign_cluster(v, book) for v in x)
        assert assigned == list(range(6))

    def test_two_blobs_recovered(self):
        rng = np.random.default_rng(3)
        blob_a = rng.normal(loc=(0.0, 0.0), scale=0.05, size=(10, 2))
        blob_b = rng.normal(loc=(5.0, 5.0), scale=0.05, size=(10, 2))
        x = np.vstack([blob_a, blob_b])
        book = kmeans(x, k=2, seed=4)
        assign = assign_clusters(x, book)
        assert len(set(assign[:10])) == 1 and len(set(assign[10:])) == 1
        assert assign[0] != assign[10]
        # blob partition beats the interleaved alternative on the k-means objective
        def objective(groups):
            total = 0.0
            for g in groups:
                centroid = g.mean(axis=0)
                total += ((g - centroid) ** 2).sum()
            return total
        blob_obj = objective([blob_a, blob_b])
        mixed_obj = objective([x[::2], x[1::2]])
        assert blob_obj < mixed_obj
        assert book.objective_trace[-1] == pytest.approx(blob_obj, rel=1e-9)

    def test_too_few_distinct_vectors(self):
        x = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="distinct"):
            kmeans(x, k=3, seed=0)

    def test_objective_trace_non_increasing_random(self):
        rng = np.random.default_rng(11)
        for trial in range(50):
            n = int(rng.integers(8, 40))
            dim = int(rng.integers(2, 6))
            k = int(rng.integers(1, 5))
            x = rng.normal(size=(n, dim))
            book = kmeans(x, k=min(k, n), seed=trial)
            trace = book.objective_trace
            assert all(trace[i + 1] <= trace[i] + 1e-9 for i in range(len(trace) - 1))

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(30, 4))
        one = kmeans(x, k=4, seed=9)
        two = kmeans(x, k=4, seed=9)
        assert np.array_equal(one.centroids, two.centroids)

    def test_save_load_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        book = kmeans(rng.normal(size=(12, 3)), k=3, seed=2, space_tag="word")
        path = tmp_path / "cb.txt"
        book.save(str(path))
        loaded = book.load(str(path))
        assert np.array_equal(loaded.centroids, book.centroids)
        assert (loaded.k, loaded.space_tag, loaded.seed) == (3, "word", 2)


class TestAssignCluster:
    def test_exact_centroid(self):
        book = kmeans(np.eye(5), k=5, seed=0)
        target = book.centroids[3]
        assert assign_cluster(target, book) == 3

    def test_tie_breaks_low_index(self):
        from albench.unsup import Codebook

        centroids = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]])
        book = Codebook(centroids, 5, "generic", 0)
        # equidistant from centroids 1 and 4 (identical), 1 wins
        assert assign_cluster(np.array([1.0, 0.0]), book) in (1,)

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(8)
        book = kmeans(rng.normal(size=(25, 4)), k=5, seed=3)
        for _ in range(50):
            v = rng.normal(size=4)
            brute = min(range(book.k), key=lambda c: float(((book.centroids[c] - v) ** 2).sum()))
            assert assign_cluster(v, book) == brute

    def test_dimension_mismatch(self):
        book = kmeans(np.eye(3), k=2, seed=0)
        with pytest.raises(ValueError, match="dimension"):
            assign_cluster(np.zeros(5), book)


def tiny_pipeline():
    tokens = ["alpha", "beta", "gamma", "delta"]
    emb = make_embeddings(tokens, dim=5, seed=4)
    lex = LexicalTable(dim_lex=6, seed=5)
    cfg = default_unsup_config("DGHJKLM", {l: 2 for l in "DGHJKLM"})
    rng = np.random.default_rng(7)
    spaces = {
        "word": np.array([normalize(emb[t]) for t in tokens]),
        "lexical": np.array([lex.token_vector(t) for t in tokens]),
        "bigram": np.array(
            [bigram_vector(a, b, emb, lex) for a, b in [("alpha", "beta"), ("beta", "gamma"), ("gamma", "delta"), ("delta", "alpha")]]
        ),
        "sentence": rng.normal(size=(4, emb.dim + lex.dim_lex)),
    }
    books = {
        cb_id: kmeans(spaces[space], k, seed=1, space_tag=space)
        for cb_id, (space, k) in cfg.required_codebooks().items()
    }
    return emb, lex, cfg, books


def sentence_of(words):
    return build_corpus([[Token.make(w) for w in words]]).sentences[0]


class TestEmitUnsupFeatures:
    def test_window_offsets(self):
        emb, lex, cfg, books = tiny_pipeline()
        sent = sentence_of(["alpha", "beta"])
        feats = emit_unsup_features(sent, emb, lex, books, cfg, window=1)
        d_book = books[cfg.groups["D"].codebook_id]
        cid0 = assign_cluster(normalize(emb["alpha"]), d_book)
        assert f"D@0=c{cid0}" in feats[0]
        assert f"D@-1=c{cid0}" in feats[1]

    def test_sentence_groups_on_every_token(self):
        emb, lex, cfg, books = tiny_pipeline()
        sent = sentence_of(["alpha", "beta", "gamma"])
        feats = emit_unsup_features(sent, emb, lex, books, cfg, window=1)
        l_book = books[cfg.groups["L"].codebook_id]
        sent_vec = compose_span_vector([t.embedding_form for t in sent.tokens], emb, lex).combined
        expected = f"L=c{assign_cluster(sent_vec, l_book)}"
        assert all(expected in f for f in feats)

    def test_bigram_boundaries_use_pad(self):
        emb, lex, cfg, books = tiny_pipeline()
        sent = sentence_of(["alpha", "beta"])
        feats = emit_unsup_features(sent, emb, lex, books, cfg, window=1)
        bigram_book = books[cfg.groups["J"].codebook_id]
        k_first = assign_cluster(bigram_vector("alpha", "beta", emb, lex), bigram_book)
        j_first = assign_cluster(bigram_vector(PAD_TOKEN, "alpha", emb, lex), bigram_book)
        assert f"K=c{k_first}" in feats[0]
        assert f"J=c{j_first}" in feats[0]

    def test_real_pair_matches_compose(self):
        emb, lex, _, _ = tiny_pipeline()
        direct = compose_span_vector(["alpha", "beta"], emb, lex).combined
        assert np.allclose(bigram_vector("alpha", "beta", emb, lex), direct)

    def test_oov_tokens_skip_word_groups(self):
        emb, lex, cfg, books = tiny_pipeline()
        sent = sentence_of(["zzzz"])
        feats = emit_unsup_features(sent, emb, lex, books, cfg, window=0)
        assert not any(s.startswith(("D@", "G@")) for s in feats[0])
        assert any(s.startswith("H@") for s in feats[0])

    def test_namespaced_by_letter_and_pure(self):
        emb, lex, cfg, books = tiny_pipeline()
        sent = sentence_of(["alpha", "beta", "gamma"])
        once = emit_unsup_features(sent, emb, lex, books, cfg, window=1)
        twice = emit_unsup_features(sent, emb, lex, books, cfg, window=1)
        assert once == twice
        for token_feats in once:
            assert all(s[0] in "DGHJKLM" for s in token_feats)

    def test_enabling_group_is_additive(self):
        emb, lex, _, books = tiny_pipeline()
        sent = sentence_of(["alpha", "beta"])
        small = default_unsup_config("D", {"D": 2})
        larger = default_unsup_config("DL", {"D": 2, "L": 2})
        base = emit_unsup_features(sent, emb, lex, books, small, window=1)
        more = emit_unsup_features(sent, emb, lex, books, larger, window=1)
        for b, m in zip(base, more):
            assert b <= m
            assert all(s.startswith("L") for s in m - b)

    def test_missing_codebook_errors(self):
        emb, lex, cfg, books = tiny_pipeline()
        sent = sentence_of(["alpha"])
        missing = {k: v for k, v in books.items() if not k.startswith("word")}
        with pytest.raises(ValueError, match="missing codebook"):
            emit_unsup_features(sent, emb, lex, missing, cfg, window=1)

    def test_unknown_letter_rejected(self):
        with pytest.raises(ValueError, match="unknown unsupervised"):
            default_unsup_config("E")
