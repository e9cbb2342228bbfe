import numpy as np
import pytest

from albench import alloop, crf
from albench.corpus import Token, build_corpus, count_units
from albench.featgen import FeatureGroupConfig, assemble
from albench.synth import SynthConfig, generate


def tiny_handles(n_train=36, n_test=16, seed=5):
    bundle = generate(SynthConfig(
        seed=seed, n_train=n_train, n_test=n_test, n_embed=1,
        background_vocab=30, concept_vocab=30, trigger_vocab=8, post_vocab=8,
        min_len=4, max_len=7,
    ))
    cfg = FeatureGroupConfig(letters=frozenset("A"), window=1)
    featurize = lambda s: assemble(s, cfg)
    handles = alloop.PipelineHandles(
        train=bundle.train,
        test=bundle.test,
        featurize=featurize,
        crf_config=crf.CrfTrainConfig(max_iterations=60),
    )
    return bundle, handles


class TestInitSplit:
    def corpus_of(self, n):
        return build_corpus([[Token.make(f"w{i}", None, "O")] for i in range(n)])

    def test_fraction_arithmetic(self):
        state = alloop.init_split(self.corpus_of(1000), 0.005, seed=1)
        assert len(state.labeled_ids) == 5
        assert len(state.pool_ids) == 995

    def test_minimum_of_one(self):
        state = alloop.init_split(self.corpus_of(10), 0.005, seed=1)
        assert len(state.labeled_ids) == 1

    def test_same_seed_same_split(self):
        a = alloop.init_split(self.corpus_of(50), 0.008, seed=9)
        b = alloop.init_split(self.corpus_of(50), 0.008, seed=9)
        assert a.labeled_ids == b.labeled_ids and a.pool_ids == b.pool_ids

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            alloop.init_split(self.corpus_of(10), 0.02, seed=0)
        with pytest.raises(ValueError):
            alloop.init_split(self.corpus_of(10), 0.0, seed=0)

    def test_partition(self):
        state = alloop.init_split(self.corpus_of(40), 0.009, seed=3)
        assert set(state.labeled_ids) | state.pool_ids == set(range(40))
        assert set(state.labeled_ids) & state.pool_ids == set()


class TestAnnotationRate:
    def test_percentage(self):
        assert alloop.annotation_rate(24, 100) == 24.0
        assert round(alloop.annotation_rate(24, 100)) == 24

    def test_all_used(self):
        assert alloop.annotation_rate(30673, 30673) == 100.0

    def test_zero_total_rejected(self):
        with pytest.raises(ValueError):
            alloop.annotation_rate(0, 0)

    def test_bounds_checked(self):
        with pytest.raises(ValueError):
            alloop.annotation_rate(5, 4)


class TestRunIteration:
    def test_pool_drains_and_counts_increase(self):
        bundle, handles = tiny_handles()
        state = alloop.init_split(bundle.train, 0.009, seed=2)  # very small initial set
        alloop.bootstrap(state, handles)
        before_ids = list(state.labeled_ids)
        pool_before = set(state.pool_ids)
        state = alloop.run_iteration(state, "lc", 4, handles)
        moved = [i for i in state.labeled_ids if i not in before_ids]
        assert len(moved) == 4
        assert set(moved) <= pool_before
        assert set(state.labeled_ids) | state.pool_ids == set(range(len(bundle.train.sentences)))
        assert set(state.labeled_ids) & state.pool_ids == set()
        batch_units = count_units(bundle.train.subset(moved))
        prev, cur = state.history[-2], state.history[-1]
        assert (cur.seqs_used - prev.seqs_used, cur.tokens_used - prev.tokens_used,
                cur.concepts_used - prev.concepts_used) == batch_units

    def test_batch_equal_to_pool_empties_it(self):
        bundle, handles = tiny_handles(n_train=12)
        state = alloop.init_split(bundle.train, 0.009, seed=2)
        alloop.bootstrap(state, handles)
        state = alloop.run_iteration(state, "lc", len(state.pool_ids), handles)
        assert state.pool_ids == set()

    def test_requires_bootstrap(self):
        bundle, handles = tiny_handles(n_train=12)
        state = alloop.init_split(bundle.train, 0.009, seed=2)
        with pytest.raises(ValueError, match="model"):
            alloop.run_iteration(state, "lc", 2, handles)


class TestRunUntil:
    def test_zero_target_reached_immediately(self):
        bundle, handles = tiny_handles()
        state = alloop.init_split(bundle.train, 0.009, seed=4)
        state, rates = alloop.run_until(state, 0.0, "lc", 4, handles)
        assert rates.reached and state.iteration == 0
        total = bundle.train.totals
        used = count_units(bundle.train.subset(state.labeled_ids))
        assert rates.sar == pytest.approx(100.0 * used[0] / total[0])
        assert rates.tar == pytest.approx(100.0 * used[1] / total[1])

    def test_unreachable_target_exhausts_pool(self):
        bundle, handles = tiny_handles(n_train=14, n_test=8)
        state = alloop.init_split(bundle.train, 0.009, seed=4)
        state, rates = alloop.run_until(state, 1.1, "rs", 5, handles)
        assert state.pool_ids == set()
        assert not rates.reached
        assert (rates.sar, rates.tar, rates.car) == (100.0, 100.0, 100.0)

    def test_replayable_history(self):
        bundle, handles_a = tiny_handles(n_train=20, n_test=10)
        _, handles_b = tiny_handles(n_train=20, n_test=10)
        state_a = alloop.init_split(bundle.train, 0.009, seed=11)
        state_b = alloop.init_split(bundle.train, 0.009, seed=11)
        state_a, _ = alloop.run_until(state_a, 1.1, "rs", 4, handles_a, max_iterations=3)
        state_b, _ = alloop.run_until(state_b, 1.1, "rs", 4, handles_b, max_iterations=3)
        assert state_a.history == state_b.history
        assert state_a.labeled_ids == state_b.labeled_ids

    def test_history_units_nondecreasing(self):
        bundle, handles = tiny_handles(n_train=20, n_test=10)
        state = alloop.init_split(bundle.train, 0.009, seed=1)
        state, _ = alloop.run_until(state, 1.1, "lc", 3, handles, max_iterations=4)
        rows = state.history
        assert [r.iteration for r in rows] == list(range(len(rows)))
        for prev, cur in zip(rows, rows[1:]):
            assert cur.seqs_used > prev.seqs_used
            assert cur.tokens_used >= prev.tokens_used
            assert cur.concepts_used >= prev.concepts_used


def test_oracle_reveals_gold(tiny_corpus=None):
    bundle, _ = tiny_handles(n_train=6, n_test=4)
    oracle = alloop.Oracle.from_corpus(bundle.train)
    for sent in bundle.train.sentences:
        assert oracle[sent.seq_id] == sent.gold_labels
