import itertools
import json

import numpy as np
import pytest
from scipy.special import logsumexp

from albench import crf
from conftest import random_tiny_instance, random_tiny_model


def brute_force(model, feats):
    """Exhaustive path enumeration: logZ, marginals, best path, best score.

    The best path is the first maximum in lexicographic path order, which
    matches the decoder's lowest-label-index tie rule only when ties are
    absent; oracle comparisons therefore use continuous random weights.
    """
    emit = model.emission_scores(feats)
    n, n_labels = emit.shape
    start, stop, trans = model.start_weights, model.stop_weights, model.transition_weights
    paths = list(itertools.product(range(n_labels), repeat=n))
    scores = np.empty(len(paths))
    for p, path in enumerate(paths):
        s = start[path[0]] + stop[path[-1]] + emit[np.arange(n), path].sum()
        s += sum(trans[path[t], path[t + 1]] for t in range(n - 1))
        scores[p] = s
    log_z = float(logsumexp(scores))
    probs = np.exp(scores - log_z)
    marginals = np.zeros((n, n_labels))
    for p, path in enumerate(paths):
        for t, label in enumerate(path):
            marginals[t, label] += probs[p]
    best = int(np.argmax(scores))
    return log_z, marginals, [model.labels[i] for i in paths[best]], float(scores[best])


def small_dataset(rng, count=6):
    return [random_tiny_instance(rng) for _ in range(count)]


class TestForwardBackward:
    def test_single_token_marginals_are_softmax(self):
        rng = np.random.default_rng(0)
        data = [((("f0", "f1"),), ["L0"]), ((("f1",),), ["L1"])]
        model = random_tiny_model(rng, data)
        lattice = crf.forward_backward(model, [("f0", "f1")])
        scores = lattice.log_emissions[0] + lattice.log_start + lattice.log_stop
        expected = np.exp(scores - logsumexp(scores))
        assert np.allclose(lattice.marginals()[0], expected, atol=1e-12)

    def test_alpha_beta_logz_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            feats, gold = random_tiny_instance(rng)
            model = random_tiny_model(rng, [(feats, gold)])
            lattice = crf.forward_backward(model, feats)
            assert abs(lattice.logZ - lattice.logZ_from_beta) <= 1e-8

    def test_marginals_sum_to_one(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            feats, gold = random_tiny_instance(rng)
            model = random_tiny_model(rng, [(feats, gold)])
            sums = crf.forward_backward(model, feats).marginals().sum(axis=1)
            assert np.allclose(sums, 1.0, atol=1e-10)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            feats, gold = random_tiny_instance(rng, max_len=3, max_labels=3)
            model = random_tiny_model(rng, [(feats, gold)])
            lattice = crf.forward_backward(model, feats)
            log_z, marginals, _, _ = brute_force(model, feats)
            assert abs(lattice.logZ - log_z) <= 1e-10
            assert np.allclose(lattice.marginals(), marginals, atol=1e-10)

    def test_zero_weights_uniform_marginals(self):
        data = [((("f0",), ("f1",)), ["L0", "L1"])]
        model = crf.CrfModel.build(data)
        marginals = crf.forward_backward(model, data[0][0]).marginals()
        assert np.allclose(marginals, 0.5, atol=1e-12)

    def test_pairwise_marginals_match_enumeration(self):
        rng = np.random.default_rng(4)
        feats, gold = random_tiny_instance(rng, max_len=4, max_labels=3)
        while len(feats) < 2:
            feats, gold = random_tiny_instance(rng, max_len=4, max_labels=3)
        model = random_tiny_model(rng, [(feats, gold)])
        lattice = crf.forward_backward(model, feats)
        pair = lattice.pairwise_marginals()
        emit = model.emission_scores(feats)
        n, n_labels = emit.shape
        expected = np.zeros((n - 1, n_labels, n_labels))
        start, stop, trans = model.start_weights, model.stop_weights, model.transition_weights
        total = []
        for path in itertools.product(range(n_labels), repeat=n):
            s = start[path[0]] + stop[path[-1]] + emit[np.arange(n), path].sum()
            s += sum(trans[path[t], path[t + 1]] for t in range(n - 1))
            total.append((path, s))
        log_z = logsumexp([s for _, s in total])
        for path, s in total:
            for t in range(n - 1):
                expected[t, path[t], path[t + 1]] += np.exp(s - log_z)
        assert np.allclose(pair, expected, atol=1e-10)


class TestViterbi:
    def test_forced_labels(self):
        data = [((("pick0",), ("pick1",)), ["L0", "L1"]), ((("pick1",),), ["L1"])]
        model = crf.CrfModel.build(data)
        model.emission_weights[model.feature_index["pick0"], 0] = 5.0
        model.emission_weights[model.feature_index["pick1"], 1] = 5.0
        labels, _ = crf.viterbi(model, [("pick0",), ("pick1",)])
        assert labels == ["L0", "L1"]

    def test_all_zero_weights_lexicographic(self):
        data = [((("f",), ("f",), ("f",)), ["L0", "L1", "L2"])]
        model = crf.CrfModel.build(data)
        labels, score = crf.viterbi(model, data[0][0])
        assert labels == ["L0", "L0", "L0"]
        assert score == 0.0

    def test_matches_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            feats, gold = random_tiny_instance(rng, max_len=5, max_labels=4)
            model = random_tiny_model(rng, [(feats, gold)])
            labels, score = crf.viterbi(model, feats)
            _, _, best_labels, best_score = brute_force(model, feats)
            assert labels == best_labels
            assert abs(score - best_score) <= 1e-10


class TestSequenceConfidence:
    def test_dominant_path(self):
        data = [((("f",),), ["L0", "L1"][:1])]
        model = crf.CrfModel.build([((("f",),), ["L0"]), ((("f",),), ["L1"])])
        model.emission_weights[model.feature_index["f"], 0] = 50.0
        assert crf.sequence_confidence(model, [("f",)]) >= 1.0 - 1e-12

    def test_uniform_confidence(self):
        model = crf.CrfModel.build([((("f",), ("f",)), ["L0", "L1"])])
        assert crf.sequence_confidence(model, [("f",), ("f",)]) == pytest.approx(0.25, abs=1e-12)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            feats, gold = random_tiny_instance(rng)
            model = random_tiny_model(rng, [(feats, gold)])
            conf = crf.sequence_confidence(model, feats)
            log_z, _, _, best_score = brute_force(model, feats)
            assert conf == pytest.approx(np.exp(best_score - log_z), abs=1e-10)
            assert 0.0 < conf <= 1.0

    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(7)
        data = small_dataset(rng, count=12)
        model = random_tiny_model(rng, data)
        sequences = [feats for feats, _ in data]
        batched = crf.sequence_confidences(model, sequences)
        singles = np.array([crf.sequence_confidence(model, f) for f in sequences])
        assert np.allclose(batched, singles, atol=1e-12)


def fd_gradient(model, data, h=1e-6):
    base = model.weights.copy()
    grad = np.zeros_like(base)
    for i in range(len(base)):
        model.weights = base.copy()
        model.weights[i] += h
        up, _ = crf.log_likelihood_and_gradient(model, data)
        model.weights = base.copy()
        model.weights[i] -= h
        down, _ = crf.log_likelihood_and_gradient(model, data)
        grad[i] = (up - down) / (2 * h)
    model.weights = base
    return grad


class TestGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            data = [random_tiny_instance(rng) for _ in range(2)]
            model = random_tiny_model(rng, data)
            _, analytic = crf.log_likelihood_and_gradient(model, data)
            numeric = fd_gradient(model, data)
            rel = np.linalg.norm(analytic - numeric) / max(1.0, np.linalg.norm(numeric))
            assert rel < 1e-5

    def test_zero_weight_expected_counts_uniform(self):
        data = [((("f0",), ("f1",), ("f0",)), ["L0", "L1", "L2"])]
        model = crf.CrfModel.build(data)
        _, grad = crf.log_likelihood_and_gradient(model, data)
        bias_row = model.emission_weights  # same layout as gradient views
        n_labels = model.n_labels
        grad_emit = grad[: model.n_features * n_labels].reshape(model.n_features, n_labels)
        bias_idx = model.feature_index[crf.BIAS_FEATURE]
        # bias fires at all 3 positions: empirical one per gold label, expected uniform
        expected = np.zeros(n_labels)
        for lab in ("L0", "L1", "L2"):
            expected[model.labels.index(lab)] += 1.0
        expected -= 3.0 / n_labels
        assert np.allclose(grad_emit[bias_idx], expected, atol=1e-12)

    def test_duplicated_data_doubles_pre_penalty(self):
        rng = np.random.default_rng(9)
        data = [random_tiny_instance(rng)]
        model = random_tiny_model(rng, data)
        penalty = float(model.weights @ model.weights) / (2 * model.l2_sigma2)
        single, grad_single = crf.log_likelihood_and_gradient(model, data)
        double, grad_double = crf.log_likelihood_and_gradient(model, data * 2)
        assert double + penalty == pytest.approx(2 * (single + penalty), rel=1e-12)
        data_grad_single = grad_single + model.weights / model.l2_sigma2
        data_grad_double = grad_double + model.weights / model.l2_sigma2
        assert np.allclose(data_grad_double, 2 * data_grad_single, atol=1e-10)

    def test_value_matches_per_sequence_lattices(self):
        rng = np.random.default_rng(10)
        data = small_dataset(rng, count=8)
        model = random_tiny_model(rng, data)
        value, _ = crf.log_likelihood_and_gradient(model, data)
        total = 0.0
        for feats, gold in data:
            lattice = crf.forward_backward(model, feats)
            emit = lattice.log_emissions
            idx = [model.labels.index(lab) for lab in gold]
            s = lattice.log_start[idx[0]] + lattice.log_stop[idx[-1]]
            s += emit[np.arange(len(idx)), idx].sum()
            s += sum(lattice.log_transitions[idx[t], idx[t + 1]] for t in range(len(idx) - 1))
            total += s - lattice.logZ
        total -= float(model.weights @ model.weights) / (2 * model.l2_sigma2)
        assert value == pytest.approx(total, rel=1e-10, abs=1e-10)


class TestTraining:
    def test_memorizes_single_sequence(self):
        feats = [("w=the",), ("w=dog",), ("w=barks",)]
        gold = ["O", "B-x", "O"]
        model = crf.train([(feats, gold)])
        assert crf.predict(model, feats) == gold

    def test_objective_improves_over_zero(self):
        rng = np.random.default_rng(11)
        data = [random_tiny_instance(rng, max_labels=3) for _ in range(50)]
        model = crf.train(data)
        trained_value, _ = crf.log_likelihood_and_gradient(model, data)
        zero = crf.CrfModel.build(data)
        zero_value, _ = crf.log_likelihood_and_gradient(zero, data)
        assert trained_value >= zero_value

    def test_strong_penalty_shrinks_weights(self):
        rng = np.random.default_rng(12)
        data = [random_tiny_instance(rng) for _ in range(10)]
        loose = crf.train(data, crf.CrfTrainConfig(l2_sigma2=100.0))
        tight = crf.train(data, crf.CrfTrainConfig(l2_sigma2=1e-4))
        assert np.linalg.norm(tight.weights) < 0.01 * max(1.0, np.linalg.norm(loose.weights))

    def test_concave_objective_start_independent(self):
        rng = np.random.default_rng(13)
        data = [random_tiny_instance(rng) for _ in range(12)]
        from_zero = crf.train(data)
        other_start = rng.normal(0.0, 0.5, size=from_zero.weights.shape)
        from_random = crf.train(data, initial_weights=other_start)
        value_zero, _ = crf.log_likelihood_and_gradient(from_zero, data)
        value_random, _ = crf.log_likelihood_and_gradient(from_random, data)
        assert abs(value_zero - value_random) <= 1e-4

    def test_deterministic(self):
        rng = np.random.default_rng(14)
        data = [random_tiny_instance(rng) for _ in range(10)]
        one = crf.train(data)
        two = crf.train(data)
        assert np.array_equal(one.weights, two.weights)

    def test_unseen_decode_features_ignored(self):
        data = [((("a",), ("b",)), ["L0", "L1"])]
        model = crf.train(data)
        plain = crf.predict(model, [("a",), ("b",)])
        noisy = crf.predict(model, [("a", "never-seen"), ("b", "also-new")])
        assert plain == noisy
        assert crf.sequence_confidence(model, [("a",), ("b",)]) == pytest.approx(
            crf.sequence_confidence(model, [("a", "never-seen"), ("b",)]), abs=1e-12
        )

    def test_empty_data_rejected(self):
        with pytest.raises(ValueError):
            crf.train([])


class TestPersistence:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(15)
        data = [random_tiny_instance(rng) for _ in range(5)]
        model = crf.train(data)
        path = tmp_path / "model.json"
        model.save(str(path))
        loaded = crf.CrfModel.load(str(path))
        assert loaded.labels == model.labels
        assert loaded.feature_index == model.feature_index
        assert np.array_equal(loaded.weights, model.weights)
        assert loaded.l2_sigma2 == model.l2_sigma2

    def test_version_checked(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(json.dumps({"format_version": 99}))
        with pytest.raises(ValueError, match="format"):
            crf.CrfModel.load(str(path))
