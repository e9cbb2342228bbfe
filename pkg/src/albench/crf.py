"""Linear-chain CRF: penalized maximum-likelihood training and exact inference.

The parameter vector packs emission weights (feature x label), label-label
transition weights, and explicit start/stop transition weights. Inference
runs entirely in log space. Training data is encoded once into
length-bucketed index arrays so that objective and gradient evaluations
are vectorized across sequences; the per-sequence operations
(forward_backward, viterbi, sequence_confidence) are the reference
implementations the batched path is tested against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

BIAS_FEATURE = "__bias__"

FeatureSeq = Sequence[Sequence[str]]


class CrfTrainingError(RuntimeError):
    """Raised when the training objective becomes non-finite."""


@dataclass(frozen=True)
class CrfTrainConfig:
    l2_sigma2: float = 10.0       # Gaussian penalty variance; excludes no weights
    max_iterations: int = 300
    tolerance: float = 1e-6       # relative objective change


@dataclass
class CrfModel:
    labels: tuple[str, ...]
    feature_index: dict
    weights: np.ndarray
    l2_sigma2: float = 10.0

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return len(self.feature_index)

    @property
    def emission_weights(self) -> np.ndarray:
        f, l = self.n_features, self.n_labels
        return self.weights[: f * l].reshape(f, l)

    @property
    def transition_weights(self) -> np.ndarray:
        f, l = self.n_features, self.n_labels
        return self.weights[f * l : f * l + l * l].reshape(l, l)

    @property
    def start_weights(self) -> np.ndarray:
        f, l = self.n_features, self.n_labels
        return self.weights[f * l + l * l : f * l + l * l + l]

    @property
    def stop_weights(self) -> np.ndarray:
        f, l = self.n_features, self.n_labels
        return self.weights[f * l + l * l + l :]

    @classmethod
    def build(cls, data: Sequence[tuple[FeatureSeq, Sequence[str]]], config: CrfTrainConfig = CrfTrainConfig()) -> "CrfModel":
        """Freeze alphabets from training data; weights start at zero."""
        if not data:
            raise ValueError("empty training data")
        labels: set[str] = set()
        features: set[str] = set()
        for feats, gold in data:
            if len(feats) != len(gold):
                raise ValueError("feature/label length mismatch")
            if not gold:
                raise ValueError("empty sequence")
            labels.update(gold)
            for position in feats:
                features.update(position)
        ordered_labels = tuple(sorted(labels))
        ordered_features = sorted(features | {BIAS_FEATURE})
        index = {name: i for i, name in enumerate(ordered_features)}
        l = len(ordered_labels)
        f = len(ordered_features)
        weights = np.zeros(f * l + l * l + 2 * l)
        return cls(ordered_labels, index, weights, config.l2_sigma2)

    def encode(self, feats: FeatureSeq) -> list[np.ndarray]:
        """Per-position arrays of known feature indices; the bias always fires.

        Feature strings outside the frozen alphabet are ignored.
        """
        bias = self.feature_index[BIAS_FEATURE]
        out = []
        for position in feats:
            idx = [self.feature_index[s] for s in position if s in self.feature_index]
            idx.append(bias)
            out.append(np.array(idx, dtype=np.intp))
        return out

    def emission_scores(self, feats: FeatureSeq) -> np.ndarray:
        w_emit = self.emission_weights
        return np.array([w_emit[idx].sum(axis=0) for idx in self.encode(feats)])

    def save(self, path: str) -> None:
        ordered = sorted(self.feature_index, key=self.feature_index.get)
        payload = {
            "format_version": 1,
            "labels": list(self.labels),
            "features": ordered,
            "l2_sigma2": self.l2_sigma2,
            "weights": [float(x) for x in self.weights],
        }
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle)

    @classmethod
    def load(cls, path: str) -> "CrfModel":
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
        if payload.get("format_version") != 1:
            raise ValueError(f"{path}: unsupported model format")
        index = {name: i for i, name in enumerate(payload["features"])}
        return cls(
            tuple(payload["labels"]),
            index,
            np.array(payload["weights"], dtype=np.float64),
            float(payload["l2_sigma2"]),
        )


@dataclass
class Lattice:
    """Log-space forward/backward tables for one sequence."""

    log_emissions: np.ndarray   # (n, L)
    log_transitions: np.ndarray # (L, L)
    log_start: np.ndarray       # (L,)
    log_stop: np.ndarray        # (L,)
    log_alpha: np.ndarray       # (n, L)
    log_beta: np.ndarray        # (n, L)
    logZ: float                 # alpha-derived
    logZ_from_beta: float

    def marginals(self) -> np.ndarray:
        """P(y_t = l | x); rows sum to 1."""
        return np.exp(self.log_alpha + self.log_beta - self.logZ)

    def pairwise_marginals(self) -> np.ndarray:
        """P(y_t = l, y_{t+1} = l' | x) for t in 0..n-2."""
        n = self.log_emissions.shape[0]
        if n < 2:
            return np.zeros((0, self.log_transitions.shape[0], self.log_transitions.shape[0]))
        left = self.log_alpha[:-1, :, None]
        right = (self.log_emissions[1:] + self.log_beta[1:])[:, None, :]
        return np.exp(left + self.log_transitions[None] + right - self.logZ)


def forward_backward(model: CrfModel, feats: FeatureSeq) -> Lattice:
    emit = model.emission_scores(feats)
    trans = model.transition_weights
    start = model.start_weights
    stop = model.stop_weights
    n, l = emit.shape
    alpha = np.empty((n, l))
    alpha[0] = start + emit[0]
    for t in range(1, n):
        alpha[t] = emit[t] + logsumexp(alpha[t - 1][:, None] + trans, axis=0)
    log_z = float(logsumexp(alpha[n - 1] + stop))
    beta = np.empty((n, l))
    beta[n - 1] = stop
    for t in range(n - 2, -1, -1):
        beta[t] = logsumexp(trans + (emit[t + 1] + beta[t + 1])[None, :], axis=1)
    log_z_beta = float(logsumexp(start + emit[0] + beta[0]))
    return Lattice(emit, trans.copy(), start.copy(), stop.copy(), alpha, beta, log_z, log_z_beta)


def viterbi(model: CrfModel, feats: FeatureSeq) -> tuple[list[str], float]:
    """Best label path and its unnormalized log score.

    Ties break toward the lower label index at every backpointer, so the
    all-tied case yields the lexicographically first label path.
    """
    emit = model.emission_scores(feats)
    trans = model.transition_weights
    n, l = emit.shape
    score = model.start_weights + emit[0]
    back = np.zeros((n, l), dtype=np.intp)
    for t in range(1, n):
        candidate = score[:, None] + trans
        back[t] = np.argmax(candidate, axis=0)
        score = emit[t] + candidate[back[t], np.arange(l)]
    score = score + model.stop_weights
    best = int(np.argmax(score))
    path = [best]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return [model.labels[i] for i in path], float(score[best])


def sequence_confidence(model: CrfModel, feats: FeatureSeq) -> float:
    """Posterior probability of the best path, in (0, 1]."""
    _, best_score = viterbi(model, feats)
    lattice = forward_backward(model, feats)
    return min(1.0, float(np.exp(best_score - lattice.logZ)))


# ---------------------------------------------------------------------------
# Batched training/scoring internals (length-bucketed).
# ---------------------------------------------------------------------------


@dataclass
class _Bucket:
    length: int
    seq_indices: list
    labels: np.ndarray | None     # (B, n); None for unlabeled pools
    flat_idx: np.ndarray          # concatenated feature indices
    seg_starts: np.ndarray        # (B*n,) segment starts into flat_idx
    pos_of_feat: np.ndarray       # (nnz,) flat position id per feature entry


def _bucketize(model: CrfModel, sequences: Sequence[FeatureSeq], label_seqs: Sequence[Sequence[str]] | None) -> list[_Bucket]:
    label_at = {lab: i for i, lab in enumerate(model.labels)}
    by_len: dict[int, list[int]] = {}
    encoded = [model.encode(feats) for feats in sequences]
    for i, enc in enumerate(encoded):
        by_len.setdefault(len(enc), []).append(i)
    buckets = []
    for length in sorted(by_len):
        members = by_len[length]
        chunks: list[np.ndarray] = []
        seg_lengths = []
        for i in members:
            for idx in encoded[i]:
                chunks.append(idx)
                seg_lengths.append(len(idx))
        flat_idx = np.concatenate(chunks)
        seg_lengths = np.array(seg_lengths, dtype=np.intp)
        seg_starts = np.concatenate([[0], np.cumsum(seg_lengths)[:-1]]).astype(np.intp)
        pos_of_feat = np.repeat(np.arange(len(seg_lengths), dtype=np.intp), seg_lengths)
        labels = None
        if label_seqs is not None:
            labels = np.array(
                [[label_at[lab] for lab in label_seqs[i]] for i in members], dtype=np.intp
            )
        buckets.append(_Bucket(length, members, labels, flat_idx, seg_starts, pos_of_feat))
    return buckets


def _empirical_counts(model: CrfModel, buckets: list[_Bucket]) -> np.ndarray:
    f, l = model.n_features, model.n_labels
    emp = np.zeros(model.weights.shape)
    emit = emp[: f * l]
    trans = emp[f * l : f * l + l * l]
    start = emp[f * l + l * l : f * l + l * l + l]
    stop = emp[f * l + l * l + l :]
    for bucket in buckets:
        labels_flat = bucket.labels.reshape(-1)
        emit += np.bincount(bucket.flat_idx * l + labels_flat[bucket.pos_of_feat], minlength=f * l)
        if bucket.length > 1:
            pairs = bucket.labels[:, :-1] * l + bucket.labels[:, 1:]
            trans += np.bincount(pairs.reshape(-1), minlength=l * l)
        start += np.bincount(bucket.labels[:, 0], minlength=l)
        stop += np.bincount(bucket.labels[:, -1], minlength=l)
    return emp


def _bucket_emissions(w_emit: np.ndarray, bucket: _Bucket, n_labels: int) -> np.ndarray:
    rows = np.add.reduceat(w_emit[bucket.flat_idx], bucket.seg_starts, axis=0)
    batch = len(bucket.seq_indices)
    return rows.reshape(batch, bucket.length, n_labels)


def _bucket_forward(emit: np.ndarray, trans: np.ndarray, start: np.ndarray, stop: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    batch, n, l = emit.shape
    alpha = np.empty((batch, n, l))
    alpha[:, 0] = start + emit[:, 0]
    for t in range(1, n):
        alpha[:, t] = emit[:, t] + logsumexp(alpha[:, t - 1][:, :, None] + trans[None], axis=1)
    log_z = logsumexp(alpha[:, n - 1] + stop, axis=1)
    return alpha, log_z


def _bucket_backward(emit: np.ndarray, trans: np.ndarray, stop: np.ndarray) -> np.ndarray:
    batch, n, l = emit.shape
    beta = np.empty((batch, n, l))
    beta[:, n - 1] = stop
    for t in range(n - 2, -1, -1):
        inner = (emit[:, t + 1] + beta[:, t + 1])[:, None, :]
        beta[:, t] = logsumexp(trans[None] + inner, axis=2)
    return beta


def _neg_loglik_and_grad(
    w: np.ndarray,
    model: CrfModel,
    buckets: list[_Bucket],
    emp: np.ndarray,
    sigma2: float,
) -> tuple[float, np.ndarray]:
    f, l = model.n_features, model.n_labels
    w_emit = w[: f * l].reshape(f, l)
    w_trans = w[f * l : f * l + l * l].reshape(l, l)
    w_start = w[f * l + l * l : f * l + l * l + l]
    w_stop = w[f * l + l * l + l :]

    expected = np.zeros_like(w)
    exp_emit = expected[: f * l].reshape(f, l)
    exp_trans = expected[f * l : f * l + l * l].reshape(l, l)
    exp_start = expected[f * l + l * l : f * l + l * l + l]
    exp_stop = expected[f * l + l * l + l :]

    total_log_z = 0.0
    for bucket in buckets:
        emit = _bucket_emissions(w_emit, bucket, l)
        alpha, log_z = _bucket_forward(emit, w_trans, w_start, w_stop)
        if not np.all(np.isfinite(log_z)):
            bad = int(np.flatnonzero(~np.isfinite(log_z))[0])
            raise CrfTrainingError(
                f"non-finite objective at sequence {bucket.seq_indices[bad]}"
            )
        beta = _bucket_backward(emit, w_trans, w_stop)
        marginals = np.exp(alpha + beta - log_z[:, None, None])

        flat_marg = marginals.reshape(-1, l)[bucket.pos_of_feat]
        for lab in range(l):
            exp_emit[:, lab] += np.bincount(
                bucket.flat_idx, weights=flat_marg[:, lab], minlength=f
            )
        for t in range(bucket.length - 1):
            pair = (
                alpha[:, t][:, :, None]
                + w_trans[None]
                + (emit[:, t + 1] + beta[:, t + 1])[:, None, :]
                - log_z[:, None, None]
            )
            exp_trans += np.exp(pair).sum(axis=0)
        exp_start += marginals[:, 0].sum(axis=0)
        exp_stop += marginals[:, -1].sum(axis=0)
        total_log_z += float(log_z.sum())

    value = float(w @ emp) - total_log_z - float(w @ w) / (2.0 * sigma2)
    grad = emp - expected - w / sigma2
    return -value, -grad


def log_likelihood_and_gradient(
    model: CrfModel, data: Sequence[tuple[FeatureSeq, Sequence[str]]]
) -> tuple[float, np.ndarray]:
    """Penalized log-likelihood and its gradient at the model's weights.

    gradient = empirical counts - expected counts - w / sigma^2.
    """
    buckets = _bucketize(model, [d[0] for d in data], [d[1] for d in data])
    emp = _empirical_counts(model, buckets)
    neg_value, neg_grad = _neg_loglik_and_grad(model.weights, model, buckets, emp, model.l2_sigma2)
    return -neg_value, -neg_grad


def train(
    data: Sequence[tuple[FeatureSeq, Sequence[str]]],
    config: CrfTrainConfig = CrfTrainConfig(),
    initial_weights: np.ndarray | None = None,
) -> CrfModel:
    """Quasi-Newton (L-BFGS-B) fit from zero initialization.

    Terminates when the relative objective change falls below the
    configured tolerance or after max_iterations.
    """
    model = CrfModel.build(data, config)
    buckets = _bucketize(model, [d[0] for d in data], [d[1] for d in data])
    emp = _empirical_counts(model, buckets)
    x0 = np.zeros_like(model.weights) if initial_weights is None else np.asarray(initial_weights, dtype=np.float64)
    if x0.shape != model.weights.shape:
        raise ValueError("initial_weights shape mismatch")
    result = minimize(
        _neg_loglik_and_grad,
        x0,
        args=(model, buckets, emp, config.l2_sigma2),
        jac=True,
        method="L-BFGS-B",
        options={
            "maxiter": config.max_iterations,
            "ftol": config.tolerance,
            "gtol": 1e-10,
            "maxfun": 20 * config.max_iterations,
        },
    )
    if not np.all(np.isfinite(result.x)):
        raise CrfTrainingError("optimizer produced non-finite weights")
    model.weights = result.x
    return model


def sequence_confidences(model: CrfModel, sequences: Sequence[FeatureSeq]) -> np.ndarray:
    """Batched P(y*|x) over many sequences; matches sequence_confidence."""
    if not sequences:
        return np.zeros(0)
    buckets = _bucketize(model, sequences, None)
    f, l = model.n_features, model.n_labels
    w_emit = model.emission_weights
    trans = model.transition_weights
    out = np.zeros(len(sequences))
    for bucket in buckets:
        emit = _bucket_emissions(w_emit, bucket, l)
        _, log_z = _bucket_forward(emit, trans, model.start_weights, model.stop_weights)
        score = model.start_weights + emit[:, 0]
        for t in range(1, bucket.length):
            score = emit[:, t] + np.max(score[:, :, None] + trans[None], axis=1)
        best = np.max(score + model.stop_weights, axis=1)
        out[bucket.seq_indices] = np.minimum(1.0, np.exp(best - log_z))
    return out


def predict(model: CrfModel, feats: FeatureSeq) -> list[str]:
    return viterbi(model, feats)[0]
