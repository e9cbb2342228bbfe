"""Scoring and batch selection for the query strategies rs, lc, idiv, idd, dki.

Similarity between sentences always uses the combined sentence vectors,
independent of which classifier feature groups are enabled. Negative
cosines are clamped so every score stays finite and non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import crf
from .corpus import Sentence
from .featgen import Lexicon, semantic_spans

STRATEGY_NAMES = ("rs", "lc", "idiv", "idd", "dki")


@dataclass(frozen=True)
class StrategyParams:
    density_exponent: float = 1.0  # exponent on the pool-density factor (idd)
    dki_lambda: float = 0.5        # weight on uncertainty in the dki mix


@dataclass
class ScoredCandidate:
    seq_id: int
    uncertainty: float
    diversity: float = 1.0
    density: float = 1.0
    domain_knowledge: float = 0.0
    final_score: float = 0.0


def score_lc(model: crf.CrfModel, feats) -> float:
    """Least-confidence informativeness: 1 - P(y*|x)."""
    return 1.0 - crf.sequence_confidence(model, feats)


def sentence_similarity(a: Sentence, b: Sentence, seqreps: Mapping[int, np.ndarray]) -> float:
    """Cosine of the two sentences' combined vectors (vectors are unit or zero)."""
    va, vb = seqreps[a.seq_id], seqreps[b.seq_id]
    return float(np.clip(np.dot(va, vb), -1.0, 1.0))


def _diversity(candidate: Sentence, labeled: Sequence[Sentence], seqreps) -> float:
    if not labeled:
        return 1.0
    max_sim = max(sentence_similarity(candidate, s, seqreps) for s in labeled)
    return 1.0 - min(1.0, max(0.0, max_sim))


def score_idiv(uncertainty: float, candidate: Sentence, labeled: Sequence[Sentence], seqreps) -> float:
    """Uncertainty discounted by similarity to the labeled set."""
    return uncertainty * _diversity(candidate, labeled, seqreps)


def score_idd(
    uncertainty: float,
    candidate: Sentence,
    labeled: Sequence[Sentence],
    pool: Sequence[Sentence],
    seqreps,
    density_exponent: float = 1.0,
) -> float:
    """idiv additionally weighted by mean similarity to the rest of the pool."""
    others = [s for s in pool if s.seq_id != candidate.seq_id]
    if not others:
        density = 1.0
    else:
        sims = [max(0.0, sentence_similarity(candidate, s, seqreps)) for s in others]
        density = float(np.mean(sims))
    return uncertainty * density ** density_exponent * _diversity(candidate, labeled, seqreps)


def domain_knowledge(sentence: Sentence, lexicon: Lexicon) -> float:
    """Lexicon longest-span coverage of the sentence, in [0, 1]."""
    if lexicon.max_len == 0:
        return 0.0
    total = sum(length for _, length in semantic_spans(sentence, lexicon))
    dk = total / (len(sentence.tokens) * lexicon.max_len)
    return min(1.0, max(0.0, dk))


def score_dki(uncertainty: float, sentence: Sentence, lexicon: Lexicon, dki_lambda: float = 0.5) -> float:
    """Convex mix of uncertainty and lexicon coverage."""
    return dki_lambda * uncertainty + (1.0 - dki_lambda) * domain_knowledge(sentence, lexicon)


def score_pool(
    strategy: str,
    model: crf.CrfModel | None,
    pool: Sequence[Sentence],
    labeled: Sequence[Sentence],
    pool_features: Sequence,
    seqreps: Mapping[int, np.ndarray] | None = None,
    lexicon: Lexicon | None = None,
    params: StrategyParams = StrategyParams(),
) -> list[ScoredCandidate]:
    """Vectorized scoring of a whole pool under one strategy.

    Equivalent to applying the per-candidate scoring functions; the
    matrix formulation only buys speed.
    """
    strategy = strategy.lower()
    if strategy not in STRATEGY_NAMES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "rs":
        return [ScoredCandidate(s.seq_id, 0.0) for s in pool]

    confidences = crf.sequence_confidences(model, pool_features)
    uncertainty = 1.0 - confidences
    scored = [ScoredCandidate(s.seq_id, float(u)) for s, u in zip(pool, uncertainty)]

    if strategy == "lc":
        for cand in scored:
            cand.final_score = cand.uncertainty
        return scored

    if strategy == "dki":
        if lexicon is None:
            raise ValueError("dki requires a lexicon")
        for cand, sent in zip(scored, pool):
            cand.domain_knowledge = domain_knowledge(sent, lexicon)
            cand.final_score = (
                params.dki_lambda * cand.uncertainty
                + (1.0 - params.dki_lambda) * cand.domain_knowledge
            )
        return scored

    if seqreps is None:
        raise ValueError(f"{strategy} requires sentence vectors")
    pool_mat = np.array([seqreps[s.seq_id] for s in pool])
    if labeled:
        lab_mat = np.array([seqreps[s.seq_id] for s in labeled])
        max_sim = np.clip((pool_mat @ lab_mat.T).max(axis=1), 0.0, 1.0)
    else:
        max_sim = np.zeros(len(pool))
    diversity = 1.0 - max_sim

    if strategy == "idiv":
        for cand, div in zip(scored, diversity):
            cand.diversity = float(div)
            cand.final_score = cand.uncertainty * cand.diversity
        return scored

    # idd
    sims = np.clip(pool_mat @ pool_mat.T, -1.0, 1.0)
    np.fill_diagonal(sims, 0.0)
    positive = np.maximum(sims, 0.0)
    if len(pool) > 1:
        density = positive.sum(axis=1) / (len(pool) - 1)
    else:
        density = np.ones(1)
    for cand, div, dens in zip(scored, diversity, density):
        cand.diversity = float(div)
        cand.density = float(dens)
        cand.final_score = cand.uncertainty * cand.density ** params.density_exponent * cand.diversity
    return scored


def select_batch(
    scores: Sequence[ScoredCandidate],
    batch_size: int,
    strategy: str,
    seed: int,
) -> list[int]:
    """Pick the next batch of sequence ids.

    rs samples uniformly without replacement; every other strategy takes
    the top batch by final score with ties broken toward the lower id.
    A pool smaller than the batch is returned whole.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not scores:
        raise ValueError("empty pool")
    strategy = strategy.lower()
    ids = sorted(c.seq_id for c in scores)
    if len(ids) <= batch_size:
        return ids
    if strategy == "rs":
        rng = np.random.default_rng(seed)
        return [int(i) for i in rng.choice(ids, size=batch_size, replace=False)]
    ranked = sorted(scores, key=lambda c: (-c.final_score, c.seq_id))
    return [c.seq_id for c in ranked[:batch_size]]
