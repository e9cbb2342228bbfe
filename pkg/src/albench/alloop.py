"""Pool-based active-learning orchestration.

Each iteration scores the pool under the configured strategy, moves the
selected batch to the labeled set with oracle (gold) labels, retrains
the CRF from scratch, and evaluates on the held-out test corpus. History
F1 values come only from the test corpus, never from pool data.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import crf, strategies
from .corpus import Corpus, concept_spans, count_units, extract_concepts
from .evaluation import PRF, phrase_prf
from .featgen import Lexicon


@dataclass(frozen=True)
class HistoryRow:
    iteration: int
    seqs_used: int
    tokens_used: int
    concepts_used: int
    sar: float
    tar: float
    car: float
    precision: float
    recall: float
    f1: float


@dataclass
class ALState:
    labeled_ids: list           # acquisition order
    pool_ids: set
    iteration: int
    history: list
    seed: int
    config: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AnnotationRates:
    sar: float
    tar: float
    car: float
    reached: bool
    target_f1: float


@dataclass
class Oracle:
    """Simulated annotator: reveals gold labels of queried train sequences."""

    labels: Mapping[int, Sequence[str]]

    @classmethod
    def from_corpus(cls, train: Corpus) -> "Oracle":
        return cls({s.seq_id: s.gold_labels for s in train.sentences})

    def __getitem__(self, seq_id: int) -> Sequence[str]:
        return self.labels[seq_id]


@dataclass
class PipelineHandles:
    """Everything an AL run needs besides the evolving state."""

    train: Corpus
    test: Corpus
    featurize: Callable
    crf_config: crf.CrfTrainConfig = crf.CrfTrainConfig()
    strategy_params: strategies.StrategyParams = strategies.StrategyParams()
    lexicon: Lexicon | None = None
    seqreps: Mapping[int, np.ndarray] | None = None
    oracle: Oracle | None = None
    model: crf.CrfModel | None = None
    train_features: list = field(default_factory=list)
    test_features: list = field(default_factory=list)
    test_gold_spans: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.oracle is None:
            self.oracle = Oracle.from_corpus(self.train)
        if not self.train_features:
            self.train_features = [self.featurize(s) for s in self.train.sentences]
        if not self.test_features:
            self.test_features = [self.featurize(s) for s in self.test.sentences]
        if not self.test_gold_spans:
            self.test_gold_spans = [extract_concepts(s) for s in self.test.sentences]


def annotation_rate(used: int, total: int) -> float:
    """Percentage of annotation units consumed; summaries round to whole percents."""
    if total <= 0:
        raise ValueError("total must be positive")
    if not 0 <= used <= total:
        raise ValueError("used must be within [0, total]")
    return 100.0 * used / total


def init_split(train: Corpus, init_fraction: float = 0.005, seed: int = 0) -> ALState:
    """Uniform random initial labeled set of max(1, round(fraction * N)) sequences."""
    if len(train.sentences) == 0:
        raise ValueError("empty train set")
    if not 0.0 < init_fraction < 0.01:
        raise ValueError("init_fraction must lie in (0, 0.01)")
    n = len(train.sentences)
    size = max(1, int(init_fraction * n + 0.5))
    rng = np.random.default_rng(seed)
    labeled = [int(i) for i in rng.choice(n, size=size, replace=False)]
    pool = set(range(n)) - set(labeled)
    return ALState(labeled_ids=labeled, pool_ids=pool, iteration=0, history=[], seed=seed)


def _iteration_seed(base: int, iteration: int) -> int:
    return int(np.random.SeedSequence([base, iteration]).generate_state(1)[0])


def train_model(state: ALState, handles: PipelineHandles) -> crf.CrfModel:
    data = [
        (handles.train_features[i], handles.oracle[i]) for i in state.labeled_ids
    ]
    return crf.train(data, handles.crf_config)


def evaluate_model(model: crf.CrfModel, handles: PipelineHandles) -> PRF:
    predicted = [
        concept_spans(crf.predict(model, feats)) for feats in handles.test_features
    ]
    return phrase_prf(handles.test_gold_spans, predicted)


def _append_history(state: ALState, handles: PipelineHandles, prf: PRF) -> None:
    seqs, tokens, concepts = count_units(handles.train.subset(state.labeled_ids))
    total_seqs, total_tokens, total_concepts = handles.train.totals
    state.history.append(
        HistoryRow(
            iteration=state.iteration,
            seqs_used=seqs,
            tokens_used=tokens,
            concepts_used=concepts,
            sar=annotation_rate(seqs, total_seqs),
            tar=annotation_rate(tokens, total_tokens),
            car=annotation_rate(concepts, total_concepts) if total_concepts else 0.0,
            precision=prf.precision,
            recall=prf.recall,
            f1=prf.f1,
        )
    )


def bootstrap(state: ALState, handles: PipelineHandles) -> ALState:
    """Train on the initial labeled set and record the iteration-0 history row."""
    handles.model = train_model(state, handles)
    _append_history(state, handles, evaluate_model(handles.model, handles))
    return state


def run_iteration(state: ALState, strategy: str, batch_size: int, handles: PipelineHandles) -> ALState:
    """One query-annotate-retrain-evaluate cycle; returns the advanced state."""
    if not state.pool_ids:
        raise ValueError("empty pool")
    if handles.model is None:
        raise ValueError("model not trained on the current labeled set")
    pool_sentences = handles.train.subset(sorted(state.pool_ids))
    labeled_sentences = handles.train.subset(state.labeled_ids)
    scores = strategies.score_pool(
        strategy,
        handles.model,
        pool_sentences,
        labeled_sentences,
        [handles.train_features[s.seq_id] for s in pool_sentences],
        seqreps=handles.seqreps,
        lexicon=handles.lexicon,
        params=handles.strategy_params,
    )
    batch = strategies.select_batch(
        scores, batch_size, strategy, _iteration_seed(state.seed, state.iteration)
    )
    state.labeled_ids.extend(batch)
    state.pool_ids.difference_update(batch)
    state.iteration += 1
    handles.model = train_model(state, handles)
    _append_history(state, handles, evaluate_model(handles.model, handles))
    return state


def run_until(
    state: ALState,
    target_f1: float,
    strategy: str,
    batch_size: int,
    handles: PipelineHandles,
    max_iterations: int | None = None,
) -> tuple[ALState, AnnotationRates]:
    """Iterate until the test F1 reaches the target or the pool is empty.

    The rates are read from the first history row meeting the target; a
    run that exhausts the pool without reaching it reports reached=False
    with all rates at 100.
    """
    if not state.history:
        bootstrap(state, handles)
    while state.pool_ids and not any(row.f1 >= target_f1 for row in state.history):
        if max_iterations is not None and state.iteration >= max_iterations:
            break
        run_iteration(state, strategy, batch_size, handles)
    for row in state.history:
        if row.f1 >= target_f1:
            return state, AnnotationRates(row.sar, row.tar, row.car, True, target_f1)
    return state, AnnotationRates(100.0, 100.0, 100.0, False, target_f1)
