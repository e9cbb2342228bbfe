"""Phrase-level P/R/F1 and the 5x2 cross-validated paired t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import ConceptSpan, Corpus

# Two-tailed critical value for Student's t with df=5 at alpha=0.05.
T_CRITICAL_DF5_P05 = 2.571


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PRF":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return cls(precision, recall, f1_score(precision, recall), tp, fp, fn)


def phrase_prf(
    gold: Sequence[Sequence[ConceptSpan]], pred: Sequence[Sequence[ConceptSpan]]
) -> PRF:
    """Micro-averaged exact-match span scoring over all concept types.

    A predicted span counts as a true positive iff a gold span matches
    its type, start, and end exactly.
    """
    if len(gold) != len(pred):
        raise ValueError(f"sentence misalignment: {len(gold)} gold vs {len(pred)} predicted")
    tp = fp = fn = 0
    for gold_spans, pred_spans in zip(gold, pred):
        gold_set = set(gold_spans)
        pred_set = set(pred_spans)
        tp += len(gold_set & pred_set)
        fp += len(pred_set - gold_set)
        fn += len(gold_set - pred_set)
    return PRF.from_counts(tp, fp, fn)


def phrase_prf_by_type(
    gold: Sequence[Sequence[ConceptSpan]], pred: Sequence[Sequence[ConceptSpan]]
) -> dict:
    """Per-concept-type breakdown of phrase_prf, for diagnostics."""
    types = {s.concept_type for spans in gold for s in spans}
    types |= {s.concept_type for spans in pred for s in spans}
    out = {}
    for ctype in sorted(types):
        gold_t = [[s for s in spans if s.concept_type == ctype] for spans in gold]
        pred_t = [[s for s in spans if s.concept_type == ctype] for spans in pred]
        out[ctype] = phrase_prf(gold_t, pred_t)
    return out


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: int
    significant_at_05: bool
    differences: tuple  # 5 rows of (first-half diff, second-half diff)


def five_by_two_ttest(f1_a, f1_b) -> TTestResult:
    """Dietterich's 5x2cv paired t-test on two systems' F1 matrices.

    t = p_1^(1) / sqrt(mean of per-replication variances), df=5. When all
    per-replication variances vanish, a nonzero first difference is
    reported as a signed infinity (significant); all-zero differences
    give t=0 (not significant).
    """
    a = np.asarray(f1_a, dtype=np.float64)
    b = np.asarray(f1_b, dtype=np.float64)
    if a.shape != (5, 2) or b.shape != (5, 2):
        raise ValueError("expected 5x2 score matrices")
    diffs = a - b
    fold_means = diffs.mean(axis=1)
    variances = ((diffs - fold_means[:, None]) ** 2).sum(axis=1)
    denom = math.sqrt(float(variances.sum()) / 5.0)
    first = float(diffs[0, 0])
    if denom == 0.0:
        t = 0.0 if first == 0.0 else math.copysign(math.inf, first)
    else:
        t = first / denom
    return TTestResult(
        t_statistic=t,
        degrees_of_freedom=5,
        significant_at_05=abs(t) > T_CRITICAL_DF5_P05,
        differences=tuple(tuple(float(x) for x in row) for row in diffs),
    )


def make_5x2_splits(train: Corpus, seed: int) -> list[tuple[list[int], list[int]]]:
    """Five independent random halvings of the train sequences.

    Both systems under comparison must consume the same splits.
    """
    n = len(train.sentences)
    if n < 2:
        raise ValueError("need at least 2 sequences for 5x2 splits")
    rng = np.random.default_rng(seed)
    splits = []
    for _ in range(5):
        order = rng.permutation(n)
        half = n // 2
        splits.append((sorted(int(i) for i in order[:half]), sorted(int(i) for i in order[half:])))
    return splits
