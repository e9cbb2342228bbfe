"""Synthetic BIO corpus generator with planted distributional concept classes.

Tokens are drawn from latent word classes; concept spans are contiguous
runs of the concept class, flanked by trigger/post context words so that
distributional vectors separate concept vocabulary from background. The
generator also emits a raw sentence stream for embedding training and a
partial-coverage lexicon, so end-to-end runs need no external data.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Corpus, Token, build_corpus

_POS_TAGS = ("NN", "JJ", "VB", "RB", "DT", "IN", "CD", "PR")
_CONCEPT_SUFFIXES = ("itis", "osis", "emia", "oma", "pathy")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    n_train: int = 2000
    n_test: int = 400
    n_embed: int = 8000
    n_background_classes: int = 6
    background_vocab: int = 250      # word types per background class
    concept_vocab: int = 500
    trigger_vocab: int = 30
    post_vocab: int = 30
    zipf_exponent: float = 1.0
    suffix_prob: float = 0.35        # concept types carrying a morphological suffix
    confusable: bool = True          # background class 0 shares the concept suffixes
    trigger_prob: float = 0.5        # concept insertion preceded by a trigger word
    post_prob: float = 0.5           # concept insertion followed by a post word
    false_trigger_rate: float = 0.3  # background sentences containing a stray trigger
    min_len: int = 6
    max_len: int = 12
    concept_count_probs: tuple[float, ...] = (0.52, 0.36, 0.12)  # P(0, 1, 2 insertions)
    run_continue_prob: float = 0.45  # concept run length = 1 + geometric, capped
    max_run: int = 3
    pos_noise: float = 0.1
    lexicon_coverage: float = 0.5    # fraction of concept vocabulary in the lexicon
    concept_type: str = "diso"


@dataclass
class SynthOutput:
    train: Corpus
    test: Corpus
    embed_sentences: list
    lexicon_pairs: list = field(default_factory=list)


def _random_word(rng: np.random.Generator, min_len: int = 3, max_len: int = 9) -> str:
    length = int(rng.integers(min_len, max_len + 1))
    letters = rng.integers(0, 26, size=length)
    return "".join(string.ascii_lowercase[i] for i in letters)


def _make_vocab(rng: np.random.Generator, size: int, taken: set, suffixes: Sequence[str] = (), suffix_prob: float = 0.0) -> list[str]:
    words = []
    while len(words) < size:
        word = _random_word(rng)
        if suffixes and rng.random() < suffix_prob:
            word = word[:4] + str(suffixes[int(rng.integers(len(suffixes)))])
        if word in taken:
            continue
        taken.add(word)
        words.append(word)
    return words


def _zipf_probs(size: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, size + 1, dtype=np.float64)
    probs = ranks ** (-exponent)
    return probs / probs.sum()


class _Generator:
    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        taken: set[str] = set()
        self.background = []
        for class_id in range(cfg.n_background_classes):
            # an optional confusable class shares the concept suffix morphology
            suffixed = cfg.confusable and class_id == 0
            self.background.append(
                _make_vocab(
                    self.rng, cfg.background_vocab, taken,
                    _CONCEPT_SUFFIXES if suffixed else (),
                    cfg.suffix_prob if suffixed else 0.0,
                )
            )
        self.concepts = _make_vocab(self.rng, cfg.concept_vocab, taken, _CONCEPT_SUFFIXES, cfg.suffix_prob)
        self.triggers = _make_vocab(self.rng, cfg.trigger_vocab, taken)
        self.posts = _make_vocab(self.rng, cfg.post_vocab, taken)
        self.bg_probs = _zipf_probs(cfg.background_vocab, cfg.zipf_exponent)
        self.concept_probs = _zipf_probs(cfg.concept_vocab, cfg.zipf_exponent)
        self.small_probs = _zipf_probs(cfg.trigger_vocab, 1.0)
        # dominant POS per word class: backgrounds cycle the tagset, concepts are NN-like
        self.bg_tags = [_POS_TAGS[i % len(_POS_TAGS)] for i in range(cfg.n_background_classes)]

    def _pos(self, dominant: str) -> str:
        if self.rng.random() < self.cfg.pos_noise:
            return str(_POS_TAGS[int(self.rng.integers(len(_POS_TAGS)))])
        return dominant

    def _background_token(self, class_id: int) -> tuple[str, str, str]:
        word = self.background[class_id][int(self.rng.choice(self.cfg.background_vocab, p=self.bg_probs))]
        return word, self._pos(self.bg_tags[class_id]), "O"

    def _concept_run(self) -> list[tuple[str, str, str]]:
        cfg = self.cfg
        run_len = 1
        while run_len < cfg.max_run and self.rng.random() < cfg.run_continue_prob:
            run_len += 1
        run = []
        for i in range(run_len):
            word = self.concepts[int(self.rng.choice(cfg.concept_vocab, p=self.concept_probs))]
            tag = ("B-" if i == 0 else "I-") + cfg.concept_type
            run.append((word, self._pos("NN"), tag))
        return run

    def _trigger_token(self) -> tuple[str, str, str]:
        trigger = self.triggers[int(self.rng.choice(self.cfg.trigger_vocab, p=self.small_probs))]
        return trigger, self._pos("VB"), "O"

    def sentence(self) -> list[tuple[str, str, str]]:
        cfg = self.cfg
        rng = self.rng
        n_insert = int(rng.choice(len(cfg.concept_count_probs), p=np.array(cfg.concept_count_probs)))
        base_len = int(rng.integers(cfg.min_len, cfg.max_len + 1))
        primary = int(rng.integers(cfg.n_background_classes))
        skeleton = []
        for _ in range(base_len):
            class_id = primary if rng.random() < 0.7 else int(rng.integers(cfg.n_background_classes))
            skeleton.append(self._background_token(class_id))
        if n_insert == 0:
            if rng.random() < cfg.false_trigger_rate:
                skeleton[int(rng.integers(len(skeleton)))] = self._trigger_token()
            return skeleton
        cut_points = sorted(rng.choice(base_len + 1, size=n_insert, replace=False))
        out: list[tuple[str, str, str]] = []
        prev = 0
        for cut in cut_points:
            out.extend(skeleton[prev:cut])
            if rng.random() < cfg.trigger_prob:
                out.append(self._trigger_token())
            out.extend(self._concept_run())
            if rng.random() < cfg.post_prob:
                post = self.posts[int(rng.choice(cfg.post_vocab, p=self.small_probs))]
                out.append((post, self._pos("IN"), "O"))
            prev = cut
        out.extend(skeleton[prev:])
        return out

    def corpus(self, n_sentences: int, doc_prefix: str, sentences_per_doc: int = 25) -> Corpus:
        rows = []
        doc_ids = []
        for i in range(n_sentences):
            rows.append([Token.make(w, pos, gold) for w, pos, gold in self.sentence()])
            doc_ids.append(f"{doc_prefix}{i // sentences_per_doc}")
        return build_corpus(rows, doc_ids)

    def embed_stream(self, n_sentences: int) -> list[list[str]]:
        return [[w for w, _, _ in self.sentence()] for _ in range(n_sentences)]

    def lexicon(self) -> list[tuple[str, str]]:
        """Partial concept coverage plus distractor background entries."""
        cfg = self.cfg
        n_cover = int(cfg.lexicon_coverage * cfg.concept_vocab)
        covered = self.rng.choice(cfg.concept_vocab, size=n_cover, replace=False)
        pairs = [(self.concepts[int(i)], "DISO") for i in sorted(covered)]
        for first, second in zip(sorted(covered)[:10], sorted(covered)[10:20]):
            pairs.append((f"{self.concepts[int(first)]} {self.concepts[int(second)]}", "DISO"))
        distractors = self.rng.choice(cfg.background_vocab, size=min(30, cfg.background_vocab), replace=False)
        pairs.extend((self.background[0][int(i)], "OTHER") for i in sorted(distractors))
        return pairs


def generate(cfg: SynthConfig = SynthConfig()) -> SynthOutput:
    """Deterministic train/test corpora, embedding stream, and lexicon."""
    gen = _Generator(cfg)
    train = gen.corpus(cfg.n_train, "train-d")
    test = gen.corpus(cfg.n_test, "test-d")
    embed = gen.embed_stream(cfg.n_embed)
    return SynthOutput(train, test, embed, gen.lexicon())
