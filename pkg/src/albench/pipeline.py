"""Artifact construction shared by the CLI commands.

Embeddings and codebooks are cached under content-addressed keys that
cover every hyperparameter affecting the artifact, so reruns with an
unchanged configuration are cache hits and any parameter change is a
cache miss. Cache writes go through a lock file so concurrent
invocations on disjoint keys are safe.
"""

from __future__ import annotations

import hashlib
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from filelock import FileLock

from . import unsup
from .config import ConfigError, RunConfig
from .corpus import Corpus, Sentence, preprocess
from .featgen import FeatureGroupConfig, Lexicon, assemble, sentence_has_pos
from .unsup import Codebook, UnsupFeatureConfig, default_unsup_config
from .vectors import EmbeddingTable, LexicalTable, NgramConfig, train_skipgram

CACHE_ENV_VAR = "ALBENCH_CACHE_DIR"


class DataError(RuntimeError):
    """Missing or unreadable input data."""


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as handle:
            for chunk in iter(lambda: handle.read(1 << 20), b""):
                digest.update(chunk)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return digest.hexdigest()


def short_key(*parts: str) -> str:
    return hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()[:16]


def cache_dir_for(cfg: RunConfig) -> Path:
    if cfg.paths.cache_dir:
        path = Path(cfg.paths.cache_dir)
    elif os.environ.get(CACHE_ENV_VAR):
        path = Path(os.environ[CACHE_ENV_VAR])
    else:
        path = Path(cfg.paths.out_dir) / "cache"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cache_lock(cache: Path) -> FileLock:
    return FileLock(str(cache / ".lock"))


def load_embed_sentences(paths: Sequence[str]) -> list[list[str]]:
    """Whitespace-tokenized sentences, preprocessed, punctuation dropped."""
    sentences = []
    for path in paths:
        if not os.path.exists(path):
            raise DataError(f"missing embedding corpus {path}")
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                tokens = [preprocess(t) for t in line.split()]
                tokens = [t for t in tokens if t]
                if tokens:
                    sentences.append(tokens)
    if not sentences:
        raise DataError("embedding corpus is empty after preprocessing")
    return sentences


def embeddings_key(cfg: RunConfig, corpus_hashes: Sequence[str]) -> str:
    v = cfg.vectors
    return short_key(
        "embeddings",
        *corpus_hashes,
        f"dim={v.dim}",
        f"window={v.window}",
        f"negatives={v.negatives}",
        f"epochs={v.epochs}",
        f"min_count={v.min_count}",
        f"seed={v.seed}",
        f"lr={v.learning_rate!r}",
        f"subsample={v.subsample!r}",
        f"workers={v.workers}",
    )


def lexical_table_for(cfg: RunConfig) -> LexicalTable:
    return LexicalTable(dim_lex=cfg.vectors.dim_lex, seed=cfg.vectors.lex_seed, config=NgramConfig())


def get_embeddings(cfg: RunConfig, warnings: list | None = None, require_cached: bool = False):
    """Load or train embeddings; returns (table, lexical_table, key, cache_hit)."""
    paths = cfg.embed_corpus_paths()
    if not paths:
        raise ConfigError("paths.embed_corpus is required for embedding-backed features")
    hashes = [file_sha256(p) for p in paths]
    key = embeddings_key(cfg, hashes)
    cache = cache_dir_for(cfg)
    target = cache / f"emb_{key}.txt"
    lex = lexical_table_for(cfg)
    if target.exists():
        try:
            return EmbeddingTable.load(str(target)), lex, key, True
        except ValueError as exc:
            if warnings is not None:
                warnings.append(f"corrupt embedding cache entry {target.name}: {exc}; rebuilding")
    if require_cached:
        raise DataError(f"missing embeddings (expected cache entry {target.name})")
    sentences = load_embed_sentences(paths)
    v = cfg.vectors
    table = train_skipgram(
        sentences,
        dim=v.dim, window=v.window, negatives=v.negatives, epochs=v.epochs,
        min_count=v.min_count, seed=v.seed, learning_rate=v.learning_rate,
        subsample=v.subsample, workers=v.workers,
    )
    with _cache_lock(cache):
        tmp = target.with_suffix(".tmp")
        table.save(str(tmp))
        os.replace(tmp, target)
    return table, lex, key, False


def _space_vectors(
    space: str,
    emb: EmbeddingTable,
    lex: LexicalTable,
    embed_sentences: Sequence[Sequence[str]],
    cfg: RunConfig,
) -> np.ndarray:
    if space == "word":
        return np.array([unsup.normalize(emb[t]) for t in emb.vectors])
    if space == "lexical":
        return np.array([lex.token_vector(t) for t in emb.vectors])
    if space == "bigram":
        pair_counts: Counter = Counter()
        for sent in embed_sentences:
            pair_counts.update(zip(sent, sent[1:]))
        ranked = sorted(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        pairs = [pair for pair, _ in ranked[: cfg.unsup.max_bigrams]]
        return np.array([unsup.bigram_vector(a, b, emb, lex) for a, b in pairs])
    if space == "sentence":
        chosen = embed_sentences[: cfg.unsup.max_sentences]
        return np.array([unsup.compose_span_vector(s, emb, lex).combined for s in chosen])
    raise ValueError(f"unknown vector space {space!r}")


def codebook_key(cfg: RunConfig, emb_key: str, space: str, k: int) -> str:
    u = cfg.unsup
    return short_key(
        "codebook", emb_key, space, f"k={k}",
        f"seed={u.seed}", f"iters={u.kmeans_max_iters}",
        f"dim_lex={cfg.vectors.dim_lex}", f"lex_seed={cfg.vectors.lex_seed}",
        f"max_bigrams={u.max_bigrams}", f"max_sentences={u.max_sentences}",
    )


def get_codebooks(
    cfg: RunConfig,
    emb: EmbeddingTable,
    lex: LexicalTable,
    emb_key: str,
    warnings: list | None = None,
    require_cached: bool = False,
):
    """Codebooks for every enabled unsupervised letter, keyed by codebook id.

    Returns (codebooks, unsup_config, artifact key map).
    """
    letters = sorted(cfg.feature_letters() & unsup.UNSUP_LETTERS)
    ucfg = default_unsup_config(letters, cfg.k_by_letter())
    cache = cache_dir_for(cfg)
    books: dict[str, Codebook] = {}
    keys: dict[str, str] = {}
    embed_sentences: list[list[str]] | None = None
    for cb_id, (space, k) in sorted(ucfg.required_codebooks().items()):
        key = codebook_key(cfg, emb_key, space, k)
        keys[cb_id] = key
        target = cache / f"cb_{key}.txt"
        if target.exists():
            try:
                books[cb_id] = Codebook.load(str(target))
                continue
            except ValueError as exc:
                if warnings is not None:
                    warnings.append(f"corrupt codebook cache entry {target.name}: {exc}; rebuilding")
        if require_cached:
            raise DataError(f"missing codebook for group(s) needing {cb_id} (cache entry {target.name})")
        if embed_sentences is None:
            embed_sentences = load_embed_sentences(cfg.embed_corpus_paths())
        vectors = _space_vectors(space, emb, lex, embed_sentences, cfg)
        if len(np.unique(vectors, axis=0)) < k:
            raise DataError(
                f"cannot build {cb_id} codebook: fewer than k={k} distinct vectors; "
                f"lower the unsup k settings for this corpus"
            )
        book = unsup.kmeans(vectors, k, cfg.unsup.seed, cfg.unsup.kmeans_max_iters, space_tag=space)
        with _cache_lock(cache):
            tmp = target.with_suffix(".tmp")
            book.save(str(tmp))
            os.replace(tmp, target)
        books[cb_id] = book
    return books, ucfg, keys


@dataclass
class Featurizer:
    """Callable sentence featurizer bundling the configured emitters."""

    group_config: FeatureGroupConfig
    lexicon: Lexicon | None = None
    emb: EmbeddingTable | None = None
    lex: LexicalTable | None = None
    codebooks: dict = field(default_factory=dict)
    unsup_config: UnsupFeatureConfig | None = None

    def __call__(self, sentence: Sentence):
        emitter = None
        if self.unsup_config is not None and self.unsup_config.groups:
            emitter = lambda s: unsup.emit_unsup_features(
                s, self.emb, self.lex, self.codebooks, self.unsup_config,
                self.group_config.window,
            )
        return assemble(sentence, self.group_config, self.lexicon, emitter)


def build_featurizer(cfg: RunConfig, warnings: list | None = None):
    """Assemble the featurizer for the configured letters; returns (featurizer, artifacts).

    artifacts maps artifact names to cache keys for the run manifest.
    """
    letters = cfg.feature_letters()
    group_config = FeatureGroupConfig(
        letters=letters, window=cfg.features.window, affix_lengths=cfg.affix_lengths()
    )
    lexicon = None
    if cfg.paths.lexicon:
        if not os.path.exists(cfg.paths.lexicon):
            raise DataError(f"missing lexicon {cfg.paths.lexicon}")
        lexicon = Lexicon.load(cfg.paths.lexicon)
    artifacts: dict[str, str] = {}
    featurizer = Featurizer(group_config, lexicon)
    if letters & unsup.UNSUP_LETTERS:
        emb, lex, emb_key, _ = get_embeddings(cfg, warnings)
        books, ucfg, cb_keys = get_codebooks(cfg, emb, lex, emb_key, warnings)
        artifacts["embeddings"] = emb_key
        artifacts.update({f"codebook:{k}": v for k, v in cb_keys.items()})
        featurizer.emb, featurizer.lex = emb, lex
        featurizer.codebooks, featurizer.unsup_config = books, ucfg
    return featurizer, artifacts


def check_group_b(corpus: Corpus, letters: frozenset, warnings: list) -> None:
    if "B" in letters and not all(sentence_has_pos(s) for s in corpus.sentences):
        warnings.append("group B enabled but POS column incomplete; B features disabled for affected sentences")


def sequence_reps(corpus: Corpus, emb: EmbeddingTable, lex: LexicalTable) -> dict:
    """Combined sentence vectors keyed by seq_id (for similarity-based strategies)."""
    reps = {}
    for sent in corpus.sentences:
        forms = [t.embedding_form for t in sent.tokens]
        reps[sent.seq_id] = unsup.compose_span_vector(forms, emb, lex).combined
    return reps
