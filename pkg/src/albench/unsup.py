"""Span vectors, k-means codebooks, and discrete unsupervised features.

Word, bi-gram, and sentence vectors are quantized against k-means
codebooks; the resulting cluster ids are emitted as feature strings for
groups D, G, H (word level, windowed) and J, K, L, M (sequence level).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .corpus import Sentence
from .vectors import EmbeddingTable, LexicalTable, normalize

PAD_TOKEN = "<pad>"


@dataclass(frozen=True)
class SequenceVector:
    """Span representation: unit lexical and word parts plus their normalized concatenation."""

    lex_part: np.ndarray
    word_part: np.ndarray
    combined: np.ndarray


def compose_span_vector(tokens: Sequence[str], emb: EmbeddingTable, lex: LexicalTable) -> SequenceVector:
    """Accumulate-and-normalize token vectors over an ordered span.

    The word part is the zero vector when no span token is in the
    embedding vocabulary; the lexical part always exists.
    """
    if not tokens:
        raise ValueError("empty span")
    lex_sum = np.zeros(lex.dim_lex)
    word_sum = np.zeros(emb.dim)
    for token in tokens:
        lex_sum += lex.token_vector(token)
        if token in emb:
            word_sum += emb[token]
    lex_part = normalize(lex_sum)
    word_part = normalize(word_sum)
    combined = normalize(np.concatenate([lex_part, word_part]))
    return SequenceVector(lex_part, word_part, combined)


def bigram_vector(left: str, right: str, emb: EmbeddingTable, lex: LexicalTable) -> np.ndarray:
    """Combined vector of a token bi-gram; ``<pad>`` contributes no word vector."""
    lex_part = normalize(lex.token_vector(left) + lex.token_vector(right))
    word_sum = np.zeros(emb.dim)
    for token in (left, right):
        if token != PAD_TOKEN and token in emb:
            word_sum += emb[token]
    word_part = normalize(word_sum)
    return normalize(np.concatenate([lex_part, word_part]))


@dataclass
class Codebook:
    centroids: np.ndarray  # (k, dim)
    k: int
    space_tag: str
    seed: int
    objective_trace: list = field(default_factory=list, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(f"{self.k} {self.dim} {self.space_tag} {self.seed}\n")
            for row in self.centroids:
                handle.write(" ".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def load(cls, path: str) -> "Codebook":
        with open(path, encoding="utf-8") as handle:
            header = handle.readline().split()
            if len(header) != 4:
                raise ValueError(f"{path}: bad codebook header")
            k, dim, space_tag, seed = int(header[0]), int(header[1]), header[2], int(header[3])
            rows = [np.array([float(x) for x in line.split()]) for line in handle if line.strip()]
        if len(rows) != k or any(len(r) != dim for r in rows):
            raise ValueError(f"{path}: centroid shape does not match header")
        return cls(np.array(rows), k, space_tag, seed)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[int(rng.integers(n))]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        probs = d2 / total if total > 0 else np.full(n, 1.0 / n)
        idx = int(rng.choice(n, p=probs))
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def kmeans(
    vectors: Sequence[np.ndarray] | np.ndarray,
    k: int,
    seed: int,
    max_iters: int = 100,
    space_tag: str = "generic",
) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding, deterministic given seed.

    Iterates until the assignment reaches a fixpoint or max_iters. The
    within-cluster sum of squares after each assignment step is recorded
    in objective_trace and is non-increasing.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("vectors must be a non-empty 2-D array")
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(np.unique(x, axis=0)) < k:
        raise ValueError(f"fewer than k={k} distinct vectors")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(x, k, rng)
    trace: list[float] = []
    prev = None
    for _ in range(max_iters):
        d2 = cdist(x, centroids, "sqeuclidean")
        assign = np.argmin(d2, axis=1)
        trace.append(float(d2[np.arange(len(x)), assign].sum()))
        if prev is not None and np.array_equal(assign, prev):
            break
        prev = assign
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, x)
        sizes = np.bincount(assign, minlength=k).astype(np.float64)
        occupied = sizes > 0
        centroids[occupied] = sums[occupied] / sizes[occupied, None]
    return Codebook(centroids, k, space_tag, seed, trace)


def assign_cluster(v: np.ndarray, cb: Codebook) -> int:
    """Nearest centroid by Euclidean distance; ties break to the lowest index."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (cb.dim,):
        raise ValueError(f"dimension mismatch: vector {v.shape} vs centroids ({cb.k}, {cb.dim})")
    d2 = ((cb.centroids - v) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def assign_clusters(matrix: np.ndarray, cb: Codebook) -> np.ndarray:
    """Vectorized assign_cluster over the rows of a matrix."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[1] != cb.dim:
        raise ValueError("dimension mismatch")
    return np.argmin(cdist(matrix, cb.centroids, "sqeuclidean"), axis=1)


_GROUP_INVENTORY: dict[str, tuple[str, int, str]] = {
    "D": ("word", 500, "window"),
    "G": ("word", 100, "window"),
    "H": ("lexical", 500, "window"),
    "J": ("bigram", 500, "left-bigram"),
    "K": ("bigram", 500, "right-bigram"),
    "L": ("sentence", 100, "sentence"),
    "M": ("sentence", 500, "sentence"),
}

UNSUP_LETTERS = frozenset(_GROUP_INVENTORY)


@dataclass(frozen=True)
class GroupSpec:
    space: str  # word | lexical | bigram | sentence
    k: int
    apply: str  # window | left-bigram | right-bigram | sentence

    @property
    def codebook_id(self) -> str:
        return f"{self.space}:{self.k}"


@dataclass(frozen=True)
class UnsupFeatureConfig:
    groups: Mapping[str, GroupSpec]

    def required_codebooks(self) -> dict[str, tuple[str, int]]:
        return {spec.codebook_id: (spec.space, spec.k) for spec in self.groups.values()}


def default_unsup_config(letters: Sequence[str], k_by_letter: Mapping[str, int] | None = None) -> UnsupFeatureConfig:
    """Standard group inventory restricted to the requested letters.

    k_by_letter overrides the per-letter cluster counts (desk-scale runs
    use far fewer clusters than the defaults).
    """
    groups = {}
    for letter in letters:
        if letter not in _GROUP_INVENTORY:
            raise ValueError(f"unknown unsupervised feature group {letter!r}")
        space, k, apply = _GROUP_INVENTORY[letter]
        if k_by_letter and letter in k_by_letter:
            k = k_by_letter[letter]
        groups[letter] = GroupSpec(space, k, apply)
    return UnsupFeatureConfig(groups)


def _codebook_for(codebooks: Mapping[str, Codebook], letter: str, spec: GroupSpec) -> Codebook:
    cb = codebooks.get(spec.codebook_id)
    if cb is None:
        raise ValueError(f"missing codebook {spec.codebook_id!r} for enabled group {letter}")
    return cb


def emit_unsup_features(
    sentence: Sentence,
    emb: EmbeddingTable,
    lex: LexicalTable,
    codebooks: Mapping[str, Codebook],
    cfg: UnsupFeatureConfig,
    window: int,
) -> list[set[str]]:
    """Per-token sets of cluster-id feature strings for the enabled groups.

    Window groups attach ``<letter>@<offset>=c<id>`` for every in-range
    offset; bi-gram groups attach the cluster of the (t-1,t) or (t,t+1)
    pair with ``<pad>`` at the sentence edges; sentence groups attach one
    cluster id to every token.
    """
    n = len(sentence.tokens)
    forms = [t.embedding_form for t in sentence.tokens]
    feats: list[set[str]] = [set() for _ in range(n)]

    word_matrix = None
    in_vocab = None
    lex_matrix = None
    pair_matrix = None
    pair_assign_cache: dict[str, np.ndarray] = {}
    sent_vec = None

    for letter in sorted(cfg.groups):
        spec = cfg.groups[letter]
        cb = _codebook_for(codebooks, letter, spec)
        if spec.apply == "window":
            if spec.space == "word":
                if word_matrix is None:
                    in_vocab = [form in emb for form in forms]
                    rows = [normalize(emb[f]) for f, ok in zip(forms, in_vocab) if ok]
                    word_matrix = np.array(rows) if rows else np.zeros((0, emb.dim))
                ids_arr = assign_clusters(word_matrix, cb) if len(word_matrix) else np.array([], dtype=int)
                ids: list[int | None] = []
                at = 0
                for ok in in_vocab:
                    ids.append(int(ids_arr[at]) if ok else None)
                    at += int(ok)
            else:
                if lex_matrix is None:
                    lex_matrix = np.array([lex.token_vector(f) for f in forms])
                ids = [int(c) for c in assign_clusters(lex_matrix, cb)]
            for i in range(n):
                for offset in range(-window, window + 1):
                    j = i + offset
                    if 0 <= j < n and ids[j] is not None:
                        feats[i].add(f"{letter}@{offset}=c{ids[j]}")
        elif spec.apply in ("left-bigram", "right-bigram"):
            if pair_matrix is None:
                padded = [PAD_TOKEN] + forms + [PAD_TOKEN]
                pair_matrix = np.array(
                    [bigram_vector(padded[p], padded[p + 1], emb, lex) for p in range(n + 1)]
                )
            assigned = pair_assign_cache.get(spec.codebook_id)
            if assigned is None:
                assigned = assign_clusters(pair_matrix, cb)
                pair_assign_cache[spec.codebook_id] = assigned
            for i in range(n):
                pair_pos = i if spec.apply == "left-bigram" else i + 1
                feats[i].add(f"{letter}=c{int(assigned[pair_pos])}")
        else:  # whole sentence
            if sent_vec is None:
                sent_vec = compose_span_vector(forms, emb, lex).combined
            cid = assign_cluster(sent_vec, cb)
            for i in range(n):
                feats[i].add(f"{letter}=c{cid}")
    return feats
