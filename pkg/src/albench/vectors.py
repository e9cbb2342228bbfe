"""Skip-gram word embeddings and character n-gram lexical vectors.

Both vector families are deterministic: skip-gram training is seeded and
single-threaded by default, and lexical n-gram vectors are pure functions
of (n-gram, seed, dimension), so a lexical table needs no training and
covers every token without an OOV case.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

BOUNDARY_START = "^"
BOUNDARY_END = "$"
WILDCARD = "_"


def normalize(v: np.ndarray) -> np.ndarray:
    """Unit-normalize; vectors with negligible norm map to the zero vector."""
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        return np.zeros_like(v)
    return v / n


@dataclass(frozen=True)
class NgramConfig:
    """Character n-gram inventory: which orders to emit plus wildcard skip-grams."""

    orders: tuple[int, ...] = (1, 2, 3, 4)
    skip_grams: bool = True

    def cache_key(self) -> str:
        return f"orders={','.join(map(str, self.orders))};skip={int(self.skip_grams)}"


def char_ngrams(token: str, config: NgramConfig = NgramConfig()) -> Counter:
    """Multiset of character n-gram keys for one token.

    Uni-grams are taken over the raw characters; higher orders over the
    token padded with ``^``/``$``. Skip-grams replace the middle of each
    padded tri-gram with ``_``, except the degenerate all-boundary
    tri-gram of single-character tokens.
    """
    if not token:
        raise ValueError("empty token")
    grams: Counter = Counter()
    if 1 in config.orders:
        grams.update(token)
    padded = BOUNDARY_START + token + BOUNDARY_END
    for order in config.orders:
        if order < 2:
            continue
        for i in range(len(padded) - order + 1):
            grams[padded[i : i + order]] += 1
    if config.skip_grams:
        for i in range(len(padded) - 2):
            x, z = padded[i], padded[i + 2]
            if x == BOUNDARY_START and z == BOUNDARY_END:
                continue
            grams[x + WILDCARD + z] += 1
    return grams


@dataclass
class LexicalTable:
    """Fixed pseudo-random unit vectors for character n-grams.

    The vector for an n-gram is a pure function of (n-gram, seed, dim_lex),
    so only the parameters need persisting; vectors regenerate on demand.
    """

    dim_lex: int = 40
    seed: int = 13
    config: NgramConfig = field(default_factory=NgramConfig)
    _gram_cache: dict = field(default_factory=dict, repr=False, compare=False)
    _token_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def ngram_vector(self, gram: str) -> np.ndarray:
        vec = self._gram_cache.get(gram)
        if vec is None:
            digest = hashlib.blake2b(
                f"{self.seed}|{gram}".encode("utf-8"), digest_size=8
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "big"))
            raw = rng.standard_normal(self.dim_lex)
            vec = normalize(raw)
            self._gram_cache[gram] = vec
        return vec

    def token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            vec = lexical_vector(token, self)
            self._token_cache[token] = vec
        return vec

    def save_meta(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(f"dim_lex={self.dim_lex}\n")
            handle.write(f"seed={self.seed}\n")
            handle.write(f"orders={','.join(map(str, self.config.orders))}\n")
            handle.write(f"skip_grams={int(self.config.skip_grams)}\n")

    @classmethod
    def load_meta(cls, path: str) -> "LexicalTable":
        values: dict[str, str] = {}
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                key, _, value = line.strip().partition("=")
                values[key] = value
        config = NgramConfig(
            orders=tuple(int(x) for x in values["orders"].split(",") if x),
            skip_grams=bool(int(values["skip_grams"])),
        )
        return cls(dim_lex=int(values["dim_lex"]), seed=int(values["seed"]), config=config)


def lexical_vector(token: str, table: LexicalTable) -> np.ndarray:
    """Unit vector for a token: normalized sum of its n-gram vectors."""
    if not token:
        raise ValueError("empty token")
    total = np.zeros(table.dim_lex)
    for gram, count in char_ngrams(token, table.config).items():
        total += count * table.ngram_vector(gram)
    return normalize(total)


@dataclass(frozen=True)
class SkipgramParams:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    min_count: int = 2
    seed: int = 11
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    subsample: float = 0.0
    workers: int = 1


@dataclass
class EmbeddingTable:
    vectors: dict
    dim: int
    params: SkipgramParams
    epoch_losses: list = field(default_factory=list)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __getitem__(self, token: str) -> np.ndarray:
        return self.vectors[token]

    def __len__(self) -> int:
        return len(self.vectors)

    def save(self, path: str) -> None:
        """Text format: header ``<vocab_size> <dim>`` then one token per line."""
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(f"{len(self.vectors)} {self.dim}\n")
            for token, vec in self.vectors.items():
                handle.write(token + " " + " ".join(repr(float(x)) for x in vec) + "\n")

    @classmethod
    def load(cls, path: str, params: SkipgramParams | None = None) -> "EmbeddingTable":
        with open(path, encoding="utf-8") as handle:
            header = handle.readline().split()
            if len(header) != 2:
                raise ValueError(f"{path}: bad embedding header")
            size, dim = int(header[0]), int(header[1])
            vectors: dict[str, np.ndarray] = {}
            for line in handle:
                parts = line.rstrip("\n").split(" ")
                if len(parts) != dim + 1:
                    raise ValueError(f"{path}: bad embedding row for {parts[0]!r}")
                vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
        if len(vectors) != size:
            raise ValueError(f"{path}: header promises {size} rows, found {len(vectors)}")
        return cls(vectors, dim, params or SkipgramParams(dim=dim))


def _log_sigmoid_loss(scores: np.ndarray) -> float:
    # -log sigma(s) for the positive column, -log sigma(-s) for negatives
    pos = np.logaddexp(0.0, -scores[:, 0]).sum()
    neg = np.logaddexp(0.0, scores[:, 1:]).sum()
    return float(pos + neg)


def _train_batch(
    sentences: Sequence[np.ndarray],
    w_in: np.ndarray,
    w_out: np.ndarray,
    window: int,
    negatives: int,
    lr0: float,
    lr_min: float,
    cum_noise: np.ndarray,
    rng: np.random.Generator,
    progress_start: int,
    total_words: int,
    keep_prob: np.ndarray | None,
) -> tuple[float, int]:
    loss = 0.0
    pairs_done = 0
    processed = progress_start
    n_vocab = w_in.shape[0]
    for enc in sentences:
        processed += len(enc)
        if keep_prob is not None:
            enc = enc[rng.random(len(enc)) < keep_prob[enc]]
        n = len(enc)
        if n < 1:
            continue
        lr = max(lr_min, lr0 * (1.0 - processed / (total_words + 1.0)))
        spans = rng.integers(1, window + 1, size=n)
        centers: list[int] = []
        contexts: list[int] = []
        for i in range(n):
            lo = max(0, i - int(spans[i]))
            hi = min(n, i + int(spans[i]) + 1)
            for j in range(lo, hi):
                if j != i:
                    centers.append(int(enc[i]))
                    contexts.append(int(enc[j]))
        if not centers:
            continue
        ctr = np.asarray(centers, dtype=np.intp)
        pos = np.asarray(contexts, dtype=np.intp)
        n_pairs = len(ctr)
        if negatives > 0 and n_vocab > 0:
            draws = rng.random((n_pairs, negatives))
            neg = np.searchsorted(cum_noise, draws)
            outs = np.concatenate([pos[:, None], neg], axis=1)
        else:
            outs = pos[:, None]
        h = w_in[ctr]                       # (P, d)
        u = w_out[outs]                     # (P, 1+k, d)
        scores = np.einsum("pd,pkd->pk", h, u)
        loss += _log_sigmoid_loss(scores)
        sig = 1.0 / (1.0 + np.exp(-scores))
        sig[:, 0] -= 1.0                    # gradient factor (sigma - target)
        grad = sig * lr
        grad_h = np.einsum("pk,pkd->pd", grad, u)
        grad_u = grad[:, :, None] * h[:, None, :]
        np.add.at(w_in, ctr, -grad_h)
        np.add.at(w_out, outs.ravel(), -grad_u.reshape(-1, h.shape[1]))
        pairs_done += n_pairs
    return loss, pairs_done


def train_skipgram(
    stream: Iterable[Sequence[str]],
    dim: int = 100,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    min_count: int = 2,
    seed: int = 11,
    learning_rate: float = 0.025,
    min_learning_rate: float = 1e-4,
    subsample: float = 0.0,
    workers: int = 1,
) -> EmbeddingTable:
    """Train skip-gram embeddings with negative sampling.

    With workers=1 the result is bit-identical for identical inputs and
    seed. workers>1 applies unsynchronized concurrent updates and trades
    reproducibility for speed.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    sentences = [list(s) for s in stream if s]
    counts: Counter = Counter()
    for sent in sentences:
        counts.update(sent)
    vocab = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    if not vocab:
        raise ValueError("empty effective vocabulary")
    index = {t: i for i, t in enumerate(vocab)}
    freqs = np.array([counts[t] for t in vocab], dtype=np.float64)

    encoded = []
    for sent in sentences:
        enc = np.array([index[t] for t in sent if t in index], dtype=np.intp)
        if len(enc):
            encoded.append(enc)
    if not encoded:
        raise ValueError("empty effective vocabulary")

    noise = freqs ** 0.75
    cum_noise = np.cumsum(noise / noise.sum())
    cum_noise[-1] = 1.0

    keep_prob = None
    if subsample > 0.0:
        rel = freqs / freqs.sum()
        keep_prob = np.minimum(1.0, np.sqrt(subsample / rel) + subsample / rel)

    rng = np.random.default_rng(seed)
    w_in = (rng.random((len(vocab), dim)) - 0.5) / dim
    w_out = np.zeros((len(vocab), dim))

    total_words = sum(len(e) for e in encoded) * epochs
    epoch_losses: list[float] = []
    processed = 0
    for _ in range(epochs):
        if workers <= 1:
            loss, pairs = _train_batch(
                encoded, w_in, w_out, window, negatives, learning_rate,
                min_learning_rate, cum_noise, rng, processed, total_words, keep_prob,
            )
        else:
            chunks = [encoded[i::workers] for i in range(workers)]
            child_rngs = rng.spawn(workers)
            loss = 0.0
            pairs = 0
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(
                        _train_batch, chunk, w_in, w_out, window, negatives,
                        learning_rate, min_learning_rate, cum_noise, child,
                        processed, total_words, keep_prob,
                    )
                    for chunk, child in zip(chunks, child_rngs)
                ]
                for fut in futures:
                    chunk_loss, chunk_pairs = fut.result()
                    loss += chunk_loss
                    pairs += chunk_pairs
        processed += sum(len(e) for e in encoded)
        epoch_losses.append(loss / max(1, pairs))

    params = SkipgramParams(
        dim=dim, window=window, negatives=negatives, epochs=epochs,
        min_count=min_count, seed=seed, learning_rate=learning_rate,
        min_learning_rate=min_learning_rate, subsample=subsample, workers=workers,
    )
    vectors = {t: w_in[i].copy() for t, i in index.items()}
    return EmbeddingTable(vectors, dim, params, epoch_losses)
