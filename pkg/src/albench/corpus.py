"""Data model, ingestion, and unit counting for BIO-labeled token sequences.

The on-disk format is CoNLL-style TSV: one token per line with columns
``surface[<TAB>pos]<TAB>bio-tag``, a blank line between sentences, and
``# doc <id>`` comment lines starting a new document. A corpus is
immutable once ingested and safe to share across threads.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

NUM_TOKEN = "<num>"

_DIGIT_RUN = re.compile(r"\d+")
_DOC_MARKER = re.compile(r"#\s*doc\s+(\S+)")


class CorpusError(ValueError):
    """Malformed corpus input: bad columns, illegal BIO transitions, empty streams."""


def is_punctuation(surface: str) -> bool:
    """True when the token consists solely of non-alphanumeric characters."""
    return bool(surface) and all(not ch.isalnum() for ch in surface)


def preprocess(surface: str) -> str:
    """Normalize a surface form for the vector/feature pipeline.

    Lowercases, replaces every maximal digit run with ``<num>``, and maps
    pure-punctuation tokens to the empty string. Callers drop empty
    results from embedding-training streams but keep the token itself in
    labeled data.
    """
    if is_punctuation(surface):
        return ""
    return _DIGIT_RUN.sub(NUM_TOKEN, surface.lower())


@dataclass(frozen=True)
class Token:
    surface: str
    normalized: str
    pos: str | None = None
    gold: str = "O"

    @staticmethod
    def make(surface: str, pos: str | None = None, gold: str = "O") -> "Token":
        return Token(surface, preprocess(surface), pos, gold)

    @property
    def embedding_form(self) -> str:
        """Form used for vector lookups; punctuation falls back to the lowercased surface."""
        return self.normalized if self.normalized else self.surface.lower()


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    doc_id: str
    seq_id: int

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def gold_labels(self) -> list[str]:
        return [t.gold for t in self.tokens]


@dataclass(frozen=True)
class ConceptSpan:
    concept_type: str
    start: int  # token index, inclusive
    end: int    # token index, inclusive


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    label_alphabet: frozenset[str]
    totals: tuple[int, int, int]  # (sequences, tokens, concepts)

    def __len__(self) -> int:
        return len(self.sentences)

    def subset(self, seq_ids: Iterable[int]) -> list[Sentence]:
        return [self.sentences[i] for i in seq_ids]


def _validate_bio(labels: Sequence[str], where: str) -> None:
    prev = "O"
    for i, label in enumerate(labels):
        if label != "O":
            if len(label) < 3 or label[1] != "-" or label[0] not in "BI":
                raise CorpusError(f"{where}: unknown BIO label {label!r} at position {i}")
            if label[0] == "I" and (prev == "O" or prev[2:] != label[2:]):
                raise CorpusError(
                    f"{where}: I-{label[2:]} at position {i} does not continue a span"
                )
        prev = label


def concept_spans(labels: Sequence[str]) -> list[ConceptSpan]:
    """Maximal B..I runs as inclusive spans.

    An orphan I- label (possible in model output, never in validated gold
    data) leniently opens a new span.
    """
    spans: list[ConceptSpan] = []
    start: int | None = None
    span_type = ""
    for i, label in enumerate(labels):
        if label.startswith("B-"):
            if start is not None:
                spans.append(ConceptSpan(span_type, start, i - 1))
            start, span_type = i, label[2:]
        elif label.startswith("I-"):
            if start is None or span_type != label[2:]:
                if start is not None:
                    spans.append(ConceptSpan(span_type, start, i - 1))
                start, span_type = i, label[2:]
        else:
            if start is not None:
                spans.append(ConceptSpan(span_type, start, i - 1))
                start = None
    if start is not None:
        spans.append(ConceptSpan(span_type, start, len(labels) - 1))
    return spans


def extract_concepts(sentence: Sentence) -> list[ConceptSpan]:
    return concept_spans(sentence.gold_labels)


def count_units(sentences: Iterable[Sentence]) -> tuple[int, int, int]:
    """Exact (sequence, token, concept) counts for a set of sentences."""
    n_seq = n_tok = n_con = 0
    for sent in sentences:
        n_seq += 1
        n_tok += len(sent.tokens)
        n_con += len(extract_concepts(sent))
    return n_seq, n_tok, n_con


def build_corpus(token_rows: Sequence[Sequence[Token]], doc_ids: Sequence[str] | None = None) -> Corpus:
    """Assemble a validated corpus from per-sentence token lists."""
    sentences = []
    labels: set[str] = set()
    for i, tokens in enumerate(token_rows):
        if not tokens:
            raise CorpusError(f"sentence {i}: empty token list")
        doc_id = doc_ids[i] if doc_ids is not None else "doc0"
        _validate_bio([t.gold for t in tokens], f"sentence {i}")
        sentences.append(Sentence(tuple(tokens), doc_id, i))
        labels.update(t.gold for t in tokens)
    if not sentences:
        raise CorpusError("empty input")
    corpus = Corpus(tuple(sentences), frozenset(labels), (0, 0, 0))
    totals = count_units(corpus.sentences)
    return Corpus(corpus.sentences, corpus.label_alphabet, totals)


def read_conll(source: str | TextIO) -> Corpus:
    """Parse CoNLL-style TSV into a validated corpus.

    Raises CorpusError on wrong column counts, illegal BIO transitions,
    or an input with no sentences.
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    token_rows: list[list[Token]] = []
    doc_ids: list[str] = []
    current: list[Token] = []
    doc_id = "doc0"

    def flush() -> None:
        if current:
            token_rows.append(list(current))
            doc_ids.append(doc_id)
            current.clear()

    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if line.startswith("#"):
            match = _DOC_MARKER.match(line)
            if match:
                flush()
                doc_id = match.group(1)
            continue
        if not line.strip():
            flush()
            continue
        cols = line.split("\t")
        if len(cols) == 2:
            surface, pos, gold = cols[0], None, cols[1]
        elif len(cols) == 3:
            surface, pos, gold = cols[0], cols[1], cols[2]
        else:
            raise CorpusError(f"line {line_no}: expected 2 or 3 tab-separated columns, got {len(cols)}")
        if not surface:
            raise CorpusError(f"line {line_no}: empty surface form")
        current.append(Token.make(surface, pos, gold))
    flush()
    if not token_rows:
        raise CorpusError("empty input")
    return build_corpus(token_rows, doc_ids)


def read_conll_file(path: str) -> Corpus:
    with open(path, encoding="utf-8") as handle:
        return read_conll(handle)


def write_conll(corpus: Corpus) -> str:
    """Serialize a corpus; read_conll(write_conll(c)) reproduces c exactly."""
    out: list[str] = []
    last_doc: str | None = None
    for sent in corpus.sentences:
        if sent.doc_id != last_doc:
            out.append(f"# doc {sent.doc_id}")
            last_doc = sent.doc_id
        for tok in sent.tokens:
            if tok.pos is None:
                out.append(f"{tok.surface}\t{tok.gold}")
            else:
                out.append(f"{tok.surface}\t{tok.pos}\t{tok.gold}")
        out.append("")
    return "\n".join(out) + "\n"


def write_conll_file(corpus: Corpus, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(write_conll(corpus))
