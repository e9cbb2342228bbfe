"""Hand-crafted baseline feature groups A, B, C and per-token feature assembly.

Group A covers identity/orthographic/affix/character-n-gram templates plus
a context window, group B part-of-speech templates, and group C semantic
tags from a longest-match lexicon.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .corpus import Sentence, is_punctuation, preprocess

BASELINE_LETTERS = frozenset("ABC")
ALL_LETTERS = frozenset("ABCDGHJKLM")


@dataclass(frozen=True)
class FeatureGroupConfig:
    letters: frozenset = frozenset("ABC")
    window: int = 2
    affix_lengths: tuple[int, ...] = (1, 2, 3, 4)
    ortho_inventory: str = "default"

    def __post_init__(self) -> None:
        unknown = set(self.letters) - ALL_LETTERS
        if unknown:
            raise ValueError(f"unknown feature letters: {sorted(unknown)}")
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.ortho_inventory != "default":
            raise ValueError(f"unknown orthographic inventory {self.ortho_inventory!r}")


@dataclass
class Lexicon:
    """Normalized multi-token terms mapped to semantic group tags."""

    entries: dict = field(default_factory=dict)  # tuple[str, ...] -> tag
    max_len: int = 0

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, str]]) -> "Lexicon":
        entries: dict[tuple[str, ...], str] = {}
        for term, tag in pairs:
            key = tuple(t for t in (preprocess(w) for w in term.split(" ")) if t)
            if key:
                entries[key] = tag
        max_len = max((len(k) for k in entries), default=0)
        return cls(entries, max_len)

    @classmethod
    def load(cls, path: str) -> "Lexicon":
        pairs = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                term, _, tag = line.partition("\t")
                if not tag:
                    raise ValueError(f"{path}: lexicon line needs 'term<TAB>group': {line!r}")
                pairs.append((term, tag))
        return cls.from_pairs(pairs)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            for key, tag in self.entries.items():
                handle.write(" ".join(key) + "\t" + tag + "\n")


def semantic_spans(sentence: Sentence, lexicon: Lexicon) -> list[tuple[str | None, int]]:
    """Greedy left-to-right longest-match tagging over normalized tokens.

    Returns one (group tag, matched span length) pair per token;
    uncovered tokens get (None, 0). Matched spans never overlap.
    """
    forms = [t.normalized for t in sentence.tokens]
    n = len(forms)
    out: list[tuple[str | None, int]] = [(None, 0)] * n
    if not lexicon.entries:
        return out
    i = 0
    while i < n:
        matched = 0
        tag = None
        for length in range(min(lexicon.max_len, n - i), 0, -1):
            candidate = tuple(forms[i : i + length])
            hit = lexicon.entries.get(candidate)
            if hit is not None:
                matched, tag = length, hit
                break
        if matched:
            for j in range(i, i + matched):
                out[j] = (tag, matched)
            i += matched
        else:
            i += 1
    return out


def word_shape(surface: str) -> str:
    return "".join(
        "x" if ch.islower() else "X" if ch.isupper() else "0" if ch.isdigit() else ch
        for ch in surface
    )


def emit_group_a(sentence: Sentence, cfg: FeatureGroupConfig) -> list[set[str]]:
    """Identity (windowed), orthographic shape flags, affixes, character n-grams."""
    lowers = [t.surface.lower() for t in sentence.tokens]
    n = len(lowers)
    feats: list[set[str]] = [set() for _ in range(n)]
    for i, token in enumerate(sentence.tokens):
        surface = token.surface
        low = lowers[i]
        out = feats[i]
        out.add(f"A:shape={word_shape(surface)}")
        if surface[0].isupper():
            out.add("A:initcap")
        if surface.isupper():
            out.add("A:allcaps")
        if any(ch.isdigit() for ch in surface):
            out.add("A:hasdigit")
        if any(ch.isalpha() for ch in surface) and any(ch.isdigit() for ch in surface):
            out.add("A:alnummix")
        if is_punctuation(surface):
            out.add("A:punct")
        for length in cfg.affix_lengths:
            if len(low) >= length:
                out.add(f"A:pre{length}={low[:length]}")
                out.add(f"A:suf{length}={low[-length:]}")
        for order in (2, 3):
            for j in range(len(low) - order + 1):
                out.add(f"A:cg{order}={low[j:j + order]}")
        for offset in range(-cfg.window, cfg.window + 1):
            j = i + offset
            if 0 <= j < n:
                out.add(f"A:w@{offset}={lowers[j]}")
    return feats


def sentence_has_pos(sentence: Sentence) -> bool:
    return all(t.pos is not None for t in sentence.tokens)


def emit_group_b(sentence: Sentence, cfg: FeatureGroupConfig) -> list[set[str]]:
    """POS tags over the window plus adjacent-tag bi-grams; empty when POS is missing."""
    n = len(sentence.tokens)
    if not sentence_has_pos(sentence):
        return [set() for _ in range(n)]
    tags = [t.pos for t in sentence.tokens]
    feats: list[set[str]] = [set() for _ in range(n)]
    for i in range(n):
        for offset in range(-cfg.window, cfg.window + 1):
            j = i + offset
            if 0 <= j < n:
                feats[i].add(f"B:pos@{offset}={tags[j]}")
        if i >= 1:
            feats[i].add(f"B:posbi={tags[i - 1]}_{tags[i]}")
    return feats


def emit_group_c(sentence: Sentence, lexicon: Lexicon, cfg: FeatureGroupConfig) -> list[set[str]]:
    """Windowed semantic-group tags from longest-match lexicon coverage."""
    tags = [tag if tag is not None else "NONE" for tag, _ in semantic_spans(sentence, lexicon)]
    n = len(tags)
    feats: list[set[str]] = [set() for _ in range(n)]
    for i in range(n):
        for offset in range(-cfg.window, cfg.window + 1):
            j = i + offset
            if 0 <= j < n:
                feats[i].add(f"C:sem@{offset}={tags[j]}")
    return feats


UnsupEmitter = Callable[[Sentence], list]


def assemble(
    sentence: Sentence,
    cfg: FeatureGroupConfig,
    lexicon: Lexicon | None = None,
    unsup_emitter: UnsupEmitter | None = None,
) -> list[tuple[str, ...]]:
    """Union of all enabled groups per token, deduplicated and sorted.

    Sorting fixes the iteration order so downstream feature alphabets are
    reproducible. Unsupervised strings are filtered to the enabled letters.
    """
    n = len(sentence.tokens)
    merged: list[set[str]] = [set() for _ in range(n)]

    def absorb(parts: Sequence[set[str]]) -> None:
        for dst, src in zip(merged, parts):
            dst.update(src)

    if "A" in cfg.letters:
        absorb(emit_group_a(sentence, cfg))
    if "B" in cfg.letters:
        absorb(emit_group_b(sentence, cfg))
    if "C" in cfg.letters:
        absorb(emit_group_c(sentence, lexicon if lexicon is not None else Lexicon(), cfg))
    unsup_letters = set(cfg.letters) - BASELINE_LETTERS
    if unsup_letters:
        if unsup_emitter is None:
            raise ValueError(f"groups {sorted(unsup_letters)} enabled but no unsupervised emitter given")
        for dst, src in zip(merged, unsup_emitter(sentence)):
            dst.update(s for s in src if s[0] in unsup_letters)
    return [tuple(sorted(s)) for s in merged]
