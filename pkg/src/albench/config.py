"""Flat key=value run configuration with section prefixes.

Every field has a default; unknown keys are rejected so that manifests
and config files stay diff-friendly and typo-proof. Values serialize
with repr-style floats so a round-trip through text is exact.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields


class ConfigError(ValueError):
    """Bad configuration: unknown key, unparsable value, missing requirement."""


@dataclass
class PathsConfig:
    train: str = ""
    test: str = ""
    embed_corpus: str = ""   # comma-separated list, concatenated in order
    lexicon: str = ""
    cache_dir: str = ""      # empty: $ALBENCH_CACHE_DIR or <out_dir>/cache
    out_dir: str = "out"


@dataclass
class FeaturesConfig:
    letters: str = "ABC"
    window: int = 2
    affix_lengths: str = "1,2,3,4"


@dataclass
class VectorsConfig:
    dim: int = 100
    dim_lex: int = 40
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    min_count: int = 2
    seed: int = 11
    lex_seed: int = 13
    learning_rate: float = 0.025
    subsample: float = 0.0
    workers: int = 1


@dataclass
class UnsupConfig:
    k_word_fine: int = 500       # group D
    k_word_coarse: int = 100     # group G
    k_lexical: int = 500         # group H
    k_bigram: int = 500          # groups J, K
    k_sentence_coarse: int = 100 # group L
    k_sentence_fine: int = 500   # group M
    kmeans_max_iters: int = 100
    seed: int = 17
    max_bigrams: int = 20000
    max_sentences: int = 20000


@dataclass
class CrfSection:
    sigma2: float = 10.0
    max_iterations: int = 300
    tolerance: float = 1e-6


@dataclass
class AlSection:
    strategy: str = "lc"
    init_fraction: float = 0.005
    batch_fraction: float = 0.005
    seed: int = 23
    target_f1: float = -1.0      # negative: auto-compute with a supervised run
    density_exponent: float = 1.0
    dki_lambda: float = 0.5
    max_iterations: int = 0      # 0: run until the pool is exhausted
    ttest_seed: int = 31


@dataclass
class SynthSection:
    seed: int = 7
    n_train: int = 2000
    n_test: int = 400
    n_embed: int = 8000
    background_vocab: int = 250
    concept_vocab: int = 500
    suffix_prob: float = 0.35
    zipf_exponent: float = 1.0
    confusable: int = 1            # background class 0 shares concept suffixes
    trigger_prob: float = 0.5
    post_prob: float = 0.5
    false_trigger_rate: float = 0.3
    lexicon_coverage: float = 0.5
    min_len: int = 6
    max_len: int = 12


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    features: FeaturesConfig = field(default_factory=FeaturesConfig)
    vectors: VectorsConfig = field(default_factory=VectorsConfig)
    unsup: UnsupConfig = field(default_factory=UnsupConfig)
    crf: CrfSection = field(default_factory=CrfSection)
    al: AlSection = field(default_factory=AlSection)
    synth: SynthSection = field(default_factory=SynthSection)

    def set(self, key: str, value: str) -> None:
        section_name, _, field_name = key.partition(".")
        if not field_name:
            raise ConfigError(f"key {key!r} is not of the form section.key")
        section = getattr(self, section_name, None)
        if section is None or not dataclasses.is_dataclass(section):
            raise ConfigError(f"unknown config section {section_name!r}")
        spec = {f.name: f for f in fields(section)}.get(field_name)
        if spec is None:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if spec.type in ("int", int):
                parsed: object = int(value)
            elif spec.type in ("float", float):
                parsed = float(value)
            else:
                parsed = value
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
        setattr(section, field_name, parsed)

    def to_lines(self) -> list[str]:
        lines = []
        for section_field in fields(self):
            section = getattr(self, section_field.name)
            for spec in fields(section):
                value = getattr(section, spec.name)
                text = repr(value) if isinstance(value, float) else str(value)
                lines.append(f"{section_field.name}.{spec.name}={text}")
        return lines

    def to_flat(self) -> dict:
        out = {}
        for line in self.to_lines():
            key, _, value = line.partition("=")
            out[key] = value
        return out

    @classmethod
    def from_lines(cls, lines, base: "RunConfig | None" = None) -> "RunConfig":
        cfg = base if base is not None else cls()
        for line_no, raw in enumerate(lines, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {line_no}: expected key=value, got {line!r}")
            cfg.set(key.strip(), value.strip())
        return cfg

    @classmethod
    def from_file(cls, path: str, base: "RunConfig | None" = None) -> "RunConfig":
        with open(path, encoding="utf-8") as handle:
            return cls.from_lines(handle, base=base)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(self.to_lines()) + "\n")

    # Convenience accessors ------------------------------------------------

    def feature_letters(self) -> frozenset:
        return frozenset(self.features.letters)

    def affix_lengths(self) -> tuple[int, ...]:
        try:
            return tuple(int(x) for x in self.features.affix_lengths.split(",") if x)
        except ValueError as exc:
            raise ConfigError(f"bad features.affix_lengths: {self.features.affix_lengths!r}") from exc

    def embed_corpus_paths(self) -> list[str]:
        return [p for p in self.paths.embed_corpus.split(",") if p]

    def k_by_letter(self) -> dict:
        return {
            "D": self.unsup.k_word_fine,
            "G": self.unsup.k_word_coarse,
            "H": self.unsup.k_lexical,
            "J": self.unsup.k_bigram,
            "K": self.unsup.k_bigram,
            "L": self.unsup.k_sentence_coarse,
            "M": self.unsup.k_sentence_fine,
        }
