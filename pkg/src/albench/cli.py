"""Command-line entry point.

Subcommands: synth, train-embeddings, build-codebooks, supervised, al,
report, ttest. Exit code 0 on success, 1 on configuration errors, 2 on
data errors. All outputs land under --out-dir; the cache directory can
be overridden with $ALBENCH_CACHE_DIR.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import alloop, crf, strategies, unsup
from .config import ConfigError, RunConfig
from .corpus import CorpusError, concept_spans, read_conll_file, write_conll_file
from .evaluation import five_by_two_ttest, phrase_prf
from .featgen import Lexicon
from .manifest import RunManifest, write_history_csv
from .pipeline import (
    DataError,
    build_featurizer,
    check_group_b,
    file_sha256,
    get_codebooks,
    get_embeddings,
    sequence_reps,
)
from .synth import SynthConfig, generate

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2


def _load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = RunConfig.from_file(args.config, base=cfg)
    for override in args.set or []:
        key, sep, value = override.partition("=")
        if not sep:
            raise ConfigError(f"--set needs key=value, got {override!r}")
        cfg.set(key.strip(), value.strip())
    if getattr(args, "out_dir", None):
        cfg.paths.out_dir = args.out_dir
    Path(cfg.paths.out_dir).mkdir(parents=True, exist_ok=True)
    return cfg


def _input_hashes(cfg: RunConfig) -> dict:
    hashes = {}
    if cfg.paths.train:
        hashes["train"] = file_sha256(cfg.paths.train)
    if cfg.paths.test:
        hashes["test"] = file_sha256(cfg.paths.test)
    if cfg.paths.lexicon:
        hashes["lexicon"] = file_sha256(cfg.paths.lexicon)
    for i, path in enumerate(cfg.embed_corpus_paths()):
        hashes[f"embed_corpus.{i}"] = file_sha256(path)
    return hashes


def cmd_synth(cfg: RunConfig, args) -> int:
    s = cfg.synth
    synth_cfg = SynthConfig(
        seed=s.seed, n_train=s.n_train, n_test=s.n_test, n_embed=s.n_embed,
        background_vocab=s.background_vocab, concept_vocab=s.concept_vocab,
        suffix_prob=s.suffix_prob, zipf_exponent=s.zipf_exponent,
        confusable=bool(s.confusable),
        trigger_prob=s.trigger_prob, post_prob=s.post_prob,
        false_trigger_rate=s.false_trigger_rate,
        lexicon_coverage=s.lexicon_coverage,
        min_len=s.min_len, max_len=s.max_len,
    )
    out = Path(cfg.paths.out_dir)
    result = generate(synth_cfg)
    write_conll_file(result.train, str(out / "train.conll"))
    write_conll_file(result.test, str(out / "test.conll"))
    with open(out / "embed.txt", "w", encoding="utf-8", newline="\n") as handle:
        for sent in result.embed_sentences:
            handle.write(" ".join(sent) + "\n")
    Lexicon.from_pairs(result.lexicon_pairs).save(str(out / "lexicon.tsv"))
    print(
        f"synth: train={result.train.totals} test={result.test.totals} "
        f"embed_sentences={len(result.embed_sentences)} -> {out}"
    )
    return EXIT_OK


def cmd_train_embeddings(cfg: RunConfig, args) -> int:
    if args.corpus:
        cfg.paths.embed_corpus = ",".join(args.corpus)
    if not cfg.embed_corpus_paths():
        raise ConfigError("no embedding corpus: set paths.embed_corpus or pass --corpus")
    warnings: list[str] = []
    started = time.perf_counter()
    table, lex, key, hit = get_embeddings(cfg, warnings)
    elapsed = time.perf_counter() - started
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    status = "cache hit" if hit else f"trained in {elapsed:.1f}s"
    print(f"embeddings: key={key} vocab={len(table)} dim={table.dim} dim_lex={lex.dim_lex} ({status})")
    return EXIT_OK


def cmd_build_codebooks(cfg: RunConfig, args) -> int:
    letters = sorted(cfg.feature_letters() & unsup.UNSUP_LETTERS)
    if not letters:
        print("build-codebooks: no unsupervised letters enabled; nothing to do")
        return EXIT_OK
    warnings: list[str] = []
    emb, lex, emb_key, _ = get_embeddings(cfg, warnings, require_cached=True)
    books, _, keys = get_codebooks(cfg, emb, lex, emb_key, warnings)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    for cb_id, key in sorted(keys.items()):
        print(f"codebook {cb_id}: key={key} k={books[cb_id].k}")
    return EXIT_OK


def _read_corpora(cfg: RunConfig):
    if not cfg.paths.train or not cfg.paths.test:
        raise ConfigError("paths.train and paths.test are required")
    return read_conll_file(cfg.paths.train), read_conll_file(cfg.paths.test)


def _run_supervised(cfg: RunConfig):
    """Full-train CRF for the configured letters; returns (manifest, featurizer bundle)."""
    warnings: list[str] = []
    started = time.perf_counter()
    train_corpus, test_corpus = _read_corpora(cfg)
    featurizer, artifacts = build_featurizer(cfg, warnings)
    check_group_b(train_corpus, cfg.feature_letters(), warnings)
    crf_config = crf.CrfTrainConfig(
        l2_sigma2=cfg.crf.sigma2,
        max_iterations=cfg.crf.max_iterations,
        tolerance=cfg.crf.tolerance,
    )
    data = [(featurizer(s), s.gold_labels) for s in train_corpus.sentences]
    model = crf.train(data, crf_config)
    predicted = [concept_spans(crf.predict(model, featurizer(s))) for s in test_corpus.sentences]
    gold = [concept_spans(s.gold_labels) for s in test_corpus.sentences]
    prf = phrase_prf(gold, predicted)
    manifest = RunManifest(
        kind="supervised",
        config=cfg.to_flat(),
        inputs=_input_hashes(cfg),
        artifacts=artifacts,
        metrics={
            "precision": prf.precision,
            "recall": prf.recall,
            "f1": prf.f1,
            "target_f1": prf.f1,
        },
        warnings=warnings,
        timings={"total_s": time.perf_counter() - started},
    )
    return manifest


_TARGET_CONFIG_SECTIONS = ("paths.", "features.", "vectors.", "unsup.", "crf.")


def _supervised_manifest_path(cfg: RunConfig) -> Path:
    return Path(cfg.paths.out_dir) / f"supervised_{cfg.features.letters}.manifest"


def _reusable_supervised(cfg: RunConfig) -> RunManifest | None:
    path = _supervised_manifest_path(cfg)
    if not path.exists():
        return None
    try:
        manifest = RunManifest.read(str(path))
    except (ValueError, OSError):
        return None
    if manifest.kind != "supervised" or manifest.inputs != _input_hashes(cfg):
        return None
    current = {k: v for k, v in cfg.to_flat().items() if k.startswith(_TARGET_CONFIG_SECTIONS)}
    stored = {k: v for k, v in manifest.config.items() if k.startswith(_TARGET_CONFIG_SECTIONS)}
    if current != stored:
        return None
    return manifest


def cmd_supervised(cfg: RunConfig, args) -> int:
    manifest = _run_supervised(cfg)
    path = _supervised_manifest_path(cfg)
    manifest.write(str(path))
    for warning in manifest.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(
        f"supervised {cfg.features.letters}: "
        f"P={manifest.metrics['precision']:.4f} R={manifest.metrics['recall']:.4f} "
        f"F1={manifest.metrics['f1']:.4f} -> {path}"
    )
    return EXIT_OK


def cmd_al(cfg: RunConfig, args) -> int:
    if args.replay:
        stored = RunManifest.read(args.replay)
        if stored.kind != "al":
            raise ConfigError(f"{args.replay} is not an al manifest")
        replay_cfg = RunConfig.from_lines(f"{k}={v}" for k, v in stored.config.items())
        replay_cfg.paths.out_dir = cfg.paths.out_dir
        if _input_hashes(replay_cfg) != stored.inputs:
            raise DataError("replay inputs differ from the manifest's recorded hashes")
        cfg = replay_cfg

    strategy = cfg.al.strategy.lower()
    if strategy not in strategies.STRATEGY_NAMES:
        raise ConfigError(f"unknown strategy {cfg.al.strategy!r}")
    if strategy == "dki" and not cfg.paths.lexicon:
        raise ConfigError("strategy dki requires paths.lexicon")
    if strategy in ("idiv", "idd") and not cfg.embed_corpus_paths():
        raise ConfigError(f"strategy {strategy} requires paths.embed_corpus for sentence vectors")

    started = time.perf_counter()
    warnings: list[str] = []

    if cfg.al.target_f1 < 0:
        reusable = _reusable_supervised(cfg)
        if reusable is None:
            reusable = _run_supervised(cfg)
            reusable.write(str(_supervised_manifest_path(cfg)))
        cfg.al.target_f1 = reusable.metrics["target_f1"]

    train_corpus, test_corpus = _read_corpora(cfg)
    featurizer, artifacts = build_featurizer(cfg, warnings)
    check_group_b(train_corpus, cfg.feature_letters(), warnings)

    seqreps = None
    if strategy in ("idiv", "idd"):
        emb, lex, emb_key, _ = get_embeddings(cfg, warnings)
        artifacts.setdefault("embeddings", emb_key)
        seqreps = sequence_reps(train_corpus, emb, lex)

    handles = alloop.PipelineHandles(
        train=train_corpus,
        test=test_corpus,
        featurize=featurizer,
        crf_config=crf.CrfTrainConfig(
            l2_sigma2=cfg.crf.sigma2,
            max_iterations=cfg.crf.max_iterations,
            tolerance=cfg.crf.tolerance,
        ),
        strategy_params=strategies.StrategyParams(
            density_exponent=cfg.al.density_exponent, dki_lambda=cfg.al.dki_lambda
        ),
        lexicon=featurizer.lexicon,
        seqreps=seqreps,
    )
    state = alloop.init_split(train_corpus, cfg.al.init_fraction, cfg.al.seed)
    batch_size = max(1, int(cfg.al.batch_fraction * len(train_corpus.sentences) + 0.5))
    max_iterations = cfg.al.max_iterations or None
    state, rates = alloop.run_until(
        state, cfg.al.target_f1, strategy, batch_size, handles, max_iterations
    )

    stem = f"al_{strategy}_{cfg.features.letters}_seed{cfg.al.seed}"
    out = Path(cfg.paths.out_dir)
    manifest = RunManifest(
        kind="al",
        config=cfg.to_flat(),
        inputs=_input_hashes(cfg),
        artifacts=artifacts,
        metrics={"target_f1": cfg.al.target_f1, "final_f1": state.history[-1].f1},
        history=list(state.history),
        rates=rates,
        warnings=warnings,
        timings={"total_s": time.perf_counter() - started},
    )
    manifest.write(str(out / f"{stem}.manifest"))
    write_history_csv(state.history, str(out / f"{stem}_history.csv"))
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(
        f"al {strategy} {cfg.features.letters}: reached={rates.reached} "
        f"SAR={rates.sar:.0f}% TAR={rates.tar:.0f}% CAR={rates.car:.0f}% "
        f"iterations={state.iteration} target_f1={cfg.al.target_f1:.4f}"
    )
    return EXIT_OK


def _pivot_rates(manifests) -> list[str]:
    by_features: dict[str, dict[str, tuple]] = {}
    strategies_seen = set()
    for m in manifests:
        feats = m.config.get("features.letters", "?")
        strat = m.config.get("al.strategy", "?")
        strategies_seen.add(strat)
        by_features.setdefault(feats, {})[strat] = (m.rates.sar, m.rates.tar, m.rates.car)
    cols = sorted(strategies_seen)
    header = ["features"]
    for strat in cols:
        header += [f"{strat}_sar", f"{strat}_tar", f"{strat}_car"]
    lines = [",".join(header)]
    for feats in sorted(by_features):
        row = [feats]
        for strat in cols:
            rates = by_features[feats].get(strat)
            row += [f"{r:.0f}" for r in rates] if rates else ["", "", ""]
        lines.append(",".join(row))
    return lines


def cmd_report(args) -> int:
    if not args.manifests:
        raise ConfigError("report needs at least one manifest")
    manifests = [RunManifest.read(p) for p in args.manifests]
    out = Path(args.out_dir or "out")
    out.mkdir(parents=True, exist_ok=True)

    al_manifests = [m for m in manifests if m.kind == "al"]
    sup_manifests = [m for m in manifests if m.kind == "supervised"]

    if al_manifests:
        test_hashes = {m.inputs.get("test") for m in al_manifests}
        if len(test_hashes) > 1:
            raise DataError("incompatible manifests: different test corpora")
        with open(out / "annotation_rates.csv", "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(_pivot_rates(al_manifests)) + "\n")

        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6.5, 4.5))
        for m in al_manifests:
            label = f"{m.config.get('features.letters')}/{m.config.get('al.strategy')}"
            x, y = m.rates.car, m.metrics.get("target_f1", 0.0)
            ax.scatter([x], [y], marker="s")
            ax.annotate(label, (x, y), fontsize=8, xytext=(3, 3), textcoords="offset points")
        ax.set_xlabel("concept annotation rate (%)")
        ax.set_ylabel("full-train F1")
        ax.set_title("annotation effort vs supervised effectiveness")
        fig.tight_layout()
        fig.savefig(out / "f1_vs_car.svg")
        plt.close(fig)

        fig, ax = plt.subplots(figsize=(6.5, 4.5))
        for m in al_manifests:
            label = f"{m.config.get('features.letters')}/{m.config.get('al.strategy')}"
            xs = [row.seqs_used for row in m.history]
            ys = [row.f1 for row in m.history]
            ax.plot(xs, ys, label=label)
        ax.set_xlabel("sequences labeled")
        ax.set_ylabel("test F1")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out / "learning_curves.svg")
        plt.close(fig)

    if sup_manifests:
        with open(out / "supervised_results.csv", "w", encoding="utf-8", newline="\n") as handle:
            handle.write("features,precision,recall,f1\n")
            for m in sorted(sup_manifests, key=lambda m: m.config.get("features.letters", "")):
                handle.write(
                    f"{m.config.get('features.letters')},"
                    f"{m.metrics['precision']:.4f},{m.metrics['recall']:.4f},{m.metrics['f1']:.4f}\n"
                )

    print(f"report: {len(al_manifests)} al + {len(sup_manifests)} supervised manifests -> {out}")
    return EXIT_OK


def _halves_f1(cfg: RunConfig, letters: str, splits, train_corpus, crf_config) -> list[list[float]]:
    sys_cfg = RunConfig.from_lines(f"{k}={v}" for k, v in cfg.to_flat().items())
    sys_cfg.features.letters = letters
    featurizer, _ = build_featurizer(sys_cfg)
    features = [featurizer(s) for s in train_corpus.sentences]
    golds = [s.gold_labels for s in train_corpus.sentences]
    gold_spans = [concept_spans(g) for g in golds]
    matrix = []
    for half_a, half_b in splits:
        row = []
        for train_ids, eval_ids in ((half_a, half_b), (half_b, half_a)):
            model = crf.train([(features[i], golds[i]) for i in train_ids], crf_config)
            predicted = [concept_spans(crf.predict(model, features[i])) for i in eval_ids]
            row.append(phrase_prf([gold_spans[i] for i in eval_ids], predicted).f1)
        matrix.append(row)
    return matrix


def cmd_ttest(cfg: RunConfig, args) -> int:
    from .evaluation import make_5x2_splits

    if not cfg.paths.train:
        raise ConfigError("paths.train is required")
    train_corpus = read_conll_file(cfg.paths.train)
    splits = make_5x2_splits(train_corpus, cfg.al.ttest_seed)
    crf_config = crf.CrfTrainConfig(
        l2_sigma2=cfg.crf.sigma2,
        max_iterations=cfg.crf.max_iterations,
        tolerance=cfg.crf.tolerance,
    )
    f1_a = _halves_f1(cfg, args.features_a, splits, train_corpus, crf_config)
    f1_b = _halves_f1(cfg, args.features_b, splits, train_corpus, crf_config)
    result = five_by_two_ttest(f1_a, f1_b)
    out = Path(cfg.paths.out_dir)
    path = out / f"ttest_{args.features_a}_vs_{args.features_b}.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("system_a,system_b,t,significant\n")
        handle.write(
            f"{args.features_a},{args.features_b},{result.t_statistic!r},{int(result.significant_at_05)}\n"
        )
    print(
        f"ttest {args.features_a} vs {args.features_b}: t={result.t_statistic:.4f} "
        f"significant={result.significant_at_05} -> {path}"
    )
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="albench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
        p.add_argument("--out-dir", help="output directory (overrides paths.out_dir)")

    common(sub.add_parser("synth", help="generate a synthetic corpus bundle"))
    p = sub.add_parser("train-embeddings", help="train or load cached embeddings")
    common(p)
    p.add_argument("--corpus", action="append", help="embedding corpus path (repeatable)")
    common(sub.add_parser("build-codebooks", help="cluster vector spaces into codebooks"))
    common(sub.add_parser("supervised", help="full-train CRF and test evaluation"))
    p = sub.add_parser("al", help="run one active-learning experiment")
    common(p)
    p.add_argument("--replay", help="replay a stored al manifest")
    p = sub.add_parser("report", help="tables and plots from run manifests")
    p.add_argument("manifests", nargs="*")
    p.add_argument("--out-dir", help="output directory")
    p = sub.add_parser("ttest", help="5x2cv paired t-test between two feature sets")
    common(p)
    p.add_argument("--features-a", required=True)
    p.add_argument("--features-b", required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args)
        cfg = _load_config(args)
        if args.command == "synth":
            return cmd_synth(cfg, args)
        if args.command == "train-embeddings":
            return cmd_train_embeddings(cfg, args)
        if args.command == "build-codebooks":
            return cmd_build_codebooks(cfg, args)
        if args.command == "supervised":
            return cmd_supervised(cfg, args)
        if args.command == "al":
            return cmd_al(cfg, args)
        if args.command == "ttest":
            return cmd_ttest(cfg, args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CorpusError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
