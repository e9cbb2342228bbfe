import numpy as np
import pytest

from albench import crf
from albench.corpus import read_conll
from albench.synth import SynthConfig, generate
from albench.unsup import default_unsup_config, kmeans
from albench.vectors import LexicalTable, train_skipgram

TINY_CONLL = """# doc d0
pain\tNN\tB-problem
killers\tNN\tI-problem

the\tDT\tO
chest\tNN\tB-problem
pain\tNN\tI-problem
improved\tVB\tO
"""


@pytest.fixture
def tiny_corpus():
    return read_conll(TINY_CONLL)


@pytest.fixture(scope="session")
def small_synth():
    """Small deterministic corpus bundle shared by the pipeline-level tests."""
    cfg = SynthConfig(
        seed=101,
        n_train=120,
        n_test=50,
        n_embed=600,
        background_vocab=60,
        concept_vocab=80,
        trigger_vocab=12,
        post_vocab=12,
        min_len=5,
        max_len=9,
    )
    return generate(cfg)


@pytest.fixture(scope="session")
def small_embeddings(small_synth):
    return train_skipgram(
        small_synth.embed_sentences, dim=16, window=3, negatives=3,
        epochs=3, min_count=2, seed=5,
    )


@pytest.fixture(scope="session")
def small_lexical():
    return LexicalTable(dim_lex=12, seed=3)


@pytest.fixture(scope="session")
def small_codebooks(small_synth, small_embeddings, small_lexical):
    """Codebooks for all seven letters at desk-scale cluster counts."""
    import albench.unsup as unsup

    emb, lex = small_embeddings, small_lexical
    word = np.array([unsup.normalize(emb[t]) for t in emb.vectors])
    lexical = np.array([lex.token_vector(t) for t in emb.vectors])
    pairs = sorted({
        (a, b)
        for sent in small_synth.embed_sentences
        for a, b in zip(sent, sent[1:])
    })
    bigram = np.array([unsup.bigram_vector(a, b, emb, lex) for a, b in pairs])
    sentences = np.array([
        unsup.compose_span_vector(s, emb, lex).combined
        for s in small_synth.embed_sentences[:200]
    ])
    ks = {"D": 12, "G": 5, "H": 12, "J": 10, "K": 10, "L": 5, "M": 12}
    cfg = default_unsup_config("DGHJKLM", ks)
    books = {}
    spaces = {"word": word, "lexical": lexical, "bigram": bigram, "sentence": sentences}
    for cb_id, (space, k) in cfg.required_codebooks().items():
        books[cb_id] = kmeans(spaces[space], k, seed=9, space_tag=space)
    return books, cfg


def random_tiny_instance(rng, max_len=4, max_labels=3, feature_pool=10):
    """Random (features, labels) pair over a small closed feature alphabet."""
    n = int(rng.integers(1, max_len + 1))
    n_labels = int(rng.integers(2, max_labels + 1))
    labels = [f"L{i}" for i in range(n_labels)]
    feats = []
    for _ in range(n):
        count = int(rng.integers(1, 4))
        feats.append(tuple(f"f{int(i)}" for i in rng.integers(0, feature_pool, size=count)))
    gold = [labels[int(i)] for i in rng.integers(0, n_labels, size=n)]
    return feats, gold


def random_tiny_model(rng, data, sigma2=10.0, scale=0.7):
    """CRF model over the data's alphabets with random weights."""
    model = crf.CrfModel.build(data, crf.CrfTrainConfig(l2_sigma2=sigma2))
    model.weights = rng.normal(0.0, scale, size=model.weights.shape)
    return model
