import numpy as np
import pytest

from paradiff import corpus as corpus_mod
from paradiff.embedder import EmbedderConfig, ParagraphEmbedder


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_corpus():
    spec = corpus_mod.GrammarSpec()
    paragraphs, vocab = corpus_mod.generate_corpus(spec, 128, seed=7)
    return spec, paragraphs, vocab


@pytest.fixture(scope="session")
def tiny_embedder(small_corpus):
    """Untrained small embedder for contract tests."""
    _, _, vocab = small_corpus
    cfg = EmbedderConfig(vocab_size=len(vocab), k=4, h=32, heads=4,
                         enc_layers=1, dec_layers=1, max_len=64)
    return ParagraphEmbedder(cfg, np.random.default_rng(3))
