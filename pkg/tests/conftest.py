import pytest

from mmfuse.classifier import ClassifierConfig
from mmfuse.evaluation import Corpus
from mmfuse.synthgen import SynthParams, generate_corpus


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    """Tiny balanced corpus with 2 synthetic layers, shared across tests."""
    root = tmp_path_factory.mktemp("small_corpus")
    params = SynthParams(
        n_recordings=90,
        class_proportions=(1 / 3, 1 / 3, 1 / 3),
        frames=40,
        words_range=(3, 6),
        d_audio=16,
        d_text=16,
        n_layers=2,
        seed=5,
    )
    generate_corpus(params, root)
    return root


@pytest.fixture(scope="session")
def small_corpus(small_corpus_dir):
    return Corpus.load(small_corpus_dir / "manifest.tsv")


@pytest.fixture()
def tiny_cfg():
    """Fast classifier config for pipeline-level tests."""
    return ClassifierConfig(
        input_dim=32,
        num_layers=1,
        num_heads=2,
        hidden_dim=16,
        dropout=0.1,
        learning_rate=3e-3,
        batch_size=16,
        positional_encoding="none",
        max_epochs=8,
        patience=4,
        seed=0,
    )

