import pytest

from readmit.neural import HashingEncoder
from readmit.syngen import GenConfig, generate_with_truth


@pytest.fixture(scope="session")
def encoder():
    return HashingEncoder()


@pytest.fixture(scope="session")
def small_gen():
    """A small planted corpus shared by read-only tests."""
    config = GenConfig(seed=4242, n_patients=25, tokens_per_note=(60, 120),
                       notes_per_admission=(2, 4))
    corpus, truth = generate_with_truth(config)
    return config, corpus, truth
