import pytest

from casecheck.generator import generate_corpus


@pytest.fixture(scope="session")
def default_corpus():
    """The full default corpus (seed 0); shared across modules because
    generation runs a few thousand solver calls."""
    return generate_corpus(seed=0)
