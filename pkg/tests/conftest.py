import pytest

from spbe import instances, solve


@pytest.fixture(scope="session")
def corpus_solves():
    """Exact solve of every corpus instance, shared across the session.

    Generators keep solving lazily when later tests query new beliefs;
    that only grows the caches, never changes existing entries.
    """
    out = {}
    for name, game in instances.corpus().items():
        out[name] = (game, solve(game))
    return out


@pytest.fixture(scope="session")
def reference_solved(corpus_solves):
    return corpus_solves["reference"]
