"""Shared fixtures: toy spaces small enough for exhaustive oracles."""

import pytest

from subnetsearch.space import build_space


@pytest.fixture(scope="session")
def tiny_space():
    """2 blocks, depths {1,2}, one per-layer parameter with 2 values.

    Exactly 36 canonical genotypes: per block 2 + 2^2 = 6, squared.
    """
    blocks = [
        ("a", (1, 2), 2, [("width", (0, 1))]),
        ("b", (1, 2), 2, [("width", (0, 1))]),
    ]
    return build_space("tiny", blocks)


@pytest.fixture(scope="session")
def toy_space():
    """2 blocks, depths {1,2}, kernel {3,5,7} and expand {3,4,6} per layer.

    Per block: 9 + 81 = 90 combos; 8100 canonical genotypes total, small
    enough to enumerate but structured like the real presets.
    """
    blocks = [
        ("blk0", (1, 2), 2, [("kernel", (3, 5, 7)), ("expand", (3, 4, 6))]),
        ("blk1", (1, 2), 2, [("kernel", (3, 5, 7)), ("expand", (3, 4, 6))]),
    ]
    return build_space("toy", blocks)


@pytest.fixture(scope="session")
def global_space():
    """One block plus a global gene, for constraint and encoding tests."""
    blocks = [("m", (1, 2, 3), 3, [("kernel", (3, 5, 7))])]
    return build_space("toy-global", blocks, [("width", (1, 2))])
