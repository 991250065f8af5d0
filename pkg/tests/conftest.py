"""Shared fixtures: the small reference markets used across the suite.

fix_a: one period, prob (1/2, 1/2), dM = (+0.1, -0.1), zero drift.
fix_b: same increments with drift lam = 1 (S_1 = (1.11, 0.91), Z_1 = (0.9, 1.1)).
fix_c: one-period trinomial, uniform, dS = (+0.1, 0, -0.1), zero drift.
fix_b2: two periods of the fix_b node dynamics (4 scenarios).
trinomial2: two periods of the fix_c dynamics (9 scenarios).
"""

import numpy as np
import pytest

from duality_lab import FilteredSpace, build_market


@pytest.fixture(scope="session")
def space2():
    return FilteredSpace([0.5, 0.5], [((0, 1),), ((0,), (1,))])


@pytest.fixture(scope="session")
def fix_a(space2):
    return build_market(space2, [[0.1, -0.1]], [[0.0, 0.0]])


@pytest.fixture(scope="session")
def fix_b(space2):
    return build_market(space2, [[0.1, -0.1]], [[1.0, 1.0]])


@pytest.fixture(scope="session")
def space3():
    return FilteredSpace([1 / 3] * 3, [((0, 1, 2),), ((0,), (1,), (2,))])


@pytest.fixture(scope="session")
def fix_c(space3):
    return build_market(space3, [[0.1, 0.0, -0.1]], [[0.0] * 3])


@pytest.fixture(scope="session")
def space4():
    return FilteredSpace(
        [0.25] * 4,
        [((0, 1, 2, 3),), ((0, 1), (2, 3)), ((0,), (1,), (2,), (3,))],
    )


@pytest.fixture(scope="session")
def fix_b2(space4):
    dM = np.array([[0.1, 0.1, -0.1, -0.1], [0.1, -0.1, 0.1, -0.1]])
    return build_market(space4, dM, np.ones((2, 4)))


@pytest.fixture(scope="session")
def space9():
    parts = [
        ((0, 1, 2, 3, 4, 5, 6, 7, 8),),
        ((0, 1, 2), (3, 4, 5), (6, 7, 8)),
        tuple((i,) for i in range(9)),
    ]
    return FilteredSpace([1 / 9] * 9, parts)


@pytest.fixture(scope="session")
def trinomial2(space9):
    move = np.array([0.1, 0.0, -0.1])
    dM = np.vstack([np.repeat(move, 3), np.tile(move, 3)])
    return build_market(space9, dM, np.zeros((2, 9)))
