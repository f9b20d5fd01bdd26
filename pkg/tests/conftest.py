"""Shared generators for seeded randomized tests."""

import numpy as np
import pytest

import milugraph as mg


def random_m_system(rng, n=None, all_positive_slack=False, extra_edge_factor=2.0):
    """Random connected system: spanning tree plus extra edges.

    With ``all_positive_slack`` every vertex gets b > 0, which keeps all
    local condition estimates finite.  Otherwise roughly half the
    vertices get b = 0 (at least one stays positive), which exercises
    the infinite-estimate paths.
    """
    if n is None:
        n = int(rng.integers(5, 51))
    edges = {}
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges[(u, v)] = 0.1 + 1.9 * rng.random()
    for _ in range(int(extra_edge_factor * n)):
        a, b = int(rng.integers(0, n)), int(rng.integers(0, n))
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        if key not in edges:
            edges[key] = 0.1 + 1.9 * rng.random()
    if all_positive_slack:
        slack = 0.05 + 0.95 * rng.random(n)
    else:
        slack = np.where(rng.random(n) < 0.5, 0.0, rng.random(n))
        slack[int(rng.integers(0, n))] = 0.5 + rng.random()
    return mg.assemble([(u, v, c) for (u, v), c in edges.items()], slack)


def random_ordering(rng, n):
    return mg.VertexOrdering.from_perm(rng.permutation(n))


def path_system(n, c=1.0):
    """1D Dirichlet chain: tridiag(-c, 2c, -c)."""
    edges = [(k, k + 1, c) for k in range(n - 1)]
    slack = np.zeros(n)
    slack[0] = c
    slack[-1] = c
    return mg.assemble(edges, slack)


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
