"""
Pytest configuration for the hublab tests.

Shared graph fixtures: the path P3 a-b-c, the single edge K2, the unit
diamond r-x-t / r-y-t and the star S4, each with the ranking the hand
traces use, plus a factory for seeded random graphs.
"""

import os
import sys
from typing import Callable, NamedTuple

import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from hublab_graph import Graph, Ranking, random_graph, rank_by_degree  # noqa: E402


class Fixture(NamedTuple):
    g: Graph
    r: Ranking


# P3 vertex ids
A, B, C = 0, 1, 2
# Diamond vertex ids
DR, DX, DY, DT = 0, 1, 2, 3


@pytest.fixture
def p3() -> Fixture:
    """a-b-c with unit weights; rank b=2, a=1, c=0"""
    g = Graph.from_arcs(3, [(A, B, 1), (B, C, 1)], directed=False)
    return Fixture(g, Ranking.from_ranks([1, 2, 0]))


@pytest.fixture
def k2() -> Fixture:
    """a-b with weight 5; a outranks b"""
    g = Graph.from_arcs(2, [(0, 1, 5)], directed=False)
    return Fixture(g, Ranking.from_ranks([1, 0]))


@pytest.fixture
def diamond() -> Fixture:
    """r-x-t and r-y-t with unit weights; rank x=3, r=2, y=1, t=0"""
    g = Graph.from_arcs(4, [(DR, DX, 1), (DX, DT, 1), (DR, DY, 1), (DY, DT, 1)], directed=False)
    return Fixture(g, Ranking.from_ranks([2, 3, 1, 0]))


@pytest.fixture
def star() -> Fixture:
    """Center 0 with leaves 1, 2, 3; degree ranking puts the center on top"""
    g = Graph.from_arcs(4, [(0, 1, 1), (0, 2, 1), (0, 3, 1)], directed=False)
    return Fixture(g, rank_by_degree(g))


@pytest.fixture
def directed_chain() -> Fixture:
    """0 -> 1 -> 2 plus 2 -> 0 with weight 5; degree ranking"""
    g = Graph.from_arcs(3, [(0, 1, 1), (1, 2, 1), (2, 0, 5)], directed=True)
    return Fixture(g, rank_by_degree(g))


@pytest.fixture
def make_random() -> Callable[..., Fixture]:
    """Seeded random graph with degree ranking"""

    def make(n: int, m: int, seed: int, directed: bool = False) -> Fixture:
        g = random_graph(n, m, seed, directed=directed)
        return Fixture(g, rank_by_degree(g))

    return make


@pytest.fixture
def fixtures(p3, k2, diamond, star, directed_chain):
    return {
        "p3": p3,
        "k2": k2,
        "diamond": diamond,
        "star": star,
        "directed_chain": directed_chain,
    }


# Custom pytest collection hook to organize tests
def pytest_collection_modifyitems(config, items):
    """Add markers based on test file names"""
    for item in items:
        if "test_cluster" in item.nodeid:
            item.add_marker(pytest.mark.cluster)
        if "test_cli" in item.nodeid:
            item.add_marker(pytest.mark.integration)
