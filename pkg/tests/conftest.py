"""Shared small instances and statistical helpers."""

import pytest

from matchcrs.graph import Multigraph


@pytest.fixture
def path3():
    """Three-edge path 0-1-2-3."""
    return Multigraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def triangle():
    return Multigraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def triangle_pendant():
    return Multigraph.from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)])


@pytest.fixture
def k23():
    return Multigraph.from_edges(5, [(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)])


@pytest.fixture
def parallel_pair():
    """Two parallel edges 0-1 plus a pendant 1-2."""
    return Multigraph.from_edges(3, [(0, 1), (0, 1), (1, 2)])


def within_sigma(estimate, exact, sigma, k=3.0, floor=1e-12):
    """|estimate - exact| <= k sigma, guarding degenerate zero-variance cases."""
    return abs(estimate - exact) <= k * max(sigma, floor)
