import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sheaflab.poset import build_poset, graph_poset, simplicial_from_facets

settings.register_profile(
    "sheaflab",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("sheaflab")


@pytest.fixture
def edge():
    """The single-edge poset u ⋖ e ⋗ v."""
    return graph_poset(["u", "v"], [("u", "v")])


@pytest.fixture
def hollow_triangle():
    return simplicial_from_facets([[0, 1], [1, 2], [0, 2]])


@pytest.fixture
def full_triangle():
    return simplicial_from_facets([[0, 1, 2]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def path_graph(n: int):
    return graph_poset(range(n), [(i, i + 1) for i in range(n - 1)])


def chain_poset(n: int):
    names = [f"c{i}" for i in range(n)]
    return build_poset(names, list(zip(names[:-1], names[1:])))
