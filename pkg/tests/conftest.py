import pytest

from graphsand import ConstraintSet, build_graph, build_path


@pytest.fixture
def p4():
    return build_path(4)


@pytest.fixture
def p4_uniform(p4):
    return ConstraintSet.uniform(p4)


@pytest.fixture
def chain_w4():
    """The two-edge chain with w12 = 1, w23 = 4."""
    return build_path(3, weights=[1.0, 4.0])


def random_connected_graph(rng, n_max=5, w_lo=0.5, w_hi=2.0):
    """Random connected graph: a spanning tree plus a few extra edges."""
    n = int(rng.integers(2, n_max + 1))
    labels = [f"v{k}" for k in range(n)]
    edges = {}
    order = rng.permutation(n)
    for k in range(1, n):
        a = labels[order[k]]
        b = labels[order[int(rng.integers(0, k))]]
        key = (min(a, b), max(a, b))
        edges[key] = float(rng.uniform(w_lo, w_hi))
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        a, b = rng.choice(n, size=2, replace=False)
        key = (min(labels[a], labels[b]), max(labels[a], labels[b]))
        if key not in edges:
            edges[key] = float(rng.uniform(w_lo, w_hi))
    return build_graph([(a, b, w) for (a, b), w in edges.items()])


def random_field(rng, g, scale=2.0):
    return rng.normal(scale=scale, size=g.n_vertices)
