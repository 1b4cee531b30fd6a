import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loglap.manifold import (
    Field,
    build_circle,
    build_flat_torus,
    build_weighted_graph,
    check_distances,
    inner_product,
    manifold_from_dict,
    random_relabeling,
)


def test_circle_spectrum_n8(circle8):
    assert np.allclose(circle8.eigenvalues, [0, 1, 1, 4, 4, 9, 9, 16])
    assert circle8.eigenvalues[0] == 0.0
    assert circle8.multiplicities == [1, 2, 2, 2, 1]


def test_circle_radius_scales_spectrum():
    m = build_circle(16, 2.0)
    assert np.allclose(m.eigenvalues[:5], [0, 0.25, 0.25, 1, 1])
    assert np.allclose(m.mass, 2 * math.pi * 2.0 / 16)


@pytest.mark.parametrize("n,r", [(3, 1.0), (8, 0.0), (8, -1.0)])
def test_circle_rejects_bad_input(n, r):
    with pytest.raises(ValueError):
        build_circle(n, r)


def test_torus_examples(torus8):
    assert torus8.eigenvalues[1] == pytest.approx(1.0)
    assert torus8.multiplicities[1] == 4
    t = build_flat_torus(8, 8, 2 * math.pi, 4 * math.pi)
    assert t.eigenvalues[1] == pytest.approx(0.25)
    t6 = build_flat_torus(6, 6, 2 * math.pi, 2 * math.pi)
    assert t6.eigenvalues[0] == 0.0
    phi0 = t6.eigenfunctions[:, 0]
    assert np.ptp(phi0) < 1e-14


def test_torus_rejects_small_grid():
    with pytest.raises(ValueError):
        build_flat_torus(3, 8, 1.0, 1.0)


def test_graph_examples():
    k4 = build_weighted_graph(np.ones((4, 4)) - np.eye(4))
    assert np.allclose(k4.eigenvalues, [0, 4, 4, 4])
    two = build_weighted_graph(np.array([[0, 3.0], [3.0, 0]]))
    assert np.allclose(two.eigenvalues, [0, 6.0])


def test_graph_errors():
    with pytest.raises(ValueError):
        build_weighted_graph(np.array([[0, 1.0], [2.0, 0]]))
    disconnected = np.zeros((4, 4))
    disconnected[0, 1] = disconnected[1, 0] = 1
    disconnected[2, 3] = disconnected[3, 2] = 1
    with pytest.raises(ValueError):
        build_weighted_graph(disconnected)


def _path(n):
    a = np.zeros((n, n))
    for i in range(n - 1):
        a[i, i + 1] = a[i + 1, i] = 1.0
    return a


@given(st.integers(min_value=3, max_value=12), st.integers(min_value=0, max_value=10**6))
def test_relabeled_path_has_same_spectrum(n, seed):
    perm = np.random.default_rng(seed).permutation(n)
    a = _path(n)
    g1 = build_weighted_graph(a)
    g2 = build_weighted_graph(a[np.ix_(perm, perm)])
    assert np.allclose(g1.eigenvalues, g2.eigenvalues, atol=1e-10)


def test_graph_default_distances_are_shortest_paths():
    g = build_weighted_graph(_path(5))
    assert g.distances[0, 4] == pytest.approx(4.0)
    assert check_distances(g) <= 1e-12


@pytest.mark.parametrize("builder", [lambda: build_circle(64), lambda: build_flat_torus(8, 8, 2 * math.pi, 3.0)])
def test_structural_invariants(builder):
    m = builder()
    assert m.orthonormality_residual() < 1e-10
    assert np.all(np.diff(m.eigenvalues) >= 0)
    assert check_distances(m) <= 1e-12
    lap = m.laplacian()
    # mass-symmetric: M L is symmetric
    ML = m.mass[:, None] * lap
    assert np.max(np.abs(ML - ML.T)) < 1e-10


def test_inner_product_examples(circle64):
    phi0, phi1 = circle64.eigenfunction(0), circle64.eigenfunction(1)
    assert inner_product(phi0, phi0) == pytest.approx(1.0)
    assert abs(inner_product(phi0, phi1)) < 1e-14
    one = circle64.constant()
    assert inner_product(one, one) == pytest.approx(2 * math.pi)


def test_inner_product_rejects_mixed_manifolds(circle64, circle8):
    with pytest.raises(ValueError):
        inner_product(circle64.constant(), circle8.constant())


def test_field_length_checked(circle8):
    with pytest.raises(ValueError):
        Field(np.zeros(5), circle8)


@given(st.integers(min_value=0, max_value=10**6))
def test_relabel_permutes_eigenfunctions(seed):
    m = build_circle(12)
    rng = np.random.default_rng(seed)
    perm = random_relabeling(12, [0, 1, 2], rng)
    assert np.all(perm[:3] == [0, 1, 2])
    c = m.relabel(perm)
    assert np.array_equal(c.eigenvalues, m.eigenvalues)
    assert np.array_equal(c.eigenfunctions, m.eigenfunctions[perm])
    assert c.orthonormality_residual() < 1e-10


def test_manifold_from_dict():
    m = manifold_from_dict({"kind": "circle", "N": 8, "radius": 1.0, "permutation": [1, 0, 2, 3, 4, 5, 6, 7]})
    assert m.node_count == 8
    with pytest.raises(ValueError):
        manifold_from_dict({"kind": "sphere"})
