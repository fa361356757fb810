import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import null_space, orth

from sheaflab.complexes import (
    cellular_complex,
    dirichlet_energy,
    duta_laplacian,
    is_cell_poset,
    laplacian,
    roos_complex,
    vector_calculus,
)
from sheaflab.errors import NotCellPoset, RankError
from sheaflab.generators import full_simplex, random_connected_graph, random_instance
from sheaflab.poset import graph_poset, hypergraph_poset
from sheaflab.sheaf import constant_sheaf, symmetric_weight_sheaf
from sheaflab.spectral import betti, global_sections

from conftest import path_graph


def _flavors(P, F):
    out = [roos_complex(P, F)]
    if is_cell_poset(P):
        out.append(cellular_complex(P, F))
    return out


@given(st.integers(0, 2**31 - 1))
def test_d_squared_zero(seed):
    _, P, F = random_instance(np.random.default_rng(seed), max_elements=30)
    for cx in _flavors(P, F):
        for k in range(cx.top - 1):
            dd = cx.coboundary(k + 1) @ cx.coboundary(k)
            assert np.max(np.abs(dd), initial=0.0) <= 1e-10


@given(st.integers(0, 2**31 - 1))
def test_laplacians_symmetric_psd(seed):
    _, P, F = random_instance(np.random.default_rng(seed), max_elements=30)
    for cx in _flavors(P, F):
        for k in range(cx.top + 1):
            L = laplacian(cx, k)
            M = cx.gram(k)
            S = L if M is None else M @ L  # self-adjoint for the stalk inner product
            assert np.max(np.abs(S - S.T), initial=0.0) <= 1e-8 * max(1.0, np.abs(S).max(initial=0))
            if S.size:
                assert np.linalg.eigvalsh((S + S.T) / 2)[0] >= -1e-9 * max(1.0, np.abs(S).max())


@given(st.integers(0, 2**31 - 1))
def test_kernel_is_cocycles_and_cycles(seed):
    _, P, F = random_instance(np.random.default_rng(seed), max_elements=30)
    for cx in _flavors(P, F):
        for k in range(cx.top + 1):
            if cx.dim(k) == 0:
                continue
            L = laplacian(cx, k)
            lam = np.linalg.eigvals(L).real
            tol = max(cx.dim(k), 1) * 1e-9 * max(1.0, np.abs(lam).max())
            kerL = null_space(L, rcond=tol / max(1.0, np.abs(L).max()))
            stacked = np.vstack([cx.coboundary(k), cx.adjoint(k - 1)])
            kerD = null_space(stacked, rcond=1e-9) if stacked.size else np.eye(cx.dim(k))
            assert kerL.shape[1] == kerD.shape[1]
            if kerL.shape[1]:
                Qa, Qb = orth(kerL), orth(kerD)
                assert np.linalg.norm(Qa - Qb @ (Qb.T @ Qa)) <= 1e-8


@given(st.integers(0, 2**31 - 1))
def test_roos_and_cellular_betti_agree(seed):
    rng = np.random.default_rng(seed)
    kind, P, F = random_instance(rng, max_elements=25)
    if not is_cell_poset(P):
        return
    r, c = roos_complex(P, F), cellular_complex(P, F)
    for k in range(c.top + 1):
        assert betti(r, k) == betti(c, k)


def test_constant_sheaf_graph_laplacian(rng):
    nodes, edges = random_connected_graph(rng, 9, 0.3)
    G = graph_poset(nodes, edges)
    L = laplacian(cellular_complex(G, constant_sheaf(G)), 0)
    A = np.zeros((9, 9))
    idx = {str(v): i for i, v in enumerate(G.stratum(0))}
    for u, v in edges:
        A[idx[str(u)], idx[str(v)]] = A[idx[str(v)], idx[str(u)]] = 1
    assert np.array_equal(L, np.diag(A.sum(1)) - A)


def test_hollow_triangle_cohomology(hollow_triangle):
    P = hollow_triangle.poset
    F = constant_sheaf(P)
    for cx in (roos_complex(P, F), cellular_complex(P, F)):
        assert betti(cx, 0) == 1 and betti(cx, 1) == 1


def test_simplex_is_acyclic():
    P = full_simplex(4).poset
    cx = cellular_complex(P, constant_sheaf(P))
    assert [betti(cx, k) for k in range(cx.top + 1)] == [1, 0, 0, 0]


def test_hypergraph_not_cell():
    H = hypergraph_poset(["a", "b", "c"], {"h": ["a", "b", "c"]})
    with pytest.raises(NotCellPoset):
        cellular_complex(H, constant_sheaf(H))


def test_duta_kernel_matches_sections(rng):
    for _ in range(10):
        n = int(rng.integers(3, 9))
        hedges = {
            f"h{j}": sorted({str(v) for v in rng.choice(n, size=int(rng.integers(2, 4)), replace=False)})
            for j in range(int(rng.integers(1, 5)))
        }
        H = hypergraph_poset(range(n), hedges)
        F = constant_sheaf(H, 2)
        L, _ = duta_laplacian(H, F)
        dim_duta = L.shape[0] - np.linalg.matrix_rank(L)
        assert dim_duta == global_sections(H, F)[0].shape[1] == betti(roos_complex(H, F), 0)


def test_dirichlet_energy_split(full_triangle, rng):
    P = full_triangle.poset
    cx = cellular_complex(P, constant_sheaf(P))
    x = rng.standard_normal(cx.dim(1))
    e = dirichlet_energy(cx, 1, x)
    assert e.total == pytest.approx(x @ laplacian(cx, 1) @ x)
    assert e.up == pytest.approx(x @ laplacian(cx, 1, "up") @ x)


def test_normalized_laplacian_unit_diagonal():
    G = path_graph(5)
    F = symmetric_weight_sheaf(G, {"0,1": 3.0, "2,3": 0.5})
    L = laplacian(cellular_complex(G, F), 0, "normalized")
    np.testing.assert_allclose(np.diag(L), 1.0, atol=1e-12)


def test_vector_calculus(full_triangle):
    vc = vector_calculus(cellular_complex(full_triangle.poset, constant_sheaf(full_triangle.poset)))
    assert not np.any(vc.curl @ vc.grad)
    np.testing.assert_array_equal(vc.div, vc.grad.T)
    with pytest.raises(RankError):
        vector_calculus(cellular_complex(full_simplex(4).poset, constant_sheaf(full_simplex(4).poset)))


def test_unknown_laplacian_kind(edge):
    with pytest.raises(ValueError):
        laplacian(cellular_complex(edge, constant_sheaf(edge)), 0, "sideways")
