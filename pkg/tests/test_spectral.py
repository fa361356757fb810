import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sheaflab.complexes import cellular_complex, dirichlet_energy, laplacian, roos_complex
from sheaflab.errors import NotCycles, NotSymmetric, RankDeficient, StepTooLarge
from sheaflab.generators import random_instance
from sheaflab.sheaf import constant_sheaf
from sheaflab.spectral import (
    betti,
    eig_sym,
    fourier,
    global_sections,
    harmonic_basis,
    heat_flow,
    hodge_decompose,
    hole_attribution,
    spectrum,
)

from conftest import path_graph


def _ip(cx, k, a, b):
    M = cx.gram(k)
    return float(a @ b) if M is None else float(a @ M @ b)


@given(st.integers(0, 2**31 - 1))
def test_hodge_orthogonal_and_complete(seed):
    rng = np.random.default_rng(seed)
    _, P, F = random_instance(rng, max_elements=30)
    cx = roos_complex(P, F)
    for k in range(cx.top + 1):
        if cx.dim(k) == 0:
            continue
        x = rng.standard_normal(cx.dim(k))
        r = hodge_decompose(cx, k, x)
        scale = max(1.0, np.linalg.norm(x))
        assert np.linalg.norm(r.reconstruction - x) <= 1e-8 * scale
        for a, b in [(r.harmonic, r.gradient), (r.harmonic, r.curl), (r.gradient, r.curl)]:
            assert abs(_ip(cx, k, a, b)) <= 1e-8 * scale**2


@given(st.integers(0, 2**31 - 1))
def test_kernel_dimension_equals_sections(seed):
    _, P, F = random_instance(np.random.default_rng(seed), max_elements=30)
    n_sections = global_sections(P, F)[0].shape[1]
    assert betti(roos_complex(P, F), 0) == n_sections
    if P.kind in ("simplicial", "graph"):
        assert betti(cellular_complex(P, F), 0) == n_sections


def test_eig_sym_sign_convention(rng):
    A = rng.standard_normal((5, 5))
    w, U = eig_sym(A + A.T)
    assert np.all(np.diff(w) >= 0)
    for j in range(5):
        assert U[np.flatnonzero(np.abs(U[:, j]) > 1e-12)[0], j] > 0


def test_eig_sym_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        eig_sym(np.array([[0.0, 1.0], [0.0, 0.0]]))


@given(st.integers(0, 2**31 - 1))
def test_exact_flow_properties(seed):
    rng = np.random.default_rng(seed)
    _, P, F = random_instance(rng, max_elements=30)
    cx = roos_complex(P, F)
    k = int(rng.integers(0, cx.top + 1))
    if cx.dim(k) == 0:
        return
    x0 = rng.standard_normal(cx.dim(k))
    tr = heat_flow(cx, k, x0, times=(0.0, 1.0, 5.0, 10.0))
    assert np.all(np.diff(tr.energies) <= 1e-9 * max(1.0, tr.energies[0]))
    rep = spectrum(cx, k)
    pos = rep.eigenvalues[rep.eigenvalues > rep.tol]
    lam = pos[0] if pos.size else np.inf
    R = None if cx.gram(k) is None else np.linalg.cholesky(cx.gram(k)).T
    norm = (lambda v: np.linalg.norm(v)) if R is None else (lambda v: np.linalg.norm(R @ v))
    for t, x in zip(tr.times[1:], tr.states[1:]):
        assert norm(x - tr.limit) <= np.exp(-lam * t) * norm(x0) * (1 + 1e-6) + 1e-12


def test_spectral_filter_identity(hollow_triangle, rng):
    P = hollow_triangle.poset
    cx = cellular_complex(P, constant_sheaf(P))
    x0 = rng.standard_normal(cx.dim(1))
    f0 = fourier(cx, 1, x0)
    tr = heat_flow(cx, 1, x0, times=(2.0,))
    f1 = fourier(cx, 1, tr.states[0])
    want = np.exp(-np.where(f0["eigenvalues"] < 1e-12, 0, f0["eigenvalues"]) * 2.0) * f0["coefficients"]
    np.testing.assert_allclose(f1["coefficients"], want, atol=1e-12)


def test_euler_reaches_exact_limit(rng):
    G = path_graph(6)
    cx = cellular_complex(G, constant_sheaf(G))
    x0 = rng.standard_normal(6)
    tr = heat_flow(cx, 0, x0, "euler", steps=10_000, stop_tol=1e-7)
    exact = heat_flow(cx, 0, x0).limit
    assert np.linalg.norm(tr.states[-1] - exact) <= 1e-6
    np.testing.assert_allclose(exact, np.full(6, x0.mean()), atol=1e-12)


def test_euler_step_too_large(edge):
    cx = cellular_complex(edge, constant_sheaf(edge))
    with pytest.raises(StepTooLarge):
        heat_flow(cx, 0, np.array([1.0, 0.0]), "euler", eta=0.5)


def test_hole_attribution_duality(hollow_triangle):
    P = hollow_triangle.poset
    cx = cellular_complex(P, constant_sheaf(P))
    z = np.array([1.0, -1.0, 1.0])  # 0→1→2→0 over edges 0,1 / 0,2 / 1,2
    att = hole_attribution(cx, 1, z[:, None], phi=np.array([2.0, 0.0, 1.0]))
    assert float(z @ att.alpha[:, 0]) == pytest.approx(1.0)
    assert att.coefficients[0] == pytest.approx(att.raw[0])
    with pytest.raises(NotCycles):
        hole_attribution(cx, 1, np.array([[1.0], [0.0], [0.0]]))
    with pytest.raises(RankDeficient):
        hole_attribution(cx, 1, np.zeros((3, 2)))


def test_harmonic_basis_in_kernel(full_triangle):
    P = full_triangle.poset
    cx = cellular_complex(P, constant_sheaf(P, 2))
    H = harmonic_basis(cx, 0)
    assert H.shape[1] == 2
    assert np.abs(laplacian(cx, 0) @ H).max() < 1e-12
    assert dirichlet_energy(cx, 0, H[:, 0]).total < 1e-20
