import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sheaflab.complexes import cellular_complex, laplacian
from sheaflab.errors import ClassViolation, ShapeError, TapeMissing
from sheaflab.generators import random_connected_graph
from sheaflab.nsd import (
    Adam,
    NsdLayer,
    NsdModel,
    SheafLearner,
    TrainConfig,
    energy_bound_check,
    gradient_check,
    is_odd,
    learn_restrictions,
    nsd_forward,
    nsd_grad,
    sheaf_energy,
    train,
)
from sheaflab.poset import Poset, graph_poset, simplicial_from_facets
from sheaflab.sheaf import constant_sheaf, random_bundle, scalar_sheaf

COMPLEX = simplicial_from_facets([[0, 1, 2], [1, 2, 3], [2, 3, 4], [0, 4]])


def _weighted_loss(out):
    w = np.arange(1, out.size + 1).reshape(out.shape) / out.size
    return 0.5 * float(np.sum(w * out**2)), w * out


def _features(P, f=3, seed=0):
    rng = np.random.default_rng(seed)
    return {s: rng.standard_normal(f) for s in P.stratum(0)}


def _learned(P, k, d, mode, dims=(2, 3), seed=1):
    ranks = [j for j in (k - 1, k) if 0 <= j < P.max_rank]
    L = SheafLearner(d, {j: 6 for j in ranks}, mode, hidden=5, seed=seed + 1, init_scale=1.0)
    return NsdModel.build(P, k, d, list(dims), seed=seed, learner=L, features=_features(P), eta=0.3)


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("d", [1, 2])
def test_gradcheck_fixed_sheaf(k, d):
    P = COMPLEX.poset
    m = NsdModel.build(P, k, d, [2, 3, 2], seed=k + d, sheaf=random_bundle(P, d, "orthogonal", 3), eta=0.3, readout=2)
    X = np.random.default_rng(0).standard_normal((3, m.M, 2))
    errs = gradient_check(m, X, _weighted_loss)
    assert max(errs.values()) <= 1e-4, errs


@pytest.mark.parametrize("mode", ["general", "diagonal", "orthogonal"])
@pytest.mark.parametrize("k,d", [(0, 2), (1, 1), (1, 2)])
def test_gradcheck_learned_sheaf(mode, k, d):
    m = _learned(COMPLEX.poset, k, d, mode)
    X = np.random.default_rng(1).standard_normal((2, m.M, 2))
    errs = gradient_check(m, X, _weighted_loss)
    assert max(errs.values()) <= 1e-4, errs


def test_input_gradient():
    P = COMPLEX.poset
    m = NsdModel.build(P, 1, 2, [2, 2], seed=0, sheaf=random_bundle(P, 2, "orthogonal", 1))
    X = np.random.default_rng(2).standard_normal((m.M, 2))
    _, dY = _weighted_loss(m.forward(X))
    m.backward(dY)
    h, num = 1e-6, np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        E = np.zeros_like(X)
        E[idx] = h
        num[idx] = (_weighted_loss(m.forward(X + E))[0] - _weighted_loss(m.forward(X - E))[0]) / (2 * h)
    np.testing.assert_allclose(m.input_grad, num, rtol=1e-6, atol=1e-8)


def test_linear_closed_form_gradient(rng):
    """One linear layer on a graph with d=1: dL/dW_cc = w_sc Xᵀ C for L = ⟨Y, C⟩."""
    G = graph_poset(range(4), [(0, 1), (1, 2), (2, 3), (0, 3)])
    m = NsdModel.build(G, 0, 1, [3, 2], seed=5, phi="id", sheaf=constant_sheaf(G))
    X = rng.standard_normal((4, 3))
    C = rng.standard_normal((4, 2))
    m.forward(X)
    g = m.backward(C)
    wsc = m.layers[0].Wsc[0, 0]
    np.testing.assert_allclose(g["layer0.Wcc"], wsc * X.T @ C, atol=1e-12)
    Lu = laplacian(cellular_complex(G, constant_sheaf(G)), 0, "up")
    A = 0.5 * np.eye(4) - 2 * m.eta * Lu
    np.testing.assert_allclose(g["layer0.Wcu"], m.layers[0].Wsu[0, 0] * (A @ X).T @ C, atol=1e-12)


@pytest.mark.parametrize("k,d", [(0, 1), (1, 1), (1, 3), (2, 2)])
def test_identity_layer_is_diffusion_step(k, d):
    P = COMPLEX.poset
    F = random_bundle(P, d, "orthogonal", 7)
    eta = 0.2
    m = NsdModel(P, k, d, [NsdLayer.identity(d, 2)], sheaf=F, eta=eta)
    X = np.random.default_rng(3).standard_normal((m.M, 2))
    L = laplacian(cellular_complex(P, F), k)
    np.testing.assert_allclose(m.forward(X), X - 2 * eta * L @ X, atol=1e-12)


def _reorient(P: Poset, s: str) -> Poset:
    signs = {c: (-v if s in c else v) for c, v in P.signs.items()}
    return Poset(P.elements, P.covers, signs=signs, kind=P.kind, vertex_order=P.vertex_order)


@given(st.integers(0, 2**31 - 1), st.sampled_from([(0, 1), (1, 1), (1, 2), (2, 2)]), st.booleans())
def test_orientation_equivariance(seed, kd, learned):
    k, d = kd
    rng = np.random.default_rng(seed)
    P = COMPLEX.poset
    target = P.stratum(k)[int(rng.integers(len(P.stratum(k))))]
    Q = _reorient(P, target)

    def model(base):
        if learned:
            return _learned(base, k, d, "general", seed=seed % 1000)
        F = random_bundle(P, d, "orthogonal", seed % 1000)
        G = type(F)(base, F.stalk_dim, F.restriction)
        return NsdModel.build(base, k, d, [2, 3, 2], seed=seed % 1000, sheaf=G, readout=1)

    m, m2 = model(P), model(Q)
    X = rng.standard_normal((m.M, 2))
    pos = P.stratum(k).index(target)
    S = np.ones(m.M)
    S[pos * d: (pos + 1) * d] = -1
    Y, Y2 = nsd_forward(m, X), nsd_forward(m2, S[:, None] * X)
    assert np.array_equal(Y2, S[:, None] * Y)


def test_tanh_is_odd():
    assert is_odd("tanh") and is_odd("id") and not is_odd("relu")


def test_backward_needs_forward():
    P = COMPLEX.poset
    m = NsdModel.build(P, 0, 1, [1, 1], sheaf=constant_sheaf(P))
    with pytest.raises(TapeMissing):
        nsd_grad(m, np.zeros((m.M, 1)))


def test_shape_error():
    P = COMPLEX.poset
    m = NsdModel.build(P, 0, 1, [2, 1], sheaf=constant_sheaf(P))
    with pytest.raises(ShapeError):
        m.forward(np.zeros((m.M + 1, 2)))


def test_zero_upstream_gives_zero_gradients():
    m = _learned(COMPLEX.poset, 1, 2, "general")
    X = np.random.default_rng(4).standard_normal((m.M, 2))
    grads = m.backward(np.zeros_like(m.forward(X)))
    assert all(not np.any(g) for g in grads.values())


def test_sheaf_and_learner_exclusive():
    P = COMPLEX.poset
    with pytest.raises(ValueError):
        NsdModel(P, 0, 1, [NsdLayer.identity(1, 1)])


def test_adam_zero_lr_keeps_params(rng):
    p = {"a": rng.standard_normal(3)}
    out = Adam(p, lr=0.0).step(p, {"a": rng.standard_normal(3)})
    assert np.array_equal(out["a"], p["a"])


def _toy_task(m, n=24, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m.M, 2))
    T = np.tanh(X[..., :1] - X[..., 1:])

    def loss(out, idx):
        r = out - T[idx]
        return 0.5 * float(np.mean(np.sum(r**2, axis=(1, 2)))), r / len(idx), 0

    return X, loss


def test_training_reduces_loss():
    P = COMPLEX.poset
    m = NsdModel.build(P, 1, 1, [2, 4, 1], seed=0, sheaf=constant_sheaf(P))
    X, loss = _toy_task(m)
    log = train(m, X, loss, TrainConfig(epochs=30, lr=1e-2, batch_size=8))
    assert log.loss[-1] < 0.5 * log.loss[0]


def test_orthogonal_maps_stay_orthogonal():
    P = COMPLEX.poset
    m = _learned(P, 1, 3, "orthogonal", dims=(2, 1))
    X, loss = _toy_task(m)
    train(m, X, loss, TrainConfig(epochs=10, lr=5e-2, batch_size=6))
    F = learn_restrictions(m.learner, m.features, P)
    for m_ in F.restriction.values():
        if np.any(m_):
            np.testing.assert_allclose(m_ @ m_.T, np.eye(3), atol=1e-6)


def _positive_instance(rng):
    nodes, edges = random_connected_graph(rng, int(rng.integers(3, 15)), 0.3)
    G = graph_poset(nodes, edges)
    F = scalar_sheaf(G, {c: float(rng.uniform(0.2, 3.0)) * rng.choice([-1, 1]) for c in G.covers}, 1)
    # make the product on every edge positive
    for e in G.stratum(1):
        u, v = G.lower_covers(e)
        if F.restriction[(u, e)][0, 0] * F.restriction[(v, e)][0, 0] < 0:
            F.restriction[(v, e)] = -F.restriction[(v, e)]
    return G, F


@given(st.integers(0, 2**31 - 1))
def test_energy_bound(seed):
    rng = np.random.default_rng(seed)
    G, F = _positive_instance(rng)
    f = int(rng.integers(1, 4))
    rep = energy_bound_check(G, F, rng.normal(), rng.standard_normal((f, f)), rng.standard_normal((len(G.stratum(0)), f)))
    assert rep.holds and 0 < rep.lambda_star <= 1 + 1e-12


def test_harmonic_signal_has_zero_energy(rng):
    # restrictions from positive potentials a_v, so x_v ∝ a_v is a global section
    nodes, edges = random_connected_graph(rng, 10, 0.3)
    G = graph_poset(nodes, edges)
    a = {v: rng.uniform(0.5, 2.0) for v in G.stratum(0)}
    c = {e: rng.uniform(0.5, 2.0) for e in G.stratum(1)}
    F = scalar_sheaf(G, {(v, e): c[e] / a[v] for v, e in G.covers}, 1)
    L = laplacian(cellular_complex(G, F), 0, "normalized")
    w, U = np.linalg.eigh(L)
    assert w[0] < 1e-12 and w[1] > 1e-6
    X = np.abs(U[:, :1])
    assert sheaf_energy(L, X) < 1e-12
    rep = energy_bound_check(G, F, 2.0, np.array([[0.5]]), X)
    assert rep.lhs < 1e-12 and rep.holds


def test_energy_bound_class_check(edge):
    F = scalar_sheaf(edge, {("u", "u,v"): -1.0}, 1)
    with pytest.raises(ClassViolation):
        energy_bound_check(edge, F, 1.0, np.eye(1), np.ones((2, 1)))


def test_zero_learner_gives_zero_laplacian():
    P = COMPLEX.poset
    L = SheafLearner(2, {0: 6, 1: 6}, "general", hidden=4)
    for v in L.params.values():
        v[...] = 0
    F = learn_restrictions(L, _features(P), P)
    assert not any(np.any(m) for m in F.restriction.values())
    assert not np.any(laplacian(cellular_complex(P, F), 1))
