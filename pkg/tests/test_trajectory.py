import numpy as np
import pytest

from sheaflab.complexes import cellular_complex, laplacian
from sheaflab.errors import HoleTooLarge, IsolatedTerminal
from sheaflab.poset import simplicial_from_facets
from sheaflab.sheaf import constant_sheaf
from sheaflab.spectral import betti
from sheaflab.trajectory import (
    NsdConfig,
    NsdTask,
    PuncturedGrid,
    Trajectory,
    chance_level,
    encode,
    evaluate,
    encode_all,
    gen_punctured_grid,
    gen_trajectories,
    handcrafted_sheaf,
    kernel_predict,
    kernel_projectors,
    node_features,
    predict_next,
    run_method,
    split_indices,
    winding,
)


@pytest.fixture(scope="module")
def grid():
    return gen_punctured_grid()


@pytest.fixture(scope="module")
def data(grid):
    return gen_trajectories(grid, 250, 10, 0.8, seed=0)


def test_grid_shape(grid):
    assert (len(grid.nodes), len(grid.edges), len(grid.triangles)) == (140, 366, 226)
    cx = cellular_complex(grid.poset, constant_sheaf(grid.poset))
    assert betti(cx, 0) == 1 and betti(cx, 1) == 1 and betti(cx, 2) == 0
    assert len(grid.triangles_in("harmonic")) + len(grid.triangles_in("curl")) == 226


def test_grid_without_hole():
    g = gen_punctured_grid(8, 0.0)
    cx = cellular_complex(g.poset, constant_sheaf(g.poset))
    assert len(g.nodes) == 64 and betti(cx, 1) == 0


def test_grid_errors():
    with pytest.raises(HoleTooLarge):
        gen_punctured_grid(8, 3.0)
    with pytest.raises(ValueError):
        gen_punctured_grid(4)


def test_regions_partition_nodes(grid):
    assert set(grid.node_region.values()) == {"harmonic", "curl"}
    assert len(grid.node_region) == len(grid.nodes)


def test_dataset_size_and_labels(grid, data):
    assert len(data) == 500
    assert (data.regions() == "harmonic").sum() == 250
    for t in data.trajectories:
        assert len(t.nodes) == 9
        assert t.label in grid.neighbors[t.nodes[-1]]
        assert all(v in grid.neighbors[u] for u, v in zip(t.nodes[:-1], t.nodes[1:]))


def test_dataset_reproducible(grid, data):
    again = gen_trajectories(grid, 250, 10, 0.8, seed=0)
    assert [t.nodes + [t.label] for t in again.trajectories] == [t.nodes + [t.label] for t in data.trajectories]
    other = gen_trajectories(grid, 250, 10, 0.8, seed=1)
    assert [t.nodes for t in other.trajectories] != [t.nodes for t in data.trajectories]


def test_harmonic_walks_circle_the_hole(grid, data):
    turns = [winding(grid, t.nodes + [t.label]) for t in data.trajectories if t.region == "harmonic"]
    assert min(turns) > 0


def test_curl_walks_without_jumps(grid):
    d = gen_trajectories(grid, 20, 10, p_curl=0.0, seed=3)
    for t in d.trajectories:
        if t.region == "curl":
            assert all(grid.node_region[v] == "curl" for v in t.nodes)


def test_reversed_encoding_negates(grid, data):
    for t in data.trajectories[:50]:
        x = encode(grid, t.nodes)
        assert np.array_equal(encode(grid, t.nodes[::-1]), -x)


def test_handcrafted_laplacian_blocks(grid):
    cx_h = cellular_complex(grid.poset, handcrafted_sheaf(grid))
    cx_c = cellular_complex(grid.poset, constant_sheaf(grid.poset))
    Lh = laplacian(cx_h, 1)
    Ld, Lfull = laplacian(cx_c, 1, "down"), laplacian(cx_c, 1)
    P = grid.poset
    checked = {"curl": 0, "harmonic": 0}
    for i, e in enumerate(grid.edges):
        regions = {grid.triangle_region[t] for t in P.upper_covers(e)}
        if regions == {"curl"}:
            assert np.array_equal(Lh[i], Ld[i])
            checked["curl"] += 1
        elif regions == {"harmonic"}:
            assert np.array_equal(Lh[i], Lfull[i])
            checked["harmonic"] += 1
    assert min(checked.values()) > 50


def test_curl_walks_keep_kernel_component(grid, data):
    P = kernel_projectors(grid)
    X = encode_all(grid, data)[data.regions() == "curl"]
    kept_h = np.linalg.norm(X @ P["ker-handcrafted"].T, axis=1)
    kept_c = np.linalg.norm(X @ P["ker-constant"].T, axis=1)
    assert np.median(kept_h) > 2 * np.median(kept_c)


def test_single_neighbor_terminal():
    X = simplicial_from_facets([[0, 1], [1, 2], [0, 2], [2, 3]])
    coords = {v: np.array([float(i), 0.0]) for i, v in enumerate(X.ids(0))}
    nbrs = {v: [] for v in X.ids(0)}
    for u, v in X.simplices[1]:
        nbrs[u].append(v)
        nbrs[v].append(u)
    g = PuncturedGrid(X, coords, np.zeros(2), {v: "curl" for v in coords}, {}, nbrs)
    probs = kernel_predict(g, np.eye(4), Trajectory(["1", "2", "3"], "curl", "2"))
    assert probs == {"2": 1.0}
    g.neighbors["3"] = []
    with pytest.raises(IsolatedTerminal):
        kernel_predict(g, np.eye(4), Trajectory(["2", "3"], "curl", "2"))


def test_split_is_stratified(data):
    tr, te = split_indices(data, seed=4)
    assert len(te) == 100 and not set(tr) & set(te)
    assert (data.regions()[te] == "curl").sum() == 50


def test_node_features_scaled(grid):
    F = np.stack(list(node_features(grid).values()))
    assert np.abs(F).max() == pytest.approx(1.0)


def test_kernel_method_beats_chance(grid, data):
    res, _ = run_method("ker-handcrafted", grid, data, seed=0)
    assert res.accuracy["overall"] > chance_level(grid, data)


def test_nsd_loss_gradient(grid, data):
    task = NsdTask(grid, data)
    rng = np.random.default_rng(0)
    out = rng.standard_normal((3, len(grid.edges), 1))
    idx = np.array([0, 260, 7])
    _, dY, _ = task.loss(out, idx)
    h = 1e-6
    for j in rng.choice(len(grid.edges), 5, replace=False):
        E = np.zeros_like(out)
        E[1, j, 0] = h
        num = (task.loss(out + E, idx)[0] - task.loss(out - E, idx)[0]) / (2 * h)
        assert num == pytest.approx(dY[1, j, 0], abs=1e-7)


def test_short_nsd_run(grid, data):
    cfg = NsdConfig(hidden=4, layers=1, epochs=2)
    res, model = run_method("learned-NSD", grid, data, seed=0, cfg=cfg)
    assert 0 <= res.accuracy["overall"] <= 1 and len(res.train_log["loss"]) == 2
    probs = predict_next("learned-NSD", grid, data.trajectories[0], model=model)
    assert sum(probs.values()) == pytest.approx(1.0, abs=1e-6)


def test_report_independent_of_worker_count(grid):
    data = gen_trajectories(grid, 20, 10, 0.8, seed=1)
    cfg = NsdConfig(hidden=4, layers=1, epochs=2)
    methods = ["constant-NSD", "ker-up"]
    serial = evaluate(methods, grid, data, seeds=range(2), cfg=cfg, workers=1)
    assert evaluate(methods, grid, data, seeds=range(2), cfg=cfg, workers=2) == serial
    assert len(serial["runs"]) == 4
