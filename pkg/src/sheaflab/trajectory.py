"""Synthetic next-node prediction on a triangulated grid with a hole.

Walks in the left half of the grid circle the hole (harmonic-like flows);
walks in the right half keep jumping around triangles (curl-like flows). A
method sees the 1-cochain of the first ``length - 1`` nodes and predicts the
last node among the neighbors of the terminal node.
"""

from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .complexes import cellular_complex
from .errors import HoleTooLarge, IsolatedTerminal, StuckWalk
from .io import save_results
from .nsd.geometry import CoboundaryPattern
from .nsd.learner import SheafLearner
from .nsd.model import NsdModel
from .nsd.optim import TrainConfig, train
from .parallel import pmap
from .poset import SimplicialComplex, simplicial_from_facets
from .sheaf import Sheaf, constant_sheaf, selector_sheaf
from .spectral import harmonic_projector

REGIONS = ("harmonic", "curl")
KERNEL_METHODS = ("ker-handcrafted", "ker-constant", "ker-up", "ker-down")
NSD_METHODS = ("constant-NSD", "handcrafted-NSD", "learned-NSD")
METHODS = NSD_METHODS + KERNEL_METHODS


@dataclass
class PuncturedGrid:
    complex: SimplicialComplex
    coords: dict[str, np.ndarray]
    center: np.ndarray
    node_region: dict[str, str]
    triangle_region: dict[str, str]
    neighbors: dict[str, list[str]]

    @property
    def poset(self):
        return self.complex.poset

    @property
    def nodes(self) -> list[str]:
        return self.complex.ids(0)

    @property
    def edges(self) -> list[str]:
        return self.complex.ids(1)

    @property
    def triangles(self) -> list[str]:
        return self.complex.ids(2)

    @cached_property
    def directed_edges(self) -> dict[tuple[str, str], tuple[int, float]]:
        """``(i, j) -> (edge index, +1 or -1)`` for both traversal directions of every edge."""
        out = {}
        for n, (u, v) in enumerate(self.complex.simplices[1]):
            out[(u, v)] = (n, 1.0)
            out[(v, u)] = (n, -1.0)
        return out

    def flow(self, h: np.ndarray, i: str, j: str) -> float:
        n, sg = self.directed_edges[(i, j)]
        return sg * h[n]

    def triangles_in(self, region: str) -> list[str]:
        return [t for t in self.triangles if self.triangle_region[t] == region]


def gen_punctured_grid(n: int = 12, hole_radius: float = 1.5) -> PuncturedGrid:
    """``n × n`` lattice nodes, squares split along alternating diagonals,
    nodes closer than ``hole_radius`` to the center removed with their triangles."""
    if n < 6:
        raise ValueError("the grid needs at least 6 nodes per side")
    c = (n - 1) / 2.0
    if hole_radius >= c - 1:
        raise HoleTooLarge(f"radius {hole_radius} reaches the grid boundary for n={n}")
    center = np.array([c, c])
    coords_all = {f"{y * n + x}": np.array([float(x), float(y)]) for y in range(n) for x in range(n)}
    keep = {v for v, p in coords_all.items() if np.linalg.norm(p - center) >= hole_radius}
    facets = []
    for y in range(n - 1):
        for x in range(n - 1):
            a, b, cc, d = y * n + x, y * n + x + 1, (y + 1) * n + x, (y + 1) * n + x + 1
            tris = [(a, b, d), (a, d, cc)] if (x + y) % 2 == 0 else [(a, b, cc), (b, d, cc)]
            for t in tris:
                t = tuple(str(v) for v in t)
                if all(v in keep for v in t):
                    facets.append(t)
    X = simplicial_from_facets(facets)
    coords = {v: coords_all[v] for v in X.ids(0)}
    node_region = {v: "harmonic" if coords[v][0] < c else "curl" for v in coords}
    tri_region = {}
    for t in X.simplices[2]:
        cen = np.mean([coords[v] for v in t], axis=0)
        tri_region[",".join(t)] = "harmonic" if cen[0] < c else "curl"
    nbrs: dict[str, list[str]] = {v: [] for v in coords}
    for u, v in X.simplices[1]:
        nbrs[u].append(v)
        nbrs[v].append(u)
    return PuncturedGrid(X, coords, center, node_region, tri_region, nbrs)


@dataclass
class Trajectory:
    nodes: list[str]
    region: str
    label: str


@dataclass
class TrajectoryDataset:
    trajectories: list[Trajectory]
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.trajectories)

    def regions(self) -> np.ndarray:
        return np.array([t.region for t in self.trajectories])


def _rot90(v: np.ndarray) -> np.ndarray:
    return np.array([-v[1], v[0]])


def _harmonic_walk(grid: PuncturedGrid, rng, length: int, region: str) -> list[str]:
    pool = [v for v in grid.nodes if grid.node_region[v] == region]
    walk = [pool[rng.integers(len(pool))]]
    while len(walk) < length:
        i = walk[-1]
        prev = walk[-2] if len(walk) > 1 else None
        cand = [j for j in grid.neighbors[i] if j != prev and grid.node_region[j] == region]
        if not cand:
            raise StuckWalk(i)
        turn = _rot90(grid.coords[i] - grid.center)
        score = np.array([(grid.coords[j] - grid.coords[i]) @ turn for j in cand])
        best = [j for j, s in zip(cand, score) if s >= score.max() - 1e-12]
        if score.max() <= 0:
            raise StuckWalk(i)
        walk.append(best[rng.integers(len(best))])
    return walk


def _curl_walk(grid: PuncturedGrid, rng, length: int, region: str, p_curl: float) -> list[str]:
    pool = [v for v in grid.nodes if grid.node_region[v] == region]
    walk = [pool[rng.integers(len(pool))]]
    tri = grid.complex.simplices[2]
    while len(walk) < length:
        i = walk[-1]
        prev = walk[-2] if len(walk) > 1 else None
        jump = []
        if prev is not None and rng.random() < p_curl:
            for t in tri:
                if i in t and prev in t:
                    (o,) = [v for v in t if v not in (i, prev)]
                    if grid.node_region[o] == region:
                        jump.append(o)
        if jump:
            walk.append(jump[rng.integers(len(jump))])
            continue
        cand = [j for j in grid.neighbors[i] if j != prev and grid.node_region[j] == region]
        if not cand:
            raise StuckWalk(i)
        walk.append(cand[rng.integers(len(cand))])
    return walk


def gen_trajectories(
    grid: PuncturedGrid,
    count_per_region: int = 250,
    length: int = 10,
    p_curl: float = 0.8,
    seed: int = 0,
    max_retries: int = 1000,
) -> TrajectoryDataset:
    """``length`` nodes per walk; the last node becomes the label.

    Every walk draws from its own stream seeded by ``(seed, region, index)``,
    so the dataset does not depend on generation order.
    """
    if length < 2:
        raise ValueError("walks need at least two nodes")
    out = []
    for r, region in enumerate(REGIONS):
        for idx in range(count_per_region):
            rng = np.random.default_rng([seed, r, idx])
            for _ in range(max_retries):
                try:
                    if region == "harmonic":
                        w = _harmonic_walk(grid, rng, length, region)
                    else:
                        w = _curl_walk(grid, rng, length, region, p_curl)
                    break
                except StuckWalk:
                    continue
            else:
                raise StuckWalk(f"no {region} walk of length {length} after {max_retries} tries")
            out.append(Trajectory(w[:-1], region, w[-1]))
    params = dict(count_per_region=count_per_region, length=length, p_curl=p_curl, seed=seed)
    return TrajectoryDataset(out, params)


def winding(grid: PuncturedGrid, nodes: list[str]) -> float:
    """Total signed angle (radians) swept about the hole center."""
    ang = [np.arctan2(*(grid.coords[v] - grid.center)[::-1]) for v in nodes]
    steps = np.diff(ang)
    return float(np.sum((steps + np.pi) % (2 * np.pi) - np.pi))


def encode(grid: PuncturedGrid, nodes: list[str]) -> np.ndarray:
    """``[i_0, i_1] + … + [i_{m-2}, i_{m-1}]`` as an edge cochain in the oriented basis."""
    x = np.zeros(len(grid.edges))
    for u, v in zip(nodes[:-1], nodes[1:]):
        n, sg = grid.directed_edges[(u, v)]
        x[n] += sg
    return x


def encode_all(grid: PuncturedGrid, data: TrajectoryDataset) -> np.ndarray:
    return np.stack([encode(grid, t.nodes) for t in data.trajectories])


# -- sheaves --------------------------------------------------------------


def handcrafted_sheaf(grid: PuncturedGrid) -> Sheaf:
    """Constant sheaf with the stalks of curl-region triangles set to zero maps."""
    return selector_sheaf(grid.complex, "mask", grid.triangles_in("harmonic"))


def baseline_sheaf(grid: PuncturedGrid, name: str) -> Sheaf:
    if name == "handcrafted":
        return handcrafted_sheaf(grid)
    if name == "constant":
        return constant_sheaf(grid.poset, 1)
    if name in ("up", "down"):
        return selector_sheaf(grid.complex, name)
    raise ValueError(f"unknown sheaf {name!r}")


# -- prediction ------------------------------------------------------------


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


class _Readout:
    """Node signals ``d⁰ᵀ y`` (net inflow) and neighbor lookups."""

    def __init__(self, grid: PuncturedGrid):
        self.grid = grid
        self.node_index = {v: i for i, v in enumerate(grid.nodes)}
        pat = CoboundaryPattern(grid.poset, 0, 1)
        self.d0 = pat.matrix(np.ones((pat.n_covers, 1, 1)))
        self.d0t = self.d0.T.tocsr()

    def neighbors(self, terminal: str) -> list[str]:
        nb = self.grid.neighbors[terminal]
        if not nb:
            raise IsolatedTerminal(terminal)
        return nb

    def node_signal(self, y: np.ndarray) -> np.ndarray:
        return self.d0t @ y


def kernel_projectors(grid: PuncturedGrid) -> dict[str, np.ndarray]:
    out = {}
    for name in ("handcrafted", "constant", "up", "down"):
        cx = cellular_complex(grid.poset, baseline_sheaf(grid, name))
        out[f"ker-{name}"] = harmonic_projector(cx, 1)
    return out


def kernel_predict(grid: PuncturedGrid, projector: np.ndarray, traj: Trajectory) -> dict[str, float]:
    """Project the encoding onto ``ker Δ_F``; score each neighbor by the flow toward it."""
    rd = _Readout(grid)
    h = projector @ encode(grid, traj.nodes)
    i = traj.nodes[-1]
    nb = rd.neighbors(i)
    flow = np.array([grid.flow(h, i, j) for j in nb])
    return dict(zip(nb, _softmax(flow)))


@dataclass
class NsdTask:
    """Cross-entropy over the softmax of node signals on the terminal's neighbors."""

    grid: PuncturedGrid
    data: TrajectoryDataset

    def __post_init__(self):
        self.rd = _Readout(self.grid)
        ni = self.rd.node_index
        self.nbr_idx = [np.array([ni[j] for j in self.rd.neighbors(t.nodes[-1])]) for t in self.data.trajectories]
        self.label_pos = [
            self.rd.neighbors(t.nodes[-1]).index(t.label) if t.label in self.grid.neighbors[t.nodes[-1]] else -1
            for t in self.data.trajectories
        ]
        width = max(len(a) for a in self.nbr_idx)
        self._nbr_pad = np.zeros((len(self.nbr_idx), width), dtype=int)
        self._nbr_mask = np.zeros((len(self.nbr_idx), width), dtype=bool)
        for n, a in enumerate(self.nbr_idx):
            self._nbr_pad[n, : len(a)] = a
            self._nbr_mask[n, : len(a)] = True

    def logits(self, out: np.ndarray, n: int, b: int) -> np.ndarray:
        return self.rd.node_signal(out[b, :, 0])[self.nbr_idx[n]]

    def loss(self, out: np.ndarray, idx: np.ndarray):
        idx = np.asarray(idx)
        B = len(idx)
        S = np.asarray(self.rd.d0t @ out[:, :, 0].T, dtype=np.float64).T
        nb, mask, y = self._nbr_pad[idx], self._nbr_mask[idx], np.asarray(self.label_pos)[idx]
        z = np.where(mask, np.take_along_axis(S, nb, axis=1), -np.inf)
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        rows = np.arange(B)
        total = -float(np.sum(np.log(np.maximum(p[rows, y], 1e-300))))
        hits = int(np.sum(np.argmax(p, axis=1) == y))
        g = p
        g[rows, y] -= 1.0
        dS = np.zeros_like(S)
        np.add.at(dS, (rows[:, None], nb), np.where(mask, g / B, 0.0))
        dY = (self.rd.d0 @ dS.T).T
        return total / B, dY[:, :, None], hits


@dataclass
class NsdConfig:
    hidden: int = 32
    layers: int = 4
    epochs: int = 100
    lr: float = 3e-3
    batch_size: int = 32
    eta: float = 0.5
    dtype: str = "float32"


def node_features(grid: PuncturedGrid) -> dict[str, np.ndarray]:
    """Node coordinates centered on the hole and scaled to [-1, 1]."""
    s = float(np.max(np.abs(np.stack(list(grid.coords.values())) - grid.center)))
    return {v: (p - grid.center) / s for v, p in grid.coords.items()}


def build_nsd(grid: PuncturedGrid, method: str, seed: int, cfg: NsdConfig = NsdConfig()) -> NsdModel:
    dims = [1] + [cfg.hidden] * cfg.layers
    kw: dict = {}
    if method == "constant-NSD":
        kw["sheaf"] = constant_sheaf(grid.poset, 1)
    elif method == "handcrafted-NSD":
        kw["sheaf"] = handcrafted_sheaf(grid)
    elif method == "learned-NSD":
        kw["learner"] = SheafLearner(1, {0: 4, 1: 4}, "general", seed=seed + 10_000)
        kw["features"] = node_features(grid)
    else:
        raise ValueError(f"unknown NSD method {method!r}")
    return NsdModel.build(grid.poset, 1, 1, dims, seed=seed, readout=1, eta=cfg.eta, dtype=cfg.dtype, **kw)


def split_indices(data: TrajectoryDataset, seed: int, test_fraction: float = 0.2):
    """Stratified by region: ``test_fraction`` of each region goes to the test set."""
    rng = np.random.default_rng(seed)
    regions = data.regions()
    train_idx, test_idx = [], []
    for r in REGIONS:
        idx = np.flatnonzero(regions == r)
        idx = idx[rng.permutation(len(idx))]
        m = int(round(test_fraction * len(idx)))
        test_idx.extend(idx[:m].tolist())
        train_idx.extend(idx[m:].tolist())
    return np.array(sorted(train_idx)), np.array(sorted(test_idx))


def predict_next(method, grid: PuncturedGrid, traj: Trajectory, model=None, projector=None) -> dict[str, float]:
    """Distribution over the neighbors of the terminal node."""
    if method in KERNEL_METHODS:
        return kernel_predict(grid, projector, traj)
    rd = _Readout(grid)
    nb = rd.neighbors(traj.nodes[-1])
    y = model.forward(encode(grid, traj.nodes)[:, None])[:, 0]
    s = rd.node_signal(y)
    return dict(zip(nb, _softmax(s[[rd.node_index[j] for j in nb]])))


@dataclass
class EvalResult:
    method: str
    seed: int
    accuracy: dict[str, float]
    train_log: dict | None = None


def _accuracy(hits: np.ndarray, regions: np.ndarray) -> dict[str, float]:
    out = {"overall": float(np.mean(hits)) if hits.size else float("nan")}
    for r in REGIONS:
        m = regions == r
        out[r] = float(np.mean(hits[m])) if m.any() else float("nan")
    return out


def run_method(
    method: str,
    grid: PuncturedGrid,
    data: TrajectoryDataset,
    seed: int,
    cfg: NsdConfig = NsdConfig(),
    projectors: dict | None = None,
    enc: np.ndarray | None = None,
) -> tuple[EvalResult, NsdModel | None]:
    """Train (NSD methods) on the seed's training split and score the test split."""
    tr, te = split_indices(data, seed)
    regions = data.regions()[te]
    if enc is None:
        enc = encode_all(grid, data)
    if method in KERNEL_METHODS:
        P = (projectors or kernel_projectors(grid))[method]
        H = enc[te] @ P.T
        rd = _Readout(grid)
        hits = []
        for h, n in zip(H, te):
            t = data.trajectories[n]
            i = t.nodes[-1]
            nb = rd.neighbors(i)
            flow = [grid.flow(h, i, j) for j in nb]
            hits.append(nb[int(np.argmax(flow))] == t.label)
        return EvalResult(method, seed, _accuracy(np.array(hits), regions)), None
    model = build_nsd(grid, method, seed, cfg)
    task = NsdTask(grid, data)
    inputs = enc[:, :, None]

    def loss_fn(out, idx):
        return task.loss(out, tr[idx])

    log = train(model, inputs[tr], loss_fn, TrainConfig(cfg.epochs, cfg.lr, cfg.batch_size, seed))
    out = model.forward(inputs[te])
    hits = np.array(
        [int(np.argmax(task.logits(out, n, b))) == task.label_pos[n] for b, n in enumerate(te)]
    )
    return EvalResult(method, seed, _accuracy(hits, regions), log.to_record()), model


def chance_level(grid: PuncturedGrid, data: TrajectoryDataset) -> float:
    return float(np.mean([1.0 / len(grid.neighbors[t.nodes[-1]]) for t in data.trajectories]))


def _run_job(job) -> EvalResult:
    return run_method(*job)[0]


def evaluate(
    methods,
    grid: PuncturedGrid,
    data: TrajectoryDataset,
    seeds=(0,),
    cfg: NsdConfig = NsdConfig(),
    out_dir: str | Path | None = None,
    workers: int | None = None,
) -> dict:
    """Accuracy per method, seed and region, plus medians over seeds.

    Runs are independent and spread over ``workers`` processes (default
    ``parallel.worker_count()``); each run is single-threaded and seeded, so
    the report does not depend on the worker count. When ``out_dir`` is given,
    writes ``trajectory_results.json`` and ``trajectory_results.csv`` there.
    """
    enc = encode_all(grid, data)
    projectors = kernel_projectors(grid) if any(m in KERNEL_METHODS for m in methods) else None
    jobs = [(m, grid, data, s, cfg, projectors, enc) for m in methods for s in seeds]
    rows = pmap(_run_job, jobs, workers)
    median = {}
    for m in methods:
        accs = [r.accuracy for r in rows if r.method == m]
        median[m] = {k: float(np.median([a[k] for a in accs])) for k in ("overall",) + REGIONS}
    report = {
        "chance": chance_level(grid, data),
        "median": median,
        "runs": [{"method": r.method, "seed": r.seed, **r.accuracy} for r in rows],
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_results(report, out / "trajectory_results.json")
        (out / "trajectory_results.csv").write_text(results_csv(report))
    return report


def results_csv(report: dict) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "seed", "overall", *REGIONS])
    for r in report["runs"]:
        w.writerow([r["method"], r["seed"], repr(r["overall"]), *(repr(r[k]) for k in REGIONS)])
    return buf.getvalue()


def restriction_magnitudes(model: NsdModel, grid: PuncturedGrid) -> list[dict]:
    """Edge-triangle restriction magnitudes of a learned-sheaf model, with triangle regions."""
    ops = model._sheaf_operators(None)
    R = ops["R"][1]
    out = []
    for (e, t), r in zip(model.up.covers, R):
        out.append({"edge": e, "triangle": t, "region": grid.triangle_region[t], "magnitude": float(np.abs(r).max())})
    return out
