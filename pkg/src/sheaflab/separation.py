"""Linear separation power of sheaf diffusion limits.

Each experiment builds a sheaf for a classification task, takes the exact
diffusion limit ``Π x(0)`` of a Gaussian initial cochain and asks whether the
per-element limit embeddings are linearly separable by class.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import linprog

from .complexes import cellular_complex, laplacian
from .errors import DegenerateInput, HypothesisViolated, NotContractible
from .poset import Poset, SimplicialComplex
from .sheaf import (
    Sheaf,
    _partition,
    class_sum_sheaf,
    constant_sheaf,
    lying_sheaf,
    random_bundle,
    scalar_sheaf,
    sign_vector,
)
from .spectral import betti, eig_sym, kernel_tol, spectrum

MARGIN_TOL = 1e-9


@dataclass
class ClassTask:
    poset: Poset
    k: int
    labels: dict[str, object]

    def __post_init__(self):
        _partition(self.poset, self.k, self.labels)

    @property
    def classes(self) -> list:
        return sorted({self.labels[s] for s in self.labels}, key=str)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def members(self, c) -> list[str]:
        return [s for s in self.poset.stratum(self.k) if self.labels[s] == c]


@dataclass
class SeparationVerdict:
    separable: bool
    degenerate: bool = False
    witness: list[dict] = field(default_factory=list)
    certificate: str = ""
    embedding: dict[str, np.ndarray] | None = None
    info: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "separable": bool(self.separable),
            "degenerate": bool(self.degenerate),
            "certificate": self.certificate,
            "witness": [
                {"class": str(w["class"]), "w": list(map(float, w["w"])), "b": float(w["b"]),
                 "margin": float(w["margin"])}
                for w in self.witness
            ],
            "info": {k: (v if isinstance(v, (int, float, str, bool, list)) else str(v))
                     for k, v in self.info.items()},
        }


def _max_margin(X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Largest δ with ``y_i (w·x_i + b) ≥ δ`` over ``|w_j|, |b| ≤ 1``; returns (δ, w, b)."""
    n, p = X.shape
    # variables: w (p), b, δ ; maximise δ
    c = np.zeros(p + 2)
    c[-1] = -1.0
    A = np.hstack([-y[:, None] * X, -y[:, None], np.ones((n, 1))])
    bounds = [(-1, 1)] * (p + 1) + [(None, 1)]
    r = linprog(c, A_ub=A, b_ub=np.zeros(n), bounds=bounds, method="highs")
    if r.status != 0:
        return -np.inf, np.zeros(p), 0.0
    return float(r.x[-1]), r.x[:p], float(r.x[p])


def linearly_separable(points, labels) -> SeparationVerdict:
    """Decide one-vs-rest strict linear separability of labelled points.

    Points are rescaled by their largest absolute coordinate; a class counts as
    separated when the maximal margin exceeds 1e-9. Coincident points carrying
    different labels are reported as a non-separable certificate.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = list(labels)
    if X.shape[0] == 0 or X.shape[0] != len(labels):
        raise DegenerateInput("need one label per point and at least one point")
    if not np.all(np.isfinite(X)):
        raise DegenerateInput("non-finite coordinates")
    classes = sorted(set(labels), key=str)
    if len(classes) == 1:
        return SeparationVerdict(True, certificate="single class")
    scale = np.max(np.abs(X))
    if scale == 0:
        return SeparationVerdict(False, degenerate=True, certificate="all points at the origin")
    Xn = X / scale
    seen: dict[bytes, object] = {}
    for row, lab in zip(np.round(Xn, 12), labels):
        key = row.tobytes()
        if key in seen and seen[key] != lab:
            return SeparationVerdict(False, certificate="coincident points with different labels")
        seen.setdefault(key, lab)
    lab_arr = np.array([classes.index(l) for l in labels])
    witness, ok = [], True
    targets = classes[:1] if len(classes) == 2 else classes
    for c in targets:
        y = np.where(lab_arr == classes.index(c), 1.0, -1.0)
        delta, w, b = _max_margin(Xn, y)
        witness.append({"class": c, "w": w / scale, "b": b, "margin": delta})
        if not delta > MARGIN_TOL:
            ok = False
    cert = "" if ok else "some class has no strictly separating hyperplane"
    return SeparationVerdict(ok, witness=witness, certificate=cert)


# -- graph helpers -----------------------------------------------------------


def is_connected(P: Poset) -> bool:
    parent = {s: s for s in P.elements}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for s, t in P.covers:
        parent[find(s)] = find(t)
    return len({find(s) for s in P.elements}) <= 1


def node_neighbors(G: Poset) -> dict[str, list[str]]:
    nb = {v: [] for v in G.stratum(0)}
    for e in G.stratum(1):
        ends = G.lower_covers(e)
        for v in ends:
            nb[v].extend(u for u in ends if u != v)
    return nb


def normalized_sym_sheaf(G: Poset, A, N: float) -> Sheaf:
    """Weight √N on both ends of edges inside ``A`` and 1 elsewhere."""
    a = set(A)
    vals = {}
    for v, e in G.covers:
        ends = G.lower_covers(e)
        vals[(v, e)] = np.sqrt(N) if all(u in a for u in ends) else 1.0
    return scalar_sheaf(G, vals, max_rank=1)


def asym_positive_sheaf(G: Poset, rng: np.random.Generator) -> Sheaf:
    vals = {c: float(rng.uniform(0.5, 2.0)) for c in G.covers}
    return scalar_sheaf(G, vals, max_rank=1)


def hypotheses(family: str, G: Poset, task: ClassTask) -> tuple[bool, str]:
    """Whether the family's separation theorem applies to ``task``."""
    if task.n_classes == 1:
        return True, "single class"
    if not is_connected(G):
        return False, "graph is not connected"
    if family == "normalized-sym":
        if task.n_classes != 2:
            return False, "normalized-sym separates at most two classes"
        A = task.members(task.classes[0])
        nb = node_neighbors(G)
        lonely = [v for v in A if not any(task.labels[u] == task.classes[0] for u in nb[v])]
        if lonely:
            return False, f"{len(lonely)} nodes of the first class have no neighbor in it"
        return True, "every node of the first class has a same-class neighbor"
    if family == "lying-1d":
        if task.n_classes > 2:
            return False, "a one-dimensional lying sheaf cannot separate three or more classes"
        return True, "connected two-class task"
    if family == "lying-ld":
        return True, "connected task"
    return False, f"{family} has no separation guarantee on connected graphs"


def _limit(cx, k: int, x0: np.ndarray, kind: str) -> np.ndarray:
    if kind == "normalized":
        L = laplacian(cx, k, "normalized")
        w, U = eig_sym(L)
        H = U[:, w <= max(kernel_tol(w, L.shape[0]), 1e-10)]
        return H @ (H.T @ x0)
    return spectrum(cx, k).projector @ x0


def _embed(cx, k: int, x: np.ndarray, elems: list[str]) -> np.ndarray:
    return np.array([x[cx.slices[k][s]] for s in elems])


def _verdict_from_limit(cx, task: ClassTask, x: np.ndarray) -> SeparationVerdict:
    elems = task.poset.stratum(task.k)
    E = _embed(cx, task.k, x, elems)
    if np.linalg.norm(x) <= 1e-12 * max(1.0, np.sqrt(x.size)):
        v = SeparationVerdict(False, degenerate=True, certificate="diffusion limit is zero")
    else:
        v = linearly_separable(E, [task.labels[s] for s in elems])
    v.embedding = {s: E[i] for i, s in enumerate(elems)}
    return v


def run_hierarchy(
    G: Poset,
    task: ClassTask,
    family: str,
    seed: int = 0,
    x0: np.ndarray | None = None,
    expect_separable: bool | None = None,
    weights: Mapping[str, float] | None = None,
) -> SeparationVerdict:
    """Diffuse a random node signal to the limit with one sheaf family and test separation.

    Families: ``unnormalized`` (constant sheaf), ``normalized-sym`` (√N weights
    on same-class edges of the first class, normalized Laplacian, N doubled from
    4·max-degree up to 2**20; or fixed ``weights``), ``asym-positive``,
    ``lying-1d`` (first class against the rest) and ``lying-ld`` (one lying
    sheaf per class, summed).
    """
    if task.k != 0:
        raise ValueError("run_hierarchy handles node (rank-0) tasks")
    ok, why = hypotheses(family, G, task)
    if expect_separable and not ok:
        raise HypothesisViolated(why)
    rng = np.random.default_rng(seed)
    first = task.members(task.classes[0])
    kind = "full"
    info = {"family": family, "hypotheses": why, "seed": seed}

    def attempt(F: Sheaf, kind: str):
        cx = cellular_complex(G, F)
        x = rng.standard_normal(cx.dim(0)) if x0 is None else np.asarray(x0, dtype=float)
        return _verdict_from_limit(cx, task, _limit(cx, 0, x, kind))

    if family == "unnormalized":
        v = attempt(constant_sheaf(G, 1), kind)
    elif family == "normalized-sym":
        kind = "normalized"
        if weights is not None:
            from .sheaf import symmetric_weight_sheaf

            v = attempt(symmetric_weight_sheaf(G, weights), kind)
        else:
            maxdeg = max((len(n) for n in node_neighbors(G).values()), default=1)
            N = 4.0 * max(maxdeg, 1)
            x_fixed = rng.standard_normal(len(G.stratum(0))) if x0 is None else np.asarray(x0, float)
            while True:
                F = normalized_sym_sheaf(G, first, N)
                cx = cellular_complex(G, F)
                v = _verdict_from_limit(cx, task, _limit(cx, 0, x_fixed, kind))
                if v.separable or N >= 2**20:
                    break
                N *= 2
            info["N"] = N
    elif family == "asym-positive":
        v = attempt(asym_positive_sheaf(G, rng), kind)
    elif family == "lying-1d":
        v = attempt(lying_sheaf(G, first), kind)
    elif family == "lying-ld":
        v = attempt(class_sum_sheaf(G, task.labels, 0), kind)
    else:
        raise ValueError(f"unknown family {family!r}")
    v.info.update(info)
    v.info["laplacian"] = kind
    return v


def _rescale_blocks(E: np.ndarray, signs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Divide each column of ``E`` by its least-squares multiple of the sign pattern."""
    c = np.einsum("ij,ij->j", E, signs) / np.einsum("ij,ij->j", signs, signs)
    safe = np.where(c == 0, 1.0, c)
    return E / safe, c


def higher_order_separation(
    X: SimplicialComplex,
    k: int,
    task: ClassTask,
    seed: int = 0,
    tol: float = 1e-8,
) -> SeparationVerdict:
    """Separate classes of k-simplices with a sum of prescribed-gradient sheaves.

    The limit of block ``i`` should be ``c_i s^i`` with ``s^i = 1_{A_i} - 1_{A_i^c}``;
    after dividing each block by ``c_i`` the rows equal the sign patterns.
    """
    rng = np.random.default_rng(seed)
    classes = task.classes
    F = class_sum_sheaf(X, task.labels, k)
    cx = cellular_complex(X.poset, F)
    x0 = rng.standard_normal(cx.dim(k))
    x = spectrum(cx, k).projector @ x0
    v = _verdict_from_limit(cx, task, x)
    elems = X.ids(k)
    E = _embed(cx, k, x, elems)
    S = np.stack([sign_vector(X, k, task.members(c)) for c in classes], axis=1)
    Y, c = _rescale_blocks(E, S)
    v.info.update(
        {
            "scales": c.tolist(),
            "degenerate_blocks": [int(i) for i in np.flatnonzero(np.abs(c) <= 1e-12)],
            "pattern_error": float(np.max(np.abs(Y - S), initial=0.0)),
        }
    )
    v.info["pattern_match"] = bool(v.info["pattern_error"] <= tol and not v.info["degenerate_blocks"])
    v.embedding = {s: Y[i] for i, s in enumerate(elems)}
    return v


@dataclass
class DvbReport:
    betti_constant: list[int]
    kernel_dims: dict[int, list[int]]
    limit_norms: dict[int, list[float]]

    @property
    def ok(self) -> bool:
        return all(
            all(d == 0 for d in dims) for k, dims in self.kernel_dims.items() if k >= 1
        ) and all(max(v, default=0) <= 1e-8 for k, v in self.limit_norms.items() if k >= 1)


def dvb_contractibility_check(
    X: SimplicialComplex,
    ks=(0, 1, 2),
    trials: int = 20,
    d: int = 2,
    group: str = "orthogonal",
    seed: int = 0,
) -> DvbReport:
    """Harmonic spaces of random vector bundles on a contractible complex."""
    cst = cellular_complex(X.poset, constant_sheaf(X.poset, 1))
    b = [betti(cst, j) for j in range(cst.top + 1)]
    if b[0] != 1 or any(b[1:]):
        raise NotContractible(f"Betti numbers {b}")
    rng = np.random.default_rng(seed)
    kernel_dims = {k: [] for k in ks}
    norms = {k: [] for k in ks}
    for i in range(trials):
        F = random_bundle(X.poset, d, group, seed=seed * 1000 + i)
        cx = cellular_complex(X.poset, F)
        for k in ks:
            if k > cx.top:
                continue
            rep = spectrum(cx, k)
            kernel_dims[k].append(rep.betti)
            x0 = rng.standard_normal(cx.dim(k))
            norms[k].append(float(np.linalg.norm(rep.projector @ x0)))
    return DvbReport(b, kernel_dims, norms)


__all__ = [
    "ClassTask",
    "DvbReport",
    "SeparationVerdict",
    "dvb_contractibility_check",
    "higher_order_separation",
    "hypotheses",
    "is_connected",
    "linearly_separable",
    "run_hierarchy",
]
