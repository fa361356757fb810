"""Random posets, complexes and functorial sheaves for property tests and experiments."""

from __future__ import annotations

import itertools

import numpy as np

from .poset import Poset, SimplicialComplex, graph_poset, hypergraph_poset, simplicial_from_facets
from .sheaf import Sheaf, constant_sheaf, lying_sheaf, random_bundle


def layered_poset(rng: np.random.Generator, n: int = 20, max_rank: int = 3, max_covers: int = 2) -> Poset:
    """A graded poset whose elements of rank r ≥ 1 cover 1..max_covers elements of rank r-1."""
    sizes = [1] * (max_rank + 1)
    for _ in range(n - len(sizes)):
        sizes[rng.integers(0, max_rank + 1)] += 1
    layers = [[f"r{r}_{i}" for i in range(sizes[r])] for r in range(max_rank + 1)]
    covers = []
    for r in range(1, max_rank + 1):
        for t in layers[r]:
            m = int(rng.integers(1, min(max_covers, len(layers[r - 1])) + 1))
            for s in rng.choice(len(layers[r - 1]), size=m, replace=False):
                covers.append((layers[r - 1][s], t))
    return Poset([e for L in layers for e in L], covers)


def random_simplicial(rng: np.random.Generator, n_vertices: int = 6, n_facets: int = 5, max_dim: int = 2) -> SimplicialComplex:
    facets = []
    for _ in range(n_facets):
        k = int(rng.integers(1, max_dim + 2))
        facets.append(sorted(rng.choice(n_vertices, size=min(k, n_vertices), replace=False).tolist()))
    facets += [[v] for v in range(n_vertices)]
    return simplicial_from_facets(facets)


def random_connected_graph(rng: np.random.Generator, n: int, p: float = 0.2) -> tuple[list[int], list[tuple[int, int]]]:
    """A random spanning tree plus independent extra edges with probability ``p``."""
    order = rng.permutation(n)
    edges = set()
    for i in range(1, n):
        j = int(rng.integers(0, i))
        u, v = sorted((int(order[i]), int(order[j])))
        edges.add((u, v))
    for u, v in itertools.combinations(range(n), 2):
        if rng.random() < p:
            edges.add((u, v))
    return list(range(n)), sorted(edges)


def random_bipartite_graph(rng: np.random.Generator, half: int, p: float = 0.3) -> tuple[list[int], list[tuple[int, int]], list[int]]:
    """A connected bipartite graph with parts ``0..half-1`` and ``half..2·half-1``.

    Returns (nodes, edges, part A). A random spanning tree alternating between
    the parts is completed with independent cross edges of probability ``p``.
    """
    A, B = list(range(half)), list(range(half, 2 * half))
    edges = set()
    placed_a, placed_b = [int(rng.choice(A))], []
    rest_a = [a for a in A if a != placed_a[0]]
    rest_b = list(B)
    rng.shuffle(rest_a)
    rng.shuffle(rest_b)
    while rest_a or rest_b:
        if rest_b and (not rest_a or rng.random() < 0.5 or not placed_b):
            v = rest_b.pop()
            u = placed_a[int(rng.integers(len(placed_a)))]
            placed_b.append(v)
        else:
            v = rest_a.pop()
            u = placed_b[int(rng.integers(len(placed_b)))]
            placed_a.append(v)
        edges.add((min(u, v), max(u, v)))
    for a in A:
        for b in B:
            if rng.random() < p:
                edges.add((a, b))
    return A + B, sorted(edges), A


def random_labels(rng: np.random.Generator, items: list[str], n_classes: int) -> dict[str, int]:
    """Uniform random labels, redrawn until every class is used."""
    if n_classes > len(items):
        raise ValueError("more classes than items")
    while True:
        lab = {s: int(rng.integers(0, n_classes)) for s in items}
        if len(set(lab.values())) == n_classes:
            return lab


def triangle_strip(width: int, height: int) -> SimplicialComplex:
    """A ``width × height`` grid of squares, each cut into two triangles along the same diagonal."""
    vid = lambda i, j: i * (height + 1) + j
    facets = []
    for i in range(width):
        for j in range(height):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            facets += [[a, b, d], [a, c, d]]
    return simplicial_from_facets(facets)


def random_graph_poset(rng: np.random.Generator, n: int = 8, p: float = 0.3) -> Poset:
    nodes, edges = random_connected_graph(rng, n, p)
    return graph_poset(nodes, edges)


def random_hypergraph(rng: np.random.Generator, n_nodes: int = 6, n_edges: int = 4, max_size: int = 4) -> Poset:
    hyper = {}
    for j in range(n_edges):
        m = int(rng.integers(1, min(max_size, n_nodes) + 1))
        hyper[f"h{j}"] = [f"n{v}" for v in sorted(rng.choice(n_nodes, size=m, replace=False))]
    return hypergraph_poset([f"n{v}" for v in range(n_nodes)], hyper)


def full_simplex(n_vertices: int) -> SimplicialComplex:
    return simplicial_from_facets([list(range(n_vertices))])


def cone(X: SimplicialComplex, apex: str = "apex") -> SimplicialComplex:
    """The cone over ``X``: every simplex gains the extra vertex ``apex`` (ordered last)."""
    facets = [list(s) + [apex] for k in X.simplices for s in X.simplices[k]]
    return simplicial_from_facets(facets, vertex_order=list(X.vertex_order) + [apex])


def _orthonormal(rng, m: int, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros((m, 0))
    q, _ = np.linalg.qr(rng.standard_normal((m, k)))
    return q


def _extend(rng, E: np.ndarray, m: int, target: int) -> np.ndarray:
    """Orthonormal basis of span(E) plus random directions up to dimension ``target``."""
    if E.shape[1]:
        u, s, _ = np.linalg.svd(E, full_matrices=False)
        E = u[:, s > 1e-10 * max(s[0], 1.0)]
    extra = max(0, min(target, m) - E.shape[1])
    if extra:
        R = rng.standard_normal((m, extra))
        R -= E @ (E.T @ R)
        q, _ = np.linalg.qr(R)
        E = np.hstack([E, q])
    return E


def random_functorial_sheaf(
    rng: np.random.Generator,
    P: Poset,
    max_dim: int = 4,
    gauge: bool = True,
    inner: bool = False,
) -> Sheaf:
    """A random functorial sheaf on ``P`` with stalk dimensions at most ``max_dim``.

    Rank ≤ 1 posets get independent Gaussian maps. Otherwise every element gets
    a subspace ``U_s ⊆ ℝ^m`` that grows (or shrinks) along the order, and
    ``F(s ⋖ t) = g_t E_tᵀ E_s g_s⁻¹`` with ``E_s`` an orthonormal basis of ``U_s``
    and random well-conditioned frames ``g``. Monotone subspaces make the
    composites path independent.
    """
    m = max_dim
    if P.max_rank <= 1:
        dims = {s: int(rng.integers(0, max_dim + 1)) for s in P.elements}
        res = {(s, t): rng.standard_normal((dims[t], dims[s])) for s, t in P.covers}
    else:
        grow = bool(rng.integers(0, 2))
        order = P.topological_order()
        if not grow:
            order = order[::-1]
        E: dict[str, np.ndarray] = {}
        for s in order:
            prev = P.lower_covers(s) if grow else P.upper_covers(s)
            if prev:
                base = np.hstack([E[p] for p in prev])
                target = base.shape[1] + int(rng.integers(0, 2))
            else:
                base = np.zeros((m, 0))
                target = int(rng.integers(0, m + 1)) if not grow else int(rng.integers(0, 3))
            E[s] = _extend(rng, base, m, target)
        dims = {s: E[s].shape[1] for s in P.elements}
        g = {}
        for s in P.elements:
            d = dims[s]
            if gauge and d:
                q1 = _orthonormal(rng, d, d)
                g[s] = q1 * rng.uniform(0.5, 2.0, size=d)
            else:
                g[s] = np.eye(d)
        res = {
            (s, t): g[t] @ E[t].T @ E[s] @ np.linalg.inv(g[s]) for s, t in P.covers
        }
    ip = {}
    if inner:
        for s in P.elements:
            d = dims[s]
            A = rng.standard_normal((d, d))
            ip[s] = A @ A.T + d * np.eye(d)
    return Sheaf(P, dims, res, ip)


def _random_poset(rng: np.random.Generator, kind: str) -> Poset:
    if kind == "simplicial":
        X = random_simplicial(rng, int(rng.integers(3, 8)), int(rng.integers(1, 6)), max_dim=3)
        P = X.poset
    elif kind == "graph":
        P = random_graph_poset(rng, int(rng.integers(2, 20)), 0.2)
    elif kind == "hypergraph":
        P = random_hypergraph(rng, int(rng.integers(2, 20)), int(rng.integers(1, 12)))
    else:
        P = layered_poset(rng, int(rng.integers(4, 61)), int(rng.integers(1, 4)))
    return P


def random_instance(rng: np.random.Generator, max_elements: int = 60) -> tuple[str, Poset, Sheaf]:
    """One (kind, poset, sheaf) draw mixing all poset shapes and sheaf families."""
    kind = ["simplicial", "graph", "hypergraph", "layered"][int(rng.integers(0, 4))]
    P = _random_poset(rng, kind)
    while len(P) > max_elements:
        P = _random_poset(rng, kind)
    fam = int(rng.integers(0, 5))
    if fam == 0:
        F = constant_sheaf(P, int(rng.integers(1, 3)))
    elif fam == 1:
        F = random_bundle(P, int(rng.integers(1, 3)), ["orthogonal", "invertible"][int(rng.integers(0, 2))], int(rng.integers(1 << 30)))
    elif fam == 2 and P.max_rank >= 1:
        verts = P.stratum(0)
        A = [v for v in verts if rng.random() < 0.5]
        F = lying_sheaf(P, A)
    else:
        F = random_functorial_sheaf(rng, P, max_dim=4, inner=bool(rng.integers(0, 2)))
    return kind, P, F


def random_diffusion_instance(rng: np.random.Generator, max_elements: int = 30) -> tuple[Poset, Sheaf]:
    """A graph or simplicial complex with a constant, orthogonal-bundle or lying sheaf.

    These families have ``λ_max / λ⁺`` in the hundreds at this size, so explicit
    Euler at ``η = 0.9/λ_max`` converges in a few thousand steps. The gauged
    sheaves of ``random_instance`` can be far worse conditioned.
    """
    while True:
        if rng.random() < 0.5:
            P = random_graph_poset(rng, int(rng.integers(2, 16)), 0.3)
        else:
            P = random_simplicial(rng, int(rng.integers(3, 8)), int(rng.integers(1, 5)), 3).poset
        if len(P) <= max_elements:
            break
    fam = int(rng.integers(0, 3))
    if fam == 0:
        return P, constant_sheaf(P, int(rng.integers(1, 3)))
    if fam == 1:
        return P, random_bundle(P, int(rng.integers(1, 3)), "orthogonal", int(rng.integers(1 << 30)))
    return P, lying_sheaf(P, [v for v in P.stratum(0) if rng.random() < 0.5])
