"""Finite posets, gradings, order complexes and simplicial complexes.

Elements are string ids. Every poset assigns a dense integer index to its
elements by natural sort of the ids ("2" < "10"), so matrix layouts built on
top of a poset are reproducible.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

from .errors import CycleError, DimensionError, NotGradable, UnknownElement

_DIGITS = re.compile(r"(\d+)")


def natural_key(s: str) -> tuple:
    parts = _DIGITS.split(s)
    return tuple((0, int(p), "") if p.isdigit() else (1, 0, p) for p in parts if p != "")


def simplex_id(vertices: Sequence[str]) -> str:
    return ",".join(vertices)


@dataclass(frozen=True)
class Chain:
    """A strictly increasing sequence of poset elements."""

    elements: tuple[str, ...]

    @property
    def max(self) -> str:
        return self.elements[-1]

    @property
    def dim(self) -> int:
        return len(self.elements) - 1

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[str]:
        return iter(self.elements)

    def drop(self, k: int) -> "Chain":
        return Chain(self.elements[:k] + self.elements[k + 1:])


class Poset:
    """A finite poset given by covering relations.

    ``covers`` are the asserted covering pairs ``(s, t)`` meaning ``s ⋖ t``.
    ``signs`` optionally carries incidence numbers ``[t : s]`` for cell posets.
    """

    def __init__(
        self,
        elements: Iterable[str],
        covers: Iterable[tuple[str, str]],
        *,
        signs: dict[tuple[str, str], int] | None = None,
        kind: str = "poset",
        vertex_order: Sequence[str] | None = None,
    ):
        elems = [str(e) for e in elements]
        if len(set(elems)) != len(elems):
            raise ValueError("duplicate element ids")
        self.elements: tuple[str, ...] = tuple(sorted(elems, key=natural_key))
        self.index: dict[str, int] = {e: i for i, e in enumerate(self.elements)}
        n = len(self.elements)

        pairs = set()
        for s, t in covers:
            s, t = str(s), str(t)
            for x in (s, t):
                if x not in self.index:
                    raise UnknownElement(x)
            if s == t:
                raise CycleError(f"reflexive relation on {s!r}")
            pairs.add((self.index[s], self.index[t]))
        self._cover_idx = tuple(sorted(pairs))
        self.covers: tuple[tuple[str, str], ...] = tuple(
            (self.elements[i], self.elements[j]) for i, j in self._cover_idx
        )
        self._down: list[list[int]] = [[] for _ in range(n)]
        self._up: list[list[int]] = [[] for _ in range(n)]
        for i, j in self._cover_idx:
            self._up[i].append(j)
            self._down[j].append(i)

        self._topo = self._toposort()
        # reach[i] has bit j set iff i < j
        reach = [0] * n
        for i in reversed(self._topo):
            r = 0
            for j in self._up[i]:
                r |= (1 << j) | reach[j]
            reach[i] = r
        self._reach = reach

        self.signs = dict(signs) if signs else {}
        self.kind = kind
        self.vertex_order = tuple(vertex_order) if vertex_order is not None else None

    def _toposort(self) -> list[int]:
        n = len(self.elements)
        indeg = [len(self._down[i]) for i in range(n)]
        ready = [i for i in range(n) if indeg[i] == 0]
        order = []
        while ready:
            i = ready.pop(0)
            order.append(i)
            for j in self._up[i]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    ready.append(j)
        if len(order) != n:
            stuck = [self.elements[i] for i in range(n) if indeg[i] > 0]
            raise CycleError(f"relation is not antisymmetric; cycle through {stuck[:5]}")
        return order

    # -- basic queries -------------------------------------------------

    def __len__(self) -> int:
        return len(self.elements)

    def __contains__(self, s: str) -> bool:
        return s in self.index

    def __repr__(self) -> str:
        return f"Poset(kind={self.kind!r}, n={len(self)}, covers={len(self.covers)})"

    def _i(self, s: str) -> int:
        try:
            return self.index[s]
        except KeyError:
            raise UnknownElement(s) from None

    def lt(self, s: str, t: str) -> bool:
        return bool(self._reach[self._i(s)] >> self._i(t) & 1)

    def leq(self, s: str, t: str) -> bool:
        return s == t or self.lt(s, t)

    def is_cover(self, s: str, t: str) -> bool:
        return self._i(t) in self._up[self._i(s)]

    def lower_covers(self, t: str) -> list[str]:
        return [self.elements[i] for i in self._down[self._i(t)]]

    def upper_covers(self, s: str) -> list[str]:
        return [self.elements[j] for j in self._up[self._i(s)]]

    def above(self, s: str) -> list[str]:
        r = self._reach[self._i(s)]
        return [self.elements[j] for j in range(len(self)) if r >> j & 1]

    def below(self, t: str) -> list[str]:
        j = self._i(t)
        return [self.elements[i] for i in range(len(self)) if self._reach[i] >> j & 1]

    def comparable_pairs(self) -> Iterator[tuple[str, str]]:
        """All strict pairs ``s < t`` in index order."""
        for i in range(len(self)):
            r = self._reach[i]
            for j in range(len(self)):
                if r >> j & 1:
                    yield self.elements[i], self.elements[j]

    def minimal(self) -> list[str]:
        return [e for i, e in enumerate(self.elements) if not self._down[i]]

    def topological_order(self) -> list[str]:
        return [self.elements[i] for i in self._topo]

    # -- grading -------------------------------------------------------

    @cached_property
    def rank(self) -> dict[str, int]:
        return grade(self)

    @property
    def is_graded(self) -> bool:
        try:
            self.rank
        except NotGradable:
            return False
        return True

    def stratum(self, r: int) -> list[str]:
        return [e for e in self.elements if self.rank[e] == r]

    @property
    def max_rank(self) -> int:
        return max(self.rank.values(), default=-1)

    def vertices_of(self, s: str) -> list[str]:
        """Rank-0 elements below or equal to ``s``."""
        if self.rank[s] == 0:
            return [s]
        return [e for e in self.below(s) if self.rank[e] == 0]

    def sign(self, s: str, t: str) -> int:
        """Incidence number ``[t : s]`` for a covering ``s ⋖ t`` of a cell poset."""
        return self.signs[(s, t)]


def build_poset(
    elements: Iterable[str], covering_relations: Iterable[tuple[str, str]], **kw
) -> Poset:
    return Poset(elements, covering_relations, **kw)


def grade(poset: Poset) -> dict[str, int]:
    """Rank function: every maximal descending covering chain from ``s`` has length rk s."""
    n = len(poset)
    longest = [0] * n
    shortest = [0] * n
    for i in poset._topo:
        down = poset._down[i]
        if down:
            longest[i] = 1 + max(longest[j] for j in down)
            shortest[i] = 1 + min(shortest[j] for j in down)
            if longest[i] != shortest[i]:
                raise NotGradable(
                    f"{poset.elements[i]!r} is reached by descending chains of lengths "
                    f"{shortest[i]} and {longest[i]}"
                )
    return {poset.elements[i]: longest[i] for i in range(n)}


# -- order complexes -----------------------------------------------------


@dataclass
class OrderComplex:
    poset: Poset
    chains: dict[int, list[Chain]] = field(default_factory=dict)

    def __len__(self) -> int:
        return sum(len(v) for v in self.chains.values())

    @property
    def dim(self) -> int:
        return max(self.chains, default=-1)


def order_complex(poset: Poset) -> OrderComplex:
    """Enumerate every chain of ``poset``, grouped by dimension."""
    n = len(poset)
    out: dict[int, list[Chain]] = {}

    def extend(path: list[int]):
        out.setdefault(len(path) - 1, []).append(Chain(tuple(poset.elements[i] for i in path)))
        r = poset._reach[path[-1]]
        for j in range(n):
            if r >> j & 1:
                path.append(j)
                extend(path)
                path.pop()

    for i in range(n):
        extend([i])
    for k in out:
        out[k].sort(key=lambda c: tuple(poset.index[e] for e in c.elements))
    return OrderComplex(poset, out)


def incidence_number(sigma: Sequence[str], tau: Sequence[str]) -> int:
    """``(-1)^k`` when ``tau`` is ``sigma`` with its k-th entry removed, else 0.

    Works for chains (ordered by the poset) and for simplices written in the
    global vertex order.
    """
    sigma, tau = tuple(sigma), tuple(tau)
    if len(sigma) != len(tau) + 1:
        raise DimensionError(f"dim {len(sigma) - 1} vs dim {len(tau) - 1}")
    for k in range(len(sigma)):
        if sigma[:k] + sigma[k + 1:] == tau:
            return -1 if k % 2 else 1
    return 0


# -- simplicial complexes ------------------------------------------------


@dataclass
class SimplicialComplex:
    """An abstract simplicial complex closed under taking faces.

    ``simplices[k]`` lists the k-simplices as vertex tuples in the global
    vertex order; this order fixes every orientation.
    """

    vertex_order: tuple[str, ...]
    simplices: dict[int, list[tuple[str, ...]]]

    @property
    def dim(self) -> int:
        return max((k for k, v in self.simplices.items() if v), default=-1)

    def __len__(self) -> int:
        return sum(len(v) for v in self.simplices.values())

    def ids(self, k: int) -> list[str]:
        return [simplex_id(s) for s in self.simplices.get(k, [])]

    @cached_property
    def poset(self) -> Poset:
        elements = [simplex_id(s) for k in sorted(self.simplices) for s in self.simplices[k]]
        covers, signs = [], {}
        for k in sorted(self.simplices):
            if k == 0:
                continue
            for s in self.simplices[k]:
                t = simplex_id(s)
                for j in range(len(s)):
                    f = simplex_id(s[:j] + s[j + 1:])
                    covers.append((f, t))
                    signs[(f, t)] = -1 if j % 2 else 1
        return Poset(
            elements, covers, signs=signs, kind="simplicial", vertex_order=self.vertex_order
        )

    def faces(self, simplex: tuple[str, ...]) -> list[tuple[str, ...]]:
        return [simplex[:j] + simplex[j + 1:] for j in range(len(simplex))]


def simplicial_from_facets(
    facets: Iterable[Iterable], vertex_order: Sequence | None = None
) -> SimplicialComplex:
    """Downward closure of ``facets``; orientation by the (natural) vertex order."""
    facets = [tuple(str(v) for v in f) for f in facets]
    verts = {v for f in facets for v in f}
    if vertex_order is None:
        order = tuple(sorted(verts, key=natural_key))
    else:
        order = tuple(str(v) for v in vertex_order)
        missing = verts - set(order)
        if missing:
            raise UnknownElement(f"vertices missing from vertex_order: {sorted(missing)}")
    pos = {v: i for i, v in enumerate(order)}
    found: set[tuple[str, ...]] = set()
    for f in facets:
        f = tuple(sorted(set(f), key=pos.__getitem__))
        for r in range(1, len(f) + 1):
            found.update(itertools.combinations(f, r))
    simplices: dict[int, list[tuple[str, ...]]] = {}
    for s in found:
        simplices.setdefault(len(s) - 1, []).append(s)
    for k in simplices:
        simplices[k].sort(key=lambda s: tuple(pos[v] for v in s))
    return SimplicialComplex(order, simplices)


def graph_poset(nodes: Iterable, edges: Iterable[tuple]) -> Poset:
    """A graph as a rank-1 simplicial poset; edge ``{u, v}`` gets id ``"u,v"``."""
    nodes = [str(v) for v in nodes]
    facets = [(v,) for v in nodes] + [(str(u), str(v)) for u, v in edges]
    cx = simplicial_from_facets(facets)
    p = cx.poset
    p.kind = "graph"
    return p


def hypergraph_poset(nodes: Iterable, hyperedges: dict[str, Iterable]) -> Poset:
    """The incidence poset of a hypergraph: node ``a < b`` iff ``a`` lies in hyperedge ``b``."""
    nodes = [str(v) for v in nodes]
    covers = [(str(a), str(b)) for b, members in hyperedges.items() for a in members]
    return Poset(nodes + [str(b) for b in hyperedges], covers, kind="hypergraph")
