"""Cochain complexes of a sheaf: Roos (any poset) and cellular (cell posets).

Both flavors store dense coboundary matrices ``d[k]`` of shape
``(dim C^{k+1}, dim C^k)`` and index maps from summands to coordinate slices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable

import numpy as np
from scipy.linalg import block_diag, cho_factor, cho_solve

from .errors import NotCellPoset, RankError
from .poset import Poset, order_complex
from .sheaf import Sheaf

EIG_FLOOR = 1e-12


@dataclass
class CochainComplex:
    flavor: str
    sheaf: Sheaf
    summands: list[list[Hashable]]
    slices: list[dict[Hashable, slice]]
    d: list[np.ndarray]
    inner: list[np.ndarray | None] = field(default_factory=list)

    @property
    def top(self) -> int:
        return len(self.summands) - 1

    def dim(self, k: int) -> int:
        if k < 0 or k > self.top:
            return 0
        return sum(s.stop - s.start for s in self.slices[k].values())

    def coboundary(self, k: int) -> np.ndarray:
        """``d^k : C^k → C^{k+1}``, with empty matrices outside the complex."""
        if 0 <= k < self.top:
            return self.d[k]
        return np.zeros((self.dim(k + 1), self.dim(k)))

    def gram(self, k: int) -> np.ndarray | None:
        if not self.inner or k < 0 or k > self.top:
            return None
        return self.inner[k]

    def adjoint(self, k: int) -> np.ndarray:
        """``d*^k : C^{k+1} → C^k``, the adjoint for the stalk inner products."""
        d = self.coboundary(k)
        M0, M1 = self.gram(k), self.gram(k + 1)
        a = d.T if M1 is None else d.T @ M1
        if M0 is not None and a.size:
            a = cho_solve(cho_factor(M0), a)
        return a

    def laplacian(self, k: int, kind: str = "full") -> np.ndarray:
        return laplacian(self, k, kind)

    def cochain(self, k: int, values: dict | None = None) -> np.ndarray:
        x = np.zeros(self.dim(k))
        for key, v in (values or {}).items():
            x[self.slices[k][key]] = v
        return x

    def block(self, k: int, x: np.ndarray, key: Hashable) -> np.ndarray:
        return x[self.slices[k][key]]


def _layout(keys: list, dims: list[int]) -> dict:
    out, o = {}, 0
    for key, n in zip(keys, dims):
        out[key] = slice(o, o + n)
        o += n
    return out


def _grams(F: Sheaf, summands: list[list], stalk_of) -> list[np.ndarray | None]:
    if not F.inner:
        return [None] * len(summands)
    out = []
    for keys in summands:
        blocks = [F.inner_product(stalk_of(key)) for key in keys]
        out.append(block_diag(*blocks) if blocks else np.zeros((0, 0)))
    return out


def roos_complex(S: Poset, F: Sheaf) -> CochainComplex:
    """Cochains on chains ``τ`` with values in ``F(τ_max)``."""
    oc = order_complex(S)
    top = oc.dim
    summands = [oc.chains.get(j, []) for j in range(top + 1)]
    slices = [
        _layout(ch, [F.stalk_dim[c.max] for c in ch]) for ch in summands
    ]
    d = []
    for j in range(top):
        rows, cols = slices[j + 1], slices[j]
        n1 = sum(s.stop - s.start for s in rows.values())
        n0 = sum(s.stop - s.start for s in cols.values())
        m = np.zeros((n1, n0))
        for sigma in summands[j + 1]:
            r = rows[sigma]
            if r.stop == r.start:
                continue
            for pos in range(len(sigma)):
                tau = sigma.drop(pos)
                c = cols[tau]
                if c.stop == c.start:
                    continue
                sign = -1.0 if pos % 2 else 1.0
                m[r, c] += sign * F.composite(tau.max, sigma.max)
        d.append(m)
    cx = CochainComplex("roos", F, summands, slices, d)
    cx.inner = _grams(F, summands, lambda c: c.max)
    return cx


def is_cell_poset(S: Poset) -> bool:
    return S.is_graded and all(c in S.signs for c in S.covers)


def cellular_complex(X: Poset, F: Sheaf) -> CochainComplex:
    """Cochains on cells stacked by rank; signs are the poset's incidence numbers."""
    if not X.is_graded or not all(c in X.signs for c in X.covers):
        raise NotCellPoset(
            "cellular cochains need a graded poset with incidence signs on every covering"
        )
    rank = X.rank
    top = X.max_rank
    summands = [X.stratum(j) for j in range(top + 1)]
    slices = [_layout(el, [F.stalk_dim[s] for s in el]) for el in summands]
    d = []
    for j in range(top):
        rows, cols = slices[j + 1], slices[j]
        m = np.zeros((sum(s.stop - s.start for s in rows.values()),
                      sum(s.stop - s.start for s in cols.values())))
        for s, t in X.covers:
            if rank[s] == j:
                m[rows[t], cols[s]] += X.signs[(s, t)] * F.restriction[(s, t)]
        d.append(m)
    cx = CochainComplex("cellular", F, summands, slices, d)
    cx.inner = _grams(F, summands, lambda s: s)
    return cx


def _inv_sqrt_psd(B: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh((B + B.T) / 2)
    inv = np.where(w > EIG_FLOOR, 1.0 / np.sqrt(np.maximum(w, EIG_FLOOR)), 0.0)
    return (U * inv) @ U.T


def laplacian(cx: CochainComplex, k: int, kind: str = "full") -> np.ndarray:
    """Hodge Laplacians ``up = d*d``, ``down = dd*``, ``full`` and ``normalized``.

    ``normalized`` is ``D^{-1/2} Δ D^{-1/2}`` with ``D`` the block diagonal of
    the full Laplacian (one block per summand); blocks are inverted on their
    eigenvalues above 1e-12 only.
    """
    n = cx.dim(k)
    if kind == "up":
        return cx.adjoint(k) @ cx.coboundary(k) if n else np.zeros((0, 0))
    if kind == "down":
        return cx.coboundary(k - 1) @ cx.adjoint(k - 1) if n else np.zeros((0, 0))
    if kind == "full":
        return laplacian(cx, k, "up") + laplacian(cx, k, "down")
    if kind == "normalized":
        L = laplacian(cx, k, "full")
        blocks = [
            _inv_sqrt_psd(L[s, s]) for s in cx.slices[k].values() if s.stop > s.start
        ]
        Dm = block_diag(*blocks) if blocks else np.zeros((0, 0))
        return Dm @ L @ Dm
    raise ValueError(f"unknown Laplacian kind {kind!r}")


def _norm2(cx: CochainComplex, k: int, y: np.ndarray) -> float:
    M = cx.gram(k)
    return float(y @ y) if M is None else float(y @ M @ y)


@dataclass
class Energy:
    total: float
    down: float
    up: float


def dirichlet_energy(cx: CochainComplex, k: int, x: np.ndarray) -> Energy:
    """``Q_k(x) = ‖d*^{k-1} x‖² + ‖d^k x‖²``."""
    x = np.asarray(x, dtype=float)
    down = _norm2(cx, k - 1, cx.adjoint(k - 1) @ x) if k > 0 else 0.0
    up = _norm2(cx, k + 1, cx.coboundary(k) @ x)
    return Energy(down + up, down, up)


def duta_laplacian(R: Poset, F: Sheaf) -> tuple[np.ndarray, dict[str, slice]]:
    """The hypergraph sheaf Laplacian on ``⊕_a F(a)`` over rank-0 nodes.

    For each hyperedge ``b`` with ``m`` nodes, node ``a`` collects
    ``(1/m) Σ_{a' < b} F_{a≤b}ᵀ (F_{a≤b} x_a - F_{a'≤b} x_a')``.
    """
    rank = R.rank
    nodes = R.stratum(0)
    sl = _layout(nodes, [F.stalk_dim[a] for a in nodes])
    n = sum(s.stop - s.start for s in sl.values())
    L = np.zeros((n, n))
    for b in R.elements:
        if rank[b] != 1:
            continue
        members = R.lower_covers(b)
        m = len(members)
        for a in members:
            Fa = F.restriction[(a, b)]
            for a2 in members:
                if a2 == a:
                    continue
                Fa2 = F.restriction[(a2, b)]
                L[sl[a], sl[a]] += Fa.T @ Fa / m
                L[sl[a], sl[a2]] -= Fa.T @ Fa2 / m
    return L, sl


@dataclass
class VectorCalculus:
    grad: np.ndarray
    curl: np.ndarray
    div: np.ndarray
    cocurl: np.ndarray


def vector_calculus(cx: CochainComplex) -> VectorCalculus:
    """grad = d⁰, curl = d¹, div = d*⁰, cocurl = d*¹ on a complex of rank ≤ 2."""
    if cx.top > 2:
        raise RankError(f"vector calculus needs rank at most 2, got {cx.top}")
    return VectorCalculus(
        grad=cx.coboundary(0),
        curl=cx.coboundary(1),
        div=cx.adjoint(0),
        cocurl=cx.adjoint(1),
    )
