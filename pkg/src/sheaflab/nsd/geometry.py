"""Sparse coboundary assembly for sheaves with uniform stalk width ``d``.

Restriction maps are held as an array ``R`` of shape ``(n_covers, d, d)`` so
gradients can flow from coboundary entries back to individual maps.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import NotCellPoset
from ..poset import Poset


class CoboundaryPattern:
    """Sparsity pattern of ``d^j : C^j → C^{j+1}`` on a cell poset, stalks ``ℝ^d``."""

    def __init__(self, P: Poset, j: int, d: int):
        rank = P.rank
        self.j, self.d = j, d
        self.src = P.stratum(j)
        self.tgt = P.stratum(j + 1)
        si = {s: i for i, s in enumerate(self.src)}
        ti = {t: i for i, t in enumerate(self.tgt)}
        self.covers = [(s, t) for s, t in P.covers if rank[s] == j]
        missing = [c for c in self.covers if c not in P.signs]
        if missing:
            raise NotCellPoset(f"coverings without incidence signs, e.g. {missing[0]}")
        self.signs = np.array([P.signs[c] for c in self.covers], dtype=float)
        nc = len(self.covers)
        cid, a, b = np.meshgrid(np.arange(nc), np.arange(d), np.arange(d), indexing="ij")
        self.cid, self.a, self.b = cid.ravel(), a.ravel(), b.ravel()
        s_idx = np.array([si[s] for s, _ in self.covers], dtype=int)
        t_idx = np.array([ti[t] for _, t in self.covers], dtype=int)
        self.rows = t_idx[self.cid] * d + self.a if nc else np.zeros(0, int)
        self.cols = s_idx[self.cid] * d + self.b if nc else np.zeros(0, int)
        self.shape = (len(self.tgt) * d, len(self.src) * d)
        # when every row holds the same number of entries, group them by row so
        # entry_grad gathers only the column operand
        self._by_row = None
        if nc:
            counts = np.bincount(self.rows, minlength=self.shape[0])
            if counts.min() == counts.max():
                perm = np.argsort(self.rows, kind="stable")
                inv = np.empty_like(perm)
                inv[perm] = np.arange(perm.size)
                self._by_row = (self.cols[perm].reshape(self.shape[0], -1), inv)

    @property
    def n_covers(self) -> int:
        return len(self.covers)

    def matrix(self, R: np.ndarray) -> sp.csr_matrix:
        data = self.signs[self.cid] * R[self.cid, self.a, self.b] if self.n_covers else np.zeros(0)
        return sp.csr_matrix((data, (self.rows, self.cols)), shape=self.shape)

    def entry_grad(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        """Gradient of ``⟨left, D right⟩`` w.r.t. ``R``, with ``left`` on rows, ``right`` on columns."""
        if not self.n_covers:
            return np.zeros((0, self.d, self.d))
        if self._by_row is not None:
            grid, inv = self._by_row
            e = np.matmul(right[grid], left[:, :, None])[..., 0].ravel()[inv]
        else:
            e = np.einsum("ij,ij->i", left[self.rows], right[self.cols])
        # entries are enumerated in C order of (cover, a, b)
        return (self.signs[self.cid] * e).reshape(self.n_covers, self.d, self.d)

    def restrictions_of(self, sheaf) -> np.ndarray:
        R = np.zeros((self.n_covers, self.d, self.d))
        for n, c in enumerate(self.covers):
            R[n] = sheaf.restriction[c]
        return R
