"""Sheaves of real vector spaces on finite posets and their standard constructions.

A sheaf stores one restriction matrix per covering ``s ⋖ t`` with shape
``(dim F(t), dim F(s))``. Restrictions along longer relations are composed on
demand along a fixed descending path and cached.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import null_space, orth

from .errors import (
    BaseMismatch,
    DecompositionError,
    NonpositiveWeight,
    NotPartition,
    ShapeError,
)
from .poset import Poset, SimplicialComplex, simplex_id

FUNCTORIAL_TOL = 1e-10


class Sheaf:
    """A diagram of finite-dimensional real inner-product spaces on a poset."""

    def __init__(
        self,
        base: Poset,
        stalk_dim: Mapping[str, int],
        restriction: Mapping[tuple[str, str], np.ndarray],
        inner: Mapping[str, np.ndarray] | None = None,
        *,
        check_shapes: bool = True,
    ):
        self.base = base
        self.stalk_dim = {s: int(stalk_dim.get(s, 0)) for s in base.elements}
        if any(v < 0 for v in self.stalk_dim.values()):
            raise ShapeError("negative stalk dimension")
        self.restriction: dict[tuple[str, str], np.ndarray] = {}
        for s, t in base.covers:
            dt, ds = self.stalk_dim[t], self.stalk_dim[s]
            m = restriction.get((s, t))
            m = np.zeros((dt, ds)) if m is None else np.asarray(m, dtype=float)
            if m.ndim != 2 and m.size == dt * ds:
                m = m.reshape(dt, ds)
            if check_shapes and m.shape != (dt, ds):
                raise ShapeError(f"restriction {s}⋖{t} has shape {m.shape}, expected {(dt, ds)}")
            self.restriction[(s, t)] = m
        self.inner = {s: np.asarray(v, dtype=float) for s, v in (inner or {}).items()}
        self._cache: dict[tuple[str, str], np.ndarray] = {}
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"Sheaf(base={self.base!r}, total_dim={self.total_dim})"

    @property
    def total_dim(self) -> int:
        return sum(self.stalk_dim.values())

    def inner_product(self, s: str) -> np.ndarray:
        m = self.inner.get(s)
        return np.eye(self.stalk_dim[s]) if m is None else m

    @property
    def has_euclidean_structure(self) -> bool:
        return any(not np.array_equal(m, np.eye(m.shape[0])) for m in self.inner.values())

    def composite(self, s: str, t: str) -> np.ndarray:
        """``F(s ≤ t)``, composed along the first lower cover of ``t`` above ``s``."""
        if s == t:
            return np.eye(self.stalk_dim[s])
        key = (s, t)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if not self.base.lt(s, t):
            raise ValueError(f"{s!r} is not below {t!r}")
        if self.base.is_cover(s, t):
            out = self.restriction[(s, t)]
        else:
            p = next(p for p in self.base.lower_covers(t) if self.base.lt(s, p))
            out = self.restriction[(p, t)] @ self.composite(s, p)
        with self._lock:
            self._cache.setdefault(key, out)
        return out

    def with_inner(self, inner: Mapping[str, np.ndarray]) -> "Sheaf":
        return Sheaf(self.base, self.stalk_dim, self.restriction, inner)


@dataclass
class ValidationReport:
    ok: bool
    shape_errors: list[str] = field(default_factory=list)
    functoriality: list[dict] = field(default_factory=list)
    inner_product_errors: list[str] = field(default_factory=list)

    def summary(self) -> str:
        if self.ok:
            return "valid"
        return (
            f"{len(self.shape_errors)} shape errors, {len(self.functoriality)} functoriality "
            f"violations, {len(self.inner_product_errors)} inner-product errors"
        )


def validate_sheaf(F: Sheaf, tol: float = FUNCTORIAL_TOL) -> ValidationReport:
    """Check shapes, functoriality and inner products; list every failure.

    Functoriality is checked inductively: for every ``s < t`` and every lower
    cover ``p`` of ``t`` with ``s ≤ p``, ``F(p ⋖ t) F(s ≤ p)`` must equal the
    stored composite ``F(s ≤ t)``. This makes all covering paths agree.
    """
    P = F.base
    rep = ValidationReport(ok=True)
    for (s, t), m in F.restriction.items():
        if m.shape != (F.stalk_dim[t], F.stalk_dim[s]):
            rep.shape_errors.append(f"{s}⋖{t}: shape {m.shape}")
        elif not np.all(np.isfinite(m)):
            rep.shape_errors.append(f"{s}⋖{t}: non-finite entries")
    if rep.shape_errors:
        rep.ok = False
        return rep
    for s in P.elements:
        for t in P.above(s):
            lower = [p for p in P.lower_covers(t) if P.leq(s, p)]
            if len(lower) < 2:
                continue
            ref = F.composite(s, t)
            for p in lower:
                alt = F.restriction[(p, t)] @ F.composite(s, p)
                err = float(np.max(np.abs(alt - ref), initial=0.0))
                if err > tol:
                    q = next(q for q in lower if P.leq(s, q))
                    rep.functoriality.append(
                        {"from": s, "to": t, "via": p, "reference_via": q, "max_abs_diff": err}
                    )
    for s, m in F.inner.items():
        if m.shape != (F.stalk_dim[s],) * 2:
            rep.inner_product_errors.append(f"{s}: shape {m.shape}")
        elif np.max(np.abs(m - m.T), initial=0.0) > 1e-10:
            rep.inner_product_errors.append(f"{s}: not symmetric")
        elif m.size and np.linalg.eigvalsh(m)[0] <= 0:
            rep.inner_product_errors.append(f"{s}: not positive definite")
    rep.ok = not (rep.functoriality or rep.inner_product_errors)
    return rep


# -- constructions ---------------------------------------------------------


def constant_sheaf(S: Poset, d: int = 1) -> Sheaf:
    if d < 0:
        raise ShapeError("stalk width must be non-negative")
    return Sheaf(S, {s: d for s in S.elements}, {c: np.eye(d) for c in S.covers})


def scalar_sheaf(
    S: Poset, values: Mapping[tuple[str, str], float], max_rank: int | None = None
) -> Sheaf:
    """One-dimensional stalks up to ``max_rank`` with the given covering scalars.

    Coverings absent from ``values`` get restriction 1.
    """
    rank = S.rank
    top = S.max_rank if max_rank is None else max_rank
    dims = {s: 1 if rank[s] <= top else 0 for s in S.elements}
    res = {}
    for s, t in S.covers:
        res[(s, t)] = np.full((dims[t], dims[s]), float(values.get((s, t), 1.0)))
    return Sheaf(S, dims, res)


def symmetric_weight_sheaf(G: Poset, weights: Mapping[str, float] | None = None) -> Sheaf:
    """``F(v ≤ e) = √w_e`` at both ends of every edge; Δ⁰ is the weighted graph Laplacian."""
    weights = weights or {}
    vals = {}
    for v, e in G.covers:
        w = float(weights.get(e, 1.0))
        if not w > 0:
            raise NonpositiveWeight(f"edge {e!r} has weight {w}")
        vals[(v, e)] = np.sqrt(w)
    return scalar_sheaf(G, vals, max_rank=1)


def _partition(S: Poset, k: int, classes) -> list[list[str]]:
    """Normalise ``classes`` (label map or list of sets) into a partition of rank ``k``."""
    stratum = S.stratum(k)
    if isinstance(classes, Mapping):
        labels = sorted({classes[s] for s in classes}, key=str)
        parts = [[s for s in stratum if classes.get(s) == lab] for lab in labels]
        covered = set(classes)
    else:
        parts = [[str(s) for s in c] for c in classes]
        covered = {s for c in parts for s in c}
    flat = [s for c in parts for s in c]
    if len(flat) != len(set(flat)):
        raise NotPartition("classes overlap")
    if covered != set(stratum):
        extra = covered - set(stratum)
        missing = set(stratum) - covered
        raise NotPartition(
            f"classes do not partition rank-{k} elements (extra={sorted(extra)[:5]}, "
            f"missing={sorted(missing)[:5]})"
        )
    return parts


def lying_sheaf(P: Poset, A: Iterable[str], B: Iterable[str] | None = None) -> Sheaf:
    """Sign-flip sheaf: ``F(v ≤ e) = -1`` for ``v ∈ A`` and ``+1`` for ``v ∈ B``.

    Stalks are ℝ on ranks 0 and 1 and zero above, so ``Γ`` is spanned by
    ``1_A - 1_B`` on connected posets.
    """
    A = [str(a) for a in A]
    verts = P.stratum(0)
    B = [v for v in verts if v not in set(A)] if B is None else [str(b) for b in B]
    _partition(P, 0, [A, B])
    a = set(A)
    vals = {(v, e): (-1.0 if v in a else 1.0) for v, e in P.covers if P.rank[v] == 0}
    return scalar_sheaf(P, vals, max_rank=1)


def direct_sum(F: Sheaf, G: Sheaf) -> Sheaf:
    if F.base is not G.base and (
        F.base.elements != G.base.elements or F.base.covers != G.base.covers
    ):
        raise BaseMismatch("sheaves live on different posets")
    from scipy.linalg import block_diag

    dims = {s: F.stalk_dim[s] + G.stalk_dim[s] for s in F.base.elements}
    res = {c: block_diag(F.restriction[c], G.restriction[c]) for c in F.base.covers}
    for c in F.base.covers:
        res[c] = res[c].reshape(dims[c[1]], dims[c[0]])
    inner = {}
    if F.inner or G.inner:
        inner = {s: block_diag(F.inner_product(s), G.inner_product(s)) for s in F.base.elements}
    return Sheaf(F.base, dims, res, inner)


def direct_sum_all(sheaves: Sequence[Sheaf]) -> Sheaf:
    out = sheaves[0]
    for G in sheaves[1:]:
        out = direct_sum(out, G)
    return out


def selector_sheaf(
    X: SimplicialComplex | Poset, mode: str = "up", T_plus: Iterable[str] | None = None
) -> Sheaf:
    """One-dimensional sheaf on a rank ≤ 2 complex selecting up or down diffusion.

    ``up`` zeroes node-edge maps, ``down`` zeroes edge-triangle maps and
    ``mask`` keeps edge-triangle maps only for triangles in ``T_plus``.
    """
    P = X.poset if isinstance(X, SimplicialComplex) else X
    rank = P.rank
    if P.max_rank > 2:
        raise ShapeError("selector sheaves need a complex of rank at most 2")
    keep = set(T_plus or [])
    vals = {}
    for s, t in P.covers:
        if rank[t] == 1:
            vals[(s, t)] = 0.0 if mode == "up" else 1.0
        elif mode == "up":
            vals[(s, t)] = 1.0
        elif mode == "down":
            vals[(s, t)] = 0.0
        elif mode == "mask":
            vals[(s, t)] = 1.0 if t in keep else 0.0
        else:
            raise ValueError(f"unknown selector mode {mode!r}")
    return scalar_sheaf(P, vals)


def _haar_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def _random_invertible(rng: np.random.Generator, d: int, max_cond: float = 1e6) -> np.ndarray:
    while True:
        g = rng.standard_normal((d, d))
        if np.linalg.cond(g) <= max_cond:
            return g


def random_bundle(S: Poset, d: int, group: str = "orthogonal", seed: int = 0) -> Sheaf:
    """A sheaf whose restrictions are all isomorphisms.

    On rank ≤ 1 posets every covering map is sampled independently. Above
    rank 1 functoriality couples the maps, so they are built from a random
    frame per element, ``F(s ⋖ t) = g_t g_s⁻¹``, which is functorial by
    construction. ``group="identity"`` gives the constant sheaf.
    """
    if d < 1:
        raise ShapeError("bundles need d >= 1")
    if group == "identity":
        return constant_sheaf(S, d)
    rng = np.random.default_rng(seed)
    sample = {"orthogonal": _haar_orthogonal, "invertible": _random_invertible}.get(group)
    if sample is None:
        raise ValueError(f"unknown group {group!r}")
    dims = {s: d for s in S.elements}
    if S.max_rank <= 1:
        res = {c: sample(rng, d) for c in S.covers}
    else:
        g = {s: sample(rng, d) for s in S.elements}
        ginv = {s: np.linalg.inv(m) if group == "invertible" else m.T for s, m in g.items()}
        res = {(s, t): g[t] @ ginv[s] for s, t in S.covers}
        if group == "invertible":
            for c, m in res.items():
                if np.linalg.cond(m) > 1e6:
                    return random_bundle(S, d, group, seed + 7919)
    return Sheaf(S, dims, res)


# -- prescribed gradient spaces -------------------------------------------------


def _face_of(simplex: tuple[str, ...]) -> tuple[str, ...]:
    # faces of a simplex in vertex order; dropping the last vertex gives the
    # lexicographically smallest one
    return simplex[:-1]


def gradient_space_sheaf(
    X: SimplicialComplex,
    k: int,
    W: np.ndarray | None = None,
    *,
    blocks: Mapping[str, np.ndarray] | None = None,
    stalk_dims: Mapping[str, int] | None = None,
    tol: float = 1e-9,
) -> Sheaf:
    """A sheaf on ``X`` with ``d^k = 0`` and ``im d^{k-1}`` equal to a prescribed space.

    Two ways to prescribe the space inside ``C^k = ⊕_τ V(τ)``:

    * ``blocks``: per k-simplex id a matrix whose columns span ``W_τ``, given as
      vectors of ``C^k`` supported on the coordinates of ``V(τ)``. The stalk on
      the lexicographically smallest face of each ``τ`` collects these ``W_τ``.
    * ``W``: columns spanning the space. For each (k-1)-simplex ``σ`` the part
      ``W_σ`` of ``W`` supported on the star of ``σ`` becomes the stalk at ``σ``;
      this requires ``Σ_σ W_σ = W``, which holds e.g. for the orthogonal
      complement of a vector with no zero entries when the k-simplices are
      connected through shared faces.

    Raises ``DecompositionError`` if the prescription cannot be realised.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    P = X.poset
    taus = X.simplices.get(k, [])
    tau_ids = [simplex_id(t) for t in taus]
    vdim = {t: int((stalk_dims or {}).get(t, 1)) for t in tau_ids}
    offs, o = {}, 0
    for t in tau_ids:
        offs[t] = o
        o += vdim[t]
    n = o
    dims = {s: 0 for s in P.elements}
    dims.update(vdim)
    res: dict[tuple[str, str], np.ndarray] = {}

    if blocks is not None:
        pieces: dict[str, list[tuple[str, np.ndarray]]] = {}
        for t in tau_ids:
            B = np.asarray(blocks.get(t, np.zeros((n, 0))), dtype=float).reshape(n, -1)
            mask = np.ones(n, bool)
            mask[offs[t]: offs[t] + vdim[t]] = False
            if B.size and np.max(np.abs(B[mask]), initial=0.0) > tol:
                raise DecompositionError(f"W_{t} is not contained in the stalk of {t}")
            local = B[offs[t]: offs[t] + vdim[t]]
            basis = orth(local) if local.size else np.zeros((vdim[t], 0))
            sigma = simplex_id(_face_of(taus[tau_ids.index(t)]))
            pieces.setdefault(sigma, []).append((t, basis))
        for sigma, items in pieces.items():
            dims[sigma] = sum(b.shape[1] for _, b in items)
        for s, t in P.covers:
            if P.rank[t] != k:
                res[(s, t)] = np.zeros((dims[t], dims[s]))
                continue
            m = np.zeros((dims[t], dims[s]))
            col = 0
            for tt, b in pieces.get(s, []):
                if tt == t:
                    m[:, col: col + b.shape[1]] = P.sign(s, t) * b
                col += b.shape[1]
            res[(s, t)] = m
        return Sheaf(P, dims, res)

    W = np.zeros((n, 0)) if W is None else np.asarray(W, dtype=float).reshape(n, -1)
    Wb = orth(W) if W.size else np.zeros((n, 0))
    faces = X.simplices.get(k - 1, [])
    star_basis: dict[str, np.ndarray] = {}
    star_taus: dict[str, list[str]] = {}
    for f in faces:
        sid = simplex_id(f)
        cof = [t for t in P.upper_covers(sid) if P.rank[t] == k]
        star_taus[sid] = cof
        idx = np.concatenate([np.arange(offs[t], offs[t] + vdim[t]) for t in cof]) if cof else np.zeros(0, int)
        outside = np.setdiff1d(np.arange(n), idx)
        if Wb.shape[1] == 0 or idx.size == 0:
            star_basis[sid] = np.zeros((idx.size, 0))
            continue
        # W ∩ coords(star): combinations c of W's basis vanishing outside the star
        c = null_space(Wb[outside]) if outside.size else np.eye(Wb.shape[1])
        vecs = Wb @ c
        star_basis[sid] = orth(vecs[idx]) if c.shape[1] else np.zeros((idx.size, 0))
        dims[sid] = star_basis[sid].shape[1]
    spanned = []
    for f in faces:
        sid = simplex_id(f)
        B = star_basis[sid]
        if B.shape[1] == 0:
            continue
        full = np.zeros((n, B.shape[1]))
        r = 0
        for t in star_taus[sid]:
            full[offs[t]: offs[t] + vdim[t]] = B[r: r + vdim[t]]
            r += vdim[t]
        spanned.append(full)
    got = np.hstack(spanned) if spanned else np.zeros((n, 0))
    rank_got = np.linalg.matrix_rank(got, tol=tol) if got.size else 0
    if rank_got != Wb.shape[1]:
        raise DecompositionError(
            f"star-supported parts of W span dimension {rank_got}, W has dimension {Wb.shape[1]}"
        )
    for s, t in P.covers:
        m = np.zeros((dims[t], dims[s]))
        if P.rank[t] == k and dims[s]:
            cof = star_taus[s]
            r = sum(vdim[u] for u in cof[: cof.index(t)])
            m = P.sign(s, t) * star_basis[s][r: r + vdim[t]]
        res[(s, t)] = m
    return Sheaf(P, dims, res)


def sign_vector(X: SimplicialComplex, k: int, A: Iterable[str]) -> np.ndarray:
    """``1_A - 1_{A^c}`` over the k-simplices of ``X``."""
    a = set(A)
    return np.array([1.0 if t in a else -1.0 for t in X.ids(k)])


def class_sum_sheaf(P, classes, k: int = 0) -> Sheaf:
    """Direct sum of two-class sheaves, one per class, for a rank-k classification.

    For ``k = 0`` the summands are lying sheaves (class vs rest). For ``k ≥ 1``
    ``P`` must be a ``SimplicialComplex`` and summand ``i`` prescribes the
    gradient space ``span(s^i)^⊥`` with ``s^i = 1_{A_i} - 1_{A_i^c}``.
    """
    poset = P.poset if isinstance(P, SimplicialComplex) else P
    parts = _partition(poset, k, classes)
    if k == 0:
        return direct_sum_all([lying_sheaf(poset, A) for A in parts])
    if not isinstance(P, SimplicialComplex):
        raise TypeError("rank k >= 1 tasks need a SimplicialComplex")
    summands = []
    for A in parts:
        s = sign_vector(P, k, A)
        summands.append(gradient_space_sheaf(P, k, null_space(s[None, :])))
    return direct_sum_all(summands)
