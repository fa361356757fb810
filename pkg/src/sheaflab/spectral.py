"""Spectral tools on cochain complexes: eigendecomposition, harmonic projection,
Hodge decomposition, heat flow, global sections, Betti numbers, hole attribution.

When the sheaf carries non-identity inner products the Laplacian is only
self-adjoint for those inner products. Everything here then works in whitened
coordinates ``x̃ = R x`` with ``M = RᵀR`` and maps results back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, null_space, orth, solve_triangular

from .complexes import CochainComplex, dirichlet_energy, laplacian
from .errors import NotCycles, NotSymmetric, RankDeficient, StepTooLarge
from .poset import Poset
from .sheaf import Sheaf

SYM_TOL = 1e-8


def eig_sym(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors of a symmetric matrix.

    Each eigenvector is signed so its first entry of magnitude above 1e-12 is
    positive.
    """
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros(0), np.zeros((M.shape[0], 0))
    asym = np.max(np.abs(M - M.T))
    if asym > SYM_TOL:
        raise NotSymmetric(f"max |M - Mᵀ| = {asym:.3g}")
    w, U = np.linalg.eigh((M + M.T) / 2)
    for j in range(U.shape[1]):
        nz = np.flatnonzero(np.abs(U[:, j]) > 1e-12)
        if nz.size and U[nz[0], j] < 0:
            U[:, j] = -U[:, j]
    return w, U


def kernel_tol(w: np.ndarray, n: int) -> float:
    """``n · eps · λ_max``, the default rank cutoff."""
    lam_max = float(np.max(np.abs(w), initial=0.0))
    return max(n, 1) * np.finfo(float).eps * lam_max


@dataclass
class _Whitened:
    L: np.ndarray  # symmetric Laplacian in whitened coordinates
    R: np.ndarray | None  # M = RᵀR, None for the identity

    def to(self, x: np.ndarray) -> np.ndarray:
        return x if self.R is None else self.R @ x

    def back(self, y: np.ndarray) -> np.ndarray:
        return y if self.R is None else solve_triangular(self.R, y)


def _whiten(cx: CochainComplex, k: int, kind: str = "full") -> _Whitened:
    L = laplacian(cx, k, kind)
    M = cx.gram(k)
    if M is None:
        return _Whitened(L, None)
    R = cholesky(M)
    Ls = R @ L @ np.linalg.inv(R)
    return _Whitened((Ls + Ls.T) / 2, R)


@dataclass
class HodgeReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    projector: np.ndarray
    betti: int
    tol: float
    harmonic: np.ndarray | None = None
    gradient: np.ndarray | None = None
    curl: np.ndarray | None = None

    @property
    def reconstruction(self) -> np.ndarray | None:
        if self.harmonic is None:
            return None
        return self.harmonic + self.gradient + self.curl


def spectrum(cx: CochainComplex, k: int, kind: str = "full", tol: float | None = None) -> HodgeReport:
    """Eigendecomposition of ``Δ^k`` with harmonic projector and Betti number.

    Eigenvectors are orthonormal in whitened coordinates; the projector is
    returned in the original coordinates.
    """
    W = _whiten(cx, k, kind)
    w, U = eig_sym(W.L)
    t = kernel_tol(w, W.L.shape[0]) if tol is None else tol
    H = U[:, w <= t]
    P = H @ H.T
    if W.R is not None:
        P = np.linalg.solve(W.R, P @ W.R)
    return HodgeReport(w, U, P, int(H.shape[1]), t)


def harmonic_basis(cx: CochainComplex, k: int, tol: float | None = None) -> np.ndarray:
    """Columns spanning ``ker Δ^k`` (orthonormal for the stalk inner products)."""
    W = _whiten(cx, k)
    w, U = eig_sym(W.L)
    t = kernel_tol(w, W.L.shape[0]) if tol is None else tol
    return W.back(U[:, w <= t])


def harmonic_projector(cx: CochainComplex, k: int, tol: float | None = None) -> np.ndarray:
    return spectrum(cx, k, tol=tol).projector


def betti(cx: CochainComplex, k: int, tol: float | None = None) -> int:
    if cx.dim(k) == 0:
        return 0
    return spectrum(cx, k, tol=tol).betti


def _column_projection(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    if A.size == 0:
        return np.zeros_like(x)
    Q = orth(A)
    return Q @ (Q.T @ x)


def hodge_decompose(cx: CochainComplex, k: int, x: np.ndarray, tol: float | None = None) -> HodgeReport:
    """Split ``x`` into harmonic, gradient (im d^{k-1}) and curl (im d*^k) parts.

    The three parts are computed independently: the harmonic part from the
    spectral projector, the others by orthogonal projection onto column spaces.
    """
    rep = spectrum(cx, k, tol=tol)
    x = np.asarray(x, dtype=float)
    M = cx.gram(k)
    R = None if M is None else cholesky(M)
    xt = x if R is None else R @ x
    lift = (lambda A: A) if R is None else (lambda A: R @ A)
    g = _column_projection(lift(cx.coboundary(k - 1)), xt)
    c = _column_projection(lift(cx.adjoint(k)), xt)
    if R is not None:
        g, c = solve_triangular(R, g), solve_triangular(R, c)
    rep.harmonic = rep.projector @ x
    rep.gradient = g
    rep.curl = c
    return rep


@dataclass
class DiffusionTrace:
    times: np.ndarray
    states: np.ndarray  # one row per snapshot
    energies: np.ndarray
    limit: np.ndarray
    eta: float | None = None
    steps_taken: int = 0
    meta: dict = field(default_factory=dict)


def heat_flow(
    cx: CochainComplex,
    k: int,
    x0: np.ndarray,
    schedule: str = "exact",
    *,
    times=(0.0, 1.0, 5.0, 10.0),
    eta: float | None = None,
    steps: int = 100,
    record_every: int = 1,
    stop_tol: float | None = None,
    kind: str = "full",
    tol: float | None = None,
) -> DiffusionTrace:
    """Heat diffusion ``ẋ = -Δ^k x``, exactly or by explicit Euler ``x ← x - 2ηΔx``.

    ``stop_tol`` ends Euler iteration once ``‖x - x(∞)‖ ≤ stop_tol``.
    """
    W = _whiten(cx, k, kind)
    w, U = eig_sym(W.L)
    t = kernel_tol(w, W.L.shape[0]) if tol is None else tol
    x0 = np.asarray(x0, dtype=float)
    xt0 = W.to(x0)
    coeff = U.T @ xt0
    H = U[:, w <= t]
    limit = W.back(H @ (H.T @ xt0))
    wc = np.where(w <= t, 0.0, w)
    energy = lambda x: dirichlet_energy(cx, k, x).total if kind == "full" else float(
        W.to(x) @ W.L @ W.to(x)
    )
    if schedule == "exact":
        ts = np.asarray(times, dtype=float)
        states = np.array([W.back(U @ (np.exp(-wc * s) * coeff)) for s in ts])
        return DiffusionTrace(ts, states, np.array([energy(s) for s in states]), limit)
    if schedule != "euler":
        raise ValueError(f"unknown schedule {schedule!r}")
    lam_max = float(w[-1]) if w.size else 0.0
    if eta is None:
        eta = 0.9 / lam_max if lam_max > 0 else 0.5
    if 2 * eta * lam_max >= 2:
        raise StepTooLarge(f"2·η·λ_max = {2 * eta * lam_max:.4g} ≥ 2")
    L = laplacian(cx, k, kind)
    x = x0.copy()
    ts, states = [0.0], [x.copy()]
    n = 0
    for n in range(1, steps + 1):
        x = x - 2 * eta * (L @ x)
        done = stop_tol is not None and np.linalg.norm(x - limit) <= stop_tol
        if n % record_every == 0 or done or n == steps:
            ts.append(float(n))
            states.append(x.copy())
        if done:
            break
    states = np.array(states)
    return DiffusionTrace(
        np.array(ts), states, np.array([energy(s) for s in states]), limit, eta, n
    )


def global_sections(S: Poset, F: Sheaf) -> tuple[np.ndarray, dict[str, slice]]:
    """Orthonormal basis of ``{(s_x) : F(x ≤ y) s_x = s_y for all x < y}``.

    Coordinates stack every stalk in element order; the layout is returned.
    """
    sl, o = {}, 0
    for e in S.elements:
        sl[e] = slice(o, o + F.stalk_dim[e])
        o += F.stalk_dim[e]
    rows = []
    for x, y in S.comparable_pairs():
        if F.stalk_dim[y] == 0:
            continue
        r = np.zeros((F.stalk_dim[y], o))
        r[:, sl[x]] = F.composite(x, y)
        r[:, sl[y]] -= np.eye(F.stalk_dim[y])
        rows.append(r)
    A = np.vstack(rows) if rows else np.zeros((0, o))
    if o == 0:
        return np.zeros((0, 0)), sl
    return null_space(A) if A.size else np.eye(o), sl


@dataclass
class HoleAttribution:
    alpha: np.ndarray  # columns: harmonic duals with α_i(z_j) = δ_ij
    coefficients: np.ndarray | None = None  # (Πφ)(z_i)
    raw: np.ndarray | None = None  # φ(z_i)
    projection: np.ndarray | None = None  # Πφ


def hole_attribution(
    cx: CochainComplex,
    k: int,
    cycles: np.ndarray,
    phi: np.ndarray | None = None,
    tol: float | None = None,
    cycle_tol: float = 1e-8,
) -> HoleAttribution:
    """Harmonic cochains dual to a basis of k-cycles, by least squares in ``ker Δ^k``.

    ``cycles`` has one column per cycle in the coordinates of ``C^k``. With
    ``phi`` the harmonic projection ``Πφ`` is expanded as ``Σ_i (Πφ)(z_i) α_i``;
    ``raw`` holds ``φ(z_i)``, which agrees whenever ``φ`` is closed.
    """
    n = cx.dim(k)
    Z = np.asarray(cycles, dtype=float).reshape(n, -1)
    if k > 0 and Z.size:
        bd = cx.coboundary(k - 1).T @ Z
        if np.max(np.abs(bd), initial=0.0) > cycle_tol:
            raise NotCycles(f"boundary of supplied chains has max entry {np.max(np.abs(bd)):.3g}")
    H = harmonic_basis(cx, k, tol)
    b = H.shape[1]
    if Z.shape[1] != b:
        raise RankDeficient(f"{Z.shape[1]} cycles supplied for a {b}-dimensional harmonic space")
    if b == 0:
        out = HoleAttribution(np.zeros((n, 0)))
        if phi is not None:
            out.coefficients = np.zeros(0)
            out.raw = np.zeros(0)
            out.projection = np.zeros(n)
        return out
    G = Z.T @ H
    if np.linalg.matrix_rank(G) < b:
        raise RankDeficient("cycles do not pair nondegenerately with the harmonic space")
    C = np.linalg.lstsq(G, np.eye(b), rcond=None)[0]
    alpha = H @ C
    out = HoleAttribution(alpha)
    if phi is not None:
        phi = np.asarray(phi, dtype=float)
        proj = spectrum(cx, k, tol=tol).projector @ phi
        out.coefficients = Z.T @ proj
        out.raw = Z.T @ phi
        out.projection = proj
    return out


def fourier(cx: CochainComplex, k: int, x: np.ndarray) -> dict:
    """Coefficients of ``x`` in the Laplacian eigenbasis with each mode's energy split."""
    rep = spectrum(cx, k)
    U = rep.eigenvectors
    W = _whiten(cx, k)
    coeff = U.T @ W.to(np.asarray(x, dtype=float))
    splits = [dirichlet_energy(cx, k, W.back(U[:, i])) for i in range(U.shape[1])]
    return {
        "eigenvalues": rep.eigenvalues,
        "coefficients": coeff,
        "down": np.array([e.down for e in splits]),
        "up": np.array([e.up for e in splits]),
    }


__all__ = [
    "DiffusionTrace",
    "HodgeReport",
    "HoleAttribution",
    "betti",
    "eig_sym",
    "fourier",
    "global_sections",
    "harmonic_basis",
    "harmonic_projector",
    "heat_flow",
    "hodge_decompose",
    "hole_attribution",
    "kernel_tol",
    "spectrum",
]
