"""The oversmoothing bound for one order-0 NSD layer with a ReLU-type nonlinearity.

For a connected graph and a one-dimensional sheaf with ``F_{v≤e} F_{u≤e} > 0``
on every edge, with the normalized Laplacian ``Δ = D^{-1/2} L_F D^{-1/2}``
(``D`` the diagonal of ``L_F``),

    E_F(φ((I - Δ) X W₁ W₂)) ≤ λ* |W₁|² ‖W₂ᵀ‖² E_F(X),   λ* = max_{i>0} (λ_i - 1)².
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..complexes import cellular_complex, laplacian
from ..errors import ClassViolation
from ..poset import Poset
from ..sheaf import Sheaf
from ..spectral import eig_sym
from .model import _act


@dataclass
class EnergyBoundReport:
    lhs: float
    rhs: float
    lambda_star: float
    energy_in: float
    eigenvalues: np.ndarray

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-10) + 1e-12

    def to_record(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "lambda_star": self.lambda_star,
            "energy_in": self.energy_in,
            "holds": self.holds,
        }


def check_positive_class(G: Poset, F: Sheaf) -> None:
    """Raise ``ClassViolation`` unless stalks are ℝ and co-edge restriction products are positive."""
    for s in G.elements:
        if F.stalk_dim[s] != 1:
            raise ClassViolation(f"stalk at {s} has dimension {F.stalk_dim[s]}, expected 1")
    for e in G.stratum(1):
        u, v = G.lower_covers(e)
        prod = float(F.restriction[(u, e)][0, 0] * F.restriction[(v, e)][0, 0])
        if prod <= 0:
            raise ClassViolation(f"restriction product on edge {e} is {prod}")


def sheaf_energy(Delta: np.ndarray, X: np.ndarray) -> float:
    """``tr(Xᵀ Δ X)``."""
    return float(np.einsum("ij,ik,kj->", X, Delta, X))


def energy_bound_check(
    G: Poset, F: Sheaf, W1: float, W2: np.ndarray, X: np.ndarray, phi: str = "relu"
) -> EnergyBoundReport:
    if phi not in ("relu", "leaky_relu"):
        raise ValueError("the bound is stated for ReLU or LeakyReLU")
    check_positive_class(G, F)
    cx = cellular_complex(G, F)
    Delta = laplacian(cx, 0, "normalized")
    lam, _ = eig_sym(Delta)
    lam_star = float(np.max((lam[1:] - 1.0) ** 2)) if lam.size > 1 else 0.0
    f, _ = _act(phi)
    X = np.asarray(X, dtype=float)
    W2 = np.asarray(W2, dtype=float)
    Y = f((np.eye(len(Delta)) - Delta) @ (float(W1) * X) @ W2)
    eX = sheaf_energy(Delta, X)
    rhs = lam_star * float(W1) ** 2 * np.linalg.norm(W2.T, 2) ** 2 * eX
    return EnergyBoundReport(sheaf_energy(Delta, Y), float(rhs), lam_star, eX, lam)
