"""Learning restriction maps from element features with a small MLP.

For a covering ``σ ⋖ τ`` the map is ``F(σ ≤ τ) = Φ(x_σ ∥ x_τ)``; one MLP is
kept per source rank. Three output constraints are supported: ``general``
(any d×d matrix), ``diagonal`` and ``orthogonal`` (Cayley transform of a
skew-symmetric matrix).
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..errors import MissingFeatures, TapeMissing
from ..poset import Poset
from ..sheaf import Sheaf


def element_features(P: Poset, features: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Fill missing features by the mean of the covered elements' features, rank by rank."""
    out = {s: np.asarray(v, dtype=float) for s, v in features.items()}
    for s in P.topological_order():
        if s in out:
            continue
        lower = [out[p] for p in P.lower_covers(s) if p in out]
        if not lower:
            raise MissingFeatures(s)
        out[s] = np.mean(lower, axis=0)
    return out


def _n_outputs(d: int, mode: str) -> int:
    return {"general": d * d, "diagonal": d, "orthogonal": d * (d - 1) // 2}[mode]


class SheafLearner:
    """Per-source-rank MLPs ``Φ_j : ℝ^{f_j + f_{j+1}} → ℝ^{d×d}`` (one tanh hidden layer)."""

    def __init__(
        self,
        d: int,
        in_dims: Mapping[int, int],
        mode: str = "general",
        hidden: int = 32,
        seed: int = 0,
        init_scale: float = 0.1,
    ):
        if mode not in ("general", "diagonal", "orthogonal"):
            raise ValueError(f"unknown constraint mode {mode!r}")
        self.d, self.mode, self.hidden = d, mode, hidden
        self.in_dims = dict(in_dims)
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        self.ranks = sorted(in_dims)
        n_out = _n_outputs(d, mode)
        for j in self.ranks:
            fin = in_dims[j]
            self.params[f"r{j}.W1"] = rng.standard_normal((fin, hidden)) / np.sqrt(max(fin, 1))
            self.params[f"r{j}.b1"] = np.zeros(hidden)
            self.params[f"r{j}.W2"] = init_scale * rng.standard_normal((hidden, n_out)) / np.sqrt(hidden)
            # start near the identity map (the constant sheaf)
            b2 = np.zeros(n_out)
            if mode == "general":
                b2 = np.eye(d).ravel()
            elif mode == "diagonal":
                b2 = np.ones(d)
            self.params[f"r{j}.b2"] = b2
        self._tape: dict | None = None

    def _shape(self, out: np.ndarray) -> tuple[np.ndarray, dict]:
        n, d = out.shape[0], self.d
        if self.mode == "general":
            return out.reshape(n, d, d), {}
        if self.mode == "diagonal":
            R = np.zeros((n, d, d))
            R[:, np.arange(d), np.arange(d)] = out
            return R, {}
        iu = np.triu_indices(d, 1)
        A = np.zeros((n, d, d))
        A[:, iu[0], iu[1]] = out
        A -= np.transpose(A, (0, 2, 1))
        I = np.eye(d)
        Minv = np.linalg.inv(I + A)
        Q = (I - A) @ Minv
        return Q, {"Q": Q, "Minv": Minv}

    def forward(self, inputs: Mapping[int, np.ndarray]) -> dict[int, np.ndarray]:
        """Maps for each source rank from the stacked ``x_σ ∥ x_τ`` rows."""
        out, tape = {}, {}
        for j in self.ranks:
            Z = inputs[j]
            p = lambda n: self.params[f"r{j}.{n}"]
            H = np.tanh(Z @ p("W1") + p("b1"))
            O = H @ p("W2") + p("b2")
            R, extra = self._shape(O)
            out[j] = R
            tape[j] = {"Z": Z, "H": H, **extra}
        self._tape = tape
        return out

    def backward(self, dR: Mapping[int, np.ndarray]) -> dict[str, np.ndarray]:
        if self._tape is None:
            raise TapeMissing("learner backward called before forward")
        grads = {}
        d = self.d
        for j in self.ranks:
            t = self._tape[j]
            g = dR[j]
            if self.mode == "general":
                dO = g.reshape(g.shape[0], -1)
            elif self.mode == "diagonal":
                dO = g[:, np.arange(d), np.arange(d)]
            else:
                Q, Minv = t["Q"], t["Minv"]
                I = np.eye(d)
                # Q = (I - A)(I + A)^{-1}  ⇒  dL/dA = -(I + Q)ᵀ G (I + A)^{-ᵀ}
                gA = -np.transpose(I + Q, (0, 2, 1)) @ g @ np.transpose(Minv, (0, 2, 1))
                iu = np.triu_indices(d, 1)
                dO = gA[:, iu[0], iu[1]] - gA[:, iu[1], iu[0]]
            p = lambda n: self.params[f"r{j}.{n}"]
            grads[f"r{j}.W2"] = t["H"].T @ dO
            grads[f"r{j}.b2"] = dO.sum(axis=0)
            dH = dO @ p("W2").T * (1 - t["H"] ** 2)
            grads[f"r{j}.W1"] = t["Z"].T @ dH
            grads[f"r{j}.b1"] = dH.sum(axis=0)
        return grads


def pair_inputs(
    learner: SheafLearner, covers_by_rank: Mapping[int, list], feats: Mapping[str, np.ndarray]
) -> dict[int, np.ndarray]:
    """Stack ``x_σ ∥ x_τ`` for every covering, grouped by source rank."""
    out = {}
    for j, covers in covers_by_rank.items():
        if covers:
            out[j] = np.stack([np.concatenate([feats[s], feats[t]]) for s, t in covers])
        else:
            out[j] = np.zeros((0, learner.in_dims[j]))
    return out


def learn_restrictions(
    learner: SheafLearner, features: Mapping[str, np.ndarray], P: Poset
) -> Sheaf:
    """A sheaf with stalks ``ℝ^d`` whose maps on the learner's ranks come from ``Φ``.

    Coverings starting at other ranks get zero maps. Learned maps need not
    compose consistently across two ranks, so the result may fail functoriality
    when two consecutive ranks are learned.
    """
    feats = element_features(P, features)
    rank = P.rank
    covers = {j: [c for c in P.covers if rank[c[0]] == j] for j in learner.ranks}
    maps = learner.forward(pair_inputs(learner, covers, feats))
    d = learner.d
    res = {}
    for j, cs in covers.items():
        for n, c in enumerate(cs):
            res[c] = maps[j][n]
    return Sheaf(P, {s: d for s in P.elements}, res)
