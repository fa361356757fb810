"""Graded neural sheaf diffusion with a hand-written reverse pass.

One layer maps k-cochain features ``X`` (stacked stalks × channels) to

    φ( sd_up (I⊗W_su) X W_cu + sd_down (I⊗W_sd) X W_cd + (I⊗W_sc) X W_cc )

with ``sd_up = ½I - 2ηΔ_up`` and ``sd_down = ½I - 2ηΔ_down``, so the two
halves add up to the diffusion step ``I - 2ηΔ``. Activations are stored as
arrays of shape ``(M, B, f)``: cochain coordinates, batch, channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from ..errors import ShapeError, TapeMissing
from ..poset import Poset
from ..sheaf import Sheaf
from .geometry import CoboundaryPattern
from .learner import SheafLearner, element_features, pair_inputs


def _act(name: str):
    if name == "tanh":
        return np.tanh, lambda z, y: 1.0 - y * y
    if name in ("id", "identity", "linear"):
        return (lambda z: z), (lambda z, y: np.ones_like(z))
    if name == "relu":
        return (lambda z: np.maximum(z, 0.0)), (lambda z, y: (z > 0).astype(float))
    if name == "leaky_relu":
        return (lambda z: np.where(z > 0, z, 0.01 * z)), (lambda z, y: np.where(z > 0, 1.0, 0.01))
    raise ValueError(f"unknown nonlinearity {name!r}")


def is_odd(name: str, grid=np.linspace(-5, 5, 101)) -> bool:
    f, _ = _act(name)
    return bool(np.array_equal(f(-grid), -f(grid)))


@dataclass
class NsdLayer:
    """Stalk weights ``W_s*`` (d×d) and channel weights ``W_c*`` (f_in×f_out)."""

    Wsu: np.ndarray
    Wsd: np.ndarray
    Wsc: np.ndarray
    Wcu: np.ndarray
    Wcd: np.ndarray
    Wcc: np.ndarray
    phi: str = "tanh"

    NAMES = ("Wsu", "Wsd", "Wsc", "Wcu", "Wcd", "Wcc")

    @classmethod
    def init(cls, d: int, f_in: int, f_out: int, rng: np.random.Generator, phi: str = "tanh"):
        s = lambda: np.eye(d) + 0.1 * rng.standard_normal((d, d))
        c = lambda: rng.standard_normal((f_in, f_out)) * np.sqrt(1.0 / f_in)
        return cls(s(), s(), s(), c(), c(), c(), phi)

    @classmethod
    def identity(cls, d: int, f: int, phi: str = "id", center: bool = False):
        z = np.eye(f) if center else np.zeros((f, f))
        return cls(np.eye(d), np.eye(d), np.eye(d), np.eye(f), np.eye(f), z, phi)

    @property
    def f_in(self) -> int:
        return self.Wcu.shape[0]

    @property
    def f_out(self) -> int:
        return self.Wcu.shape[1]


def _stalk(W: np.ndarray, H: np.ndarray, d: int) -> np.ndarray:
    """``(I ⊗ W) H`` for ``H`` of shape ``(N·d, B, f)``."""
    if d == 1:
        return W[0, 0] * H
    M, B, f = H.shape
    return np.einsum("ij,njbf->nibf", W, H.reshape(M // d, d, B, f)).reshape(M, B, f)


def _stalk_grad(dZ: np.ndarray, H: np.ndarray, d: int) -> np.ndarray:
    M, B, f = H.shape
    return np.einsum("nibf,njbf->ij", dZ.reshape(M // d, d, B, f), H.reshape(M // d, d, B, f))


def _channel(Z: np.ndarray, W: np.ndarray) -> np.ndarray:
    M, B, f = Z.shape
    return (Z.reshape(M * B, f) @ W).reshape(M, B, W.shape[1])


class NsdModel:
    """A stack of graded NSD layers on the k-cochains of a cell poset.

    The sheaf is either fixed (``sheaf``) or produced from element features by
    a ``SheafLearner`` once per forward pass. An optional linear ``readout``
    maps the final channels to ``f_out`` outputs without bias or nonlinearity.
    """

    def __init__(
        self,
        P: Poset,
        k: int,
        d: int,
        layers: list[NsdLayer],
        *,
        sheaf: Sheaf | None = None,
        learner: SheafLearner | None = None,
        features: Mapping[str, np.ndarray] | None = None,
        eta: float = 0.5,
        readout: np.ndarray | None = None,
        dtype=np.float64,
    ):
        if (sheaf is None) == (learner is None):
            raise ValueError("give exactly one of sheaf or learner")
        self.P, self.k, self.d, self.eta = P, k, d, eta
        self.dtype = np.dtype(dtype)
        self.layers = layers
        self.sheaf, self.learner = sheaf, learner
        self.features = features
        self._static_feats = element_features(P, features) if features is not None else None
        self.readout = readout
        top = P.max_rank
        self.down = CoboundaryPattern(P, k - 1, d) if k >= 1 else None
        self.up = CoboundaryPattern(P, k, d) if k < top else None
        self.M = len(P.stratum(k)) * d
        self._fixed = None
        if sheaf is not None:
            self._fixed = self._assemble(
                {j: pat.restrictions_of(sheaf) for j, pat in self._patterns().items()}
            )
        self._tape: dict | None = None

    @classmethod
    def build(
        cls,
        P: Poset,
        k: int,
        d: int,
        dims: list[int],
        seed: int = 0,
        phi: str = "tanh",
        readout: int | None = None,
        **kw,
    ) -> "NsdModel":
        rng = np.random.default_rng(seed)
        layers = [NsdLayer.init(d, a, b, rng, phi) for a, b in zip(dims[:-1], dims[1:])]
        R = None
        if readout is not None:
            R = rng.standard_normal((dims[-1], readout)) * np.sqrt(1.0 / dims[-1])
        return cls(P, k, d, layers, readout=R, **kw)

    # -- parameters ------------------------------------------------------

    @property
    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, L in enumerate(self.layers):
            for n in NsdLayer.NAMES:
                out[f"layer{i}.{n}"] = getattr(L, n)
        if self.readout is not None:
            out["readout"] = self.readout
        if self.learner is not None:
            for n, v in self.learner.params.items():
                out[f"learner.{n}"] = v
        return out

    def set_param(self, name: str, value: np.ndarray) -> None:
        if name == "readout":
            self.readout = value
        elif name.startswith("learner."):
            self.learner.params[name[len("learner."):]] = value
        else:
            i, n = name.split(".")
            setattr(self.layers[int(i[len("layer"):])], n, value)

    # -- sheaf -----------------------------------------------------------

    def _patterns(self) -> dict[int, CoboundaryPattern]:
        out = {}
        if self.down is not None:
            out[self.k - 1] = self.down
        if self.up is not None:
            out[self.k] = self.up
        return out

    def _assemble(self, R: Mapping[int, np.ndarray]) -> dict:
        mats = {j: pat.matrix(R[j]).astype(self.dtype) for j, pat in self._patterns().items()}
        return {"R": R, "D": mats, "Dt": {j: m.T.tocsr() for j, m in mats.items()}}

    def _sheaf_operators(self, features):
        if self._fixed is not None:
            return self._fixed
        feats = element_features(self.P, features) if features is not None else self._static_feats
        pats = self._patterns()
        covers = {j: pats[j].covers if j in pats else [] for j in self.learner.ranks}
        maps = self.learner.forward(pair_inputs(self.learner, covers, feats))
        R = {j: maps[j] if j in maps else np.zeros((pats[j].n_covers, self.d, self.d)) for j in pats}
        return self._assemble(R)

    def laplacians(self, features=None) -> tuple:
        """Sparse ``(Δ_up, Δ_down)`` on k-cochains for the current sheaf."""
        ops = self._sheaf_operators(features)
        Lu = ops["Dt"][self.k] @ ops["D"][self.k] if self.up else sp.csr_matrix((self.M, self.M))
        Ld = ops["D"][self.k - 1] @ ops["Dt"][self.k - 1] if self.down else sp.csr_matrix((self.M, self.M))
        return Lu, Ld

    # -- forward / backward ---------------------------------------------------
    #
    # sd (I⊗W_s) X W_c is evaluated as (sd U) W_c with U = (I⊗W_s) X, so the
    # sparse Laplacian acts on the layer input (f_in channels). With
    # sd = ½I - cΔ (c = 2η) a layer is
    #     pre = Σ_dir [½ U_dir W_c,dir - c (Δ_dir U_dir) W_c,dir] + U_c W_cc.
    # For d = 1 every U_dir is X up to a scalar, so the ½ terms and the centre
    # term fold into one channel matrix.

    def _lap(self, ops, which: str, U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(Δ_which U, inner)`` with ``inner = D U`` (up) or ``Dᵀ U`` (down)."""
        if which == "u":
            inner = ops["D"][self.k] @ U
            return ops["Dt"][self.k] @ inner, inner
        inner = ops["Dt"][self.k - 1] @ U
        return ops["D"][self.k - 1] @ inner, inner

    def _dirs(self) -> list[str]:
        return [t for t, pat in (("u", self.up), ("d", self.down)) if pat is not None]

    def _folded(self, L: NsdLayer) -> np.ndarray:
        """d = 1: channel matrix multiplying X itself (½ terms plus centre)."""
        ws = lambda n: float(getattr(L, "Ws" + n)[0, 0])
        return 0.5 * ws("u") * L.Wcu + 0.5 * ws("d") * L.Wcd + ws("c") * L.Wcc

    def _lap_weight(self, L: NsdLayer, tag: str) -> np.ndarray:
        """Channel matrix multiplying Δ_tag U_tag, including the -c factor."""
        W = -2 * self.eta * getattr(L, "Wc" + tag)
        return W * float(getattr(L, "Ws" + tag)[0, 0]) if self.d == 1 else W

    def forward(self, X: np.ndarray, features=None) -> np.ndarray:
        """Run all layers on ``X`` of shape ``(M, f_in)`` or ``(B, M, f_in)``."""
        X = np.asarray(X, dtype=self.dtype)
        batched = X.ndim == 3
        H = np.ascontiguousarray(np.transpose(X, (1, 0, 2))) if batched else X[:, None, :]
        if H.shape[0] != self.M or H.shape[2] != self.layers[0].f_in:
            raise ShapeError(f"expected features of shape (.., {self.M}, {self.layers[0].f_in}), got {X.shape}")
        ops = self._sheaf_operators(features)
        tape = {"ops": ops, "layers": [], "batched": batched}
        M, B = H.shape[:2]
        dt, d = self.dtype, self.d
        for L in self.layers:
            f, _ = _act(L.phi)
            fi = H.shape[2]
            if d == 1:
                U = {t: H for t in "udc"}
                pre = H.reshape(M * B, fi) @ self._folded(L).astype(dt)
            else:
                U = {t: _stalk(getattr(L, "Ws" + t).astype(dt), H, d) for t in "udc"}
                pre = U["c"].reshape(M * B, fi) @ L.Wcc.astype(dt)
                for t in "ud":
                    pre += U[t].reshape(M * B, fi) @ (0.5 * getattr(L, "Wc" + t)).astype(dt)
            lapU, inner = {}, {}
            for t in self._dirs():
                lapU[t], inner[t] = self._lap(ops, t, U[t].reshape(M, B * fi))
                pre += lapU[t].reshape(M * B, fi) @ self._lap_weight(L, t).astype(dt)
            out = f(pre).reshape(M, B, L.f_out)
            tape["layers"].append(dict(H=H, U=U, lapU=lapU, inner=inner, pre=pre, out=out))
            H = out
        tape["H"] = H
        if self.readout is not None:
            H = _channel(H, self.readout.astype(dt))
        self._tape = tape
        return np.transpose(H, (1, 0, 2)) if batched else H[:, 0, :]

    def backward(self, dY: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss given ``dY = ∂loss/∂output``."""
        if self._tape is None:
            raise TapeMissing("backward called before forward")
        tape = self._tape
        ops = tape["ops"]
        dt, d, c = self.dtype, self.d, 2 * self.eta
        dY = np.asarray(dY, dtype=dt)
        G = np.transpose(dY, (1, 0, 2)) if tape["batched"] else dY[:, None, :]
        grads: dict[str, np.ndarray] = {}
        M, B = G.shape[:2]
        if self.readout is not None:
            Hl = tape["H"]
            grads["readout"] = Hl.reshape(M * B, -1).T @ G.reshape(M * B, -1)
            G = _channel(G, self.readout.T.astype(dt))
        dR = {j: np.zeros((pat.n_covers, d, d)) for j, pat in self._patterns().items()}
        learn = self.learner is not None
        for i in reversed(range(len(self.layers))):
            L, t = self.layers[i], tape["layers"][i]
            _, fprime = _act(L.phi)
            fi = t["H"].shape[2]
            G2 = G.reshape(M * B, -1) * fprime(t["pre"], t["out"].reshape(M * B, -1))
            # gradients w.r.t. the channel matrices multiplying U_tag and Δ U_tag
            if d == 1:
                gU = t["H"].reshape(M * B, fi).T @ G2
                dU = {"x": G2 @ self._folded(L).T.astype(dt)}
            else:
                gU = {s: t["U"][s].reshape(M * B, fi).T @ G2 for s in "udc"}
                dU = {"c": G2 @ L.Wcc.T.astype(dt)}
                for s in "ud":
                    dU[s] = G2 @ (0.5 * getattr(L, "Wc" + s)).T.astype(dt)
            gLap = {}
            for s in self._dirs():
                gLap[s] = t["lapU"][s].reshape(M * B, fi).T @ G2
                Q = (G2 @ self._lap_weight(L, s).T.astype(dt)).reshape(M, B * fi)
                lapQ, innerQ = self._lap(ops, s, Q)
                key = "x" if d == 1 else s
                dU[key] += lapQ.reshape(M * B, fi)
                if learn:
                    Um = t["U"][s].reshape(M, B * fi)
                    if s == "u":
                        # ⟨Q, DᵀD U⟩ = ⟨DQ, DU⟩
                        dR[self.k] += self.up.entry_grad(t["inner"][s], Q) + self.up.entry_grad(innerQ, Um)
                    else:
                        # ⟨Q, D Dᵀ U⟩ = ⟨DᵀQ, DᵀU⟩
                        dR[self.k - 1] += self.down.entry_grad(Q, t["inner"][s]) + self.down.entry_grad(Um, innerQ)
            for s in "udc":
                Wc = getattr(L, "Wc" + s)
                if d == 1:
                    ws = float(getattr(L, "Ws" + s)[0, 0])
                    g_eff = gU if s == "c" else 0.5 * gU
                    if s in gLap:
                        g_eff = g_eff - c * gLap[s]
                    grads[f"layer{i}.Wc{s}"] = ws * g_eff
                    grads[f"layer{i}.Ws{s}"] = np.array([[np.sum(Wc * g_eff)]])
                else:
                    g = gU[s] if s == "c" else 0.5 * gU[s]
                    if s in gLap:
                        g = g - c * gLap[s]
                    grads[f"layer{i}.Wc{s}"] = g
                    dUs = dU[s].reshape(M, B, fi)
                    grads[f"layer{i}.Ws{s}"] = _stalk_grad(dUs, t["H"], d)
            if d == 1:
                G = dU["x"].reshape(M, B, fi)
            else:
                G = sum(_stalk(getattr(L, "Ws" + s).T.astype(dt), dU[s].reshape(M, B, fi), d) for s in "udc")
        if learn:
            empty = np.zeros((0, d, d))
            lg = self.learner.backward({j: dR.get(j, empty) for j in self.learner.ranks})
            for n, v in lg.items():
                grads[f"learner.{n}"] = v
        self.input_grad = np.transpose(G, (1, 0, 2)) if tape["batched"] else G[:, 0, :]
        return {n: np.asarray(g, dtype=np.float64) for n, g in grads.items()}


def nsd_forward(model: NsdModel, X: np.ndarray, features=None) -> np.ndarray:
    return model.forward(X, features)


def nsd_grad(model: NsdModel, dY: np.ndarray) -> dict[str, np.ndarray]:
    return model.backward(dY)


def gradient_check(
    model: NsdModel,
    X: np.ndarray,
    loss_fn,
    h: float = 1e-5,
    features=None,
) -> dict[str, float]:
    """Relative error between reverse-mode and central-difference gradients per parameter.

    ``loss_fn(out) -> (loss, dloss/dout)``. The relative error of a parameter
    array is ``‖g_fd - g_rev‖ / max(‖g_fd‖, ‖g_rev‖, 1e-12)``.
    """
    out = model.forward(X, features)
    _, dY = loss_fn(out)
    grads = model.backward(dY)
    errs = {}
    for name, P in model.params.items():
        P = P.copy()
        num = np.zeros_like(P)
        for idx in np.ndindex(P.shape):
            for sgn in (1, -1):
                Q = P.copy()
                Q[idx] += sgn * h
                model.set_param(name, Q)
                val, _ = loss_fn(model.forward(X, features))
                num[idx] += sgn * val
            num[idx] /= 2 * h
        model.set_param(name, P)
        g = grads[name]
        denom = max(np.linalg.norm(num), np.linalg.norm(g), 1e-12)
        errs[name] = float(np.linalg.norm(num - g) / denom)
    return errs
