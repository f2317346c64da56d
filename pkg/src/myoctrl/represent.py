"""Action-space representations: muscle-synergy expansion and the PCA+ICA latent codec.

The codec maps a full excitation vector ``u`` (dim m) to latent ``z`` (dim d)::

    encode(u) = W @ ((C @ (u - mean)) / s)
    decode(z) = clip(mean + C.T @ (s * (A @ z)), 0, 1)

with PCA components ``C`` (d x m, orthonormal rows), whitening scales ``s``,
ICA unmixing ``W`` and mixing ``A = W^-1``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelSpec

SCALE_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# synergy


@dataclass(frozen=True)
class SynergyMap:
    """Cluster-action slot per muscle: clusters first (model order), then free muscles."""
    clusters: tuple
    independent: tuple
    slot: np.ndarray          # (m,) action slot driving each muscle
    muscle_names: tuple

    @classmethod
    def from_model(cls, model: ModelSpec) -> "SynergyMap":
        names = model.muscle_names
        free = tuple(model.independent_muscles)
        slot = np.full(len(names), -1, dtype=np.int64)
        for k, c in enumerate(model.clusters):
            for mem in c.members:
                slot[names.index(mem)] = k
        for k, nm in enumerate(free):
            slot[names.index(nm)] = len(model.clusters) + k
        if (slot < 0).any():
            missing = [names[i] for i in np.flatnonzero(slot < 0)]
            raise ValueError(f"muscles with a cluster id missing from every cluster: {missing}")
        return cls(tuple(model.clusters), free, slot, tuple(names))

    @property
    def dim(self) -> int:
        return len(self.clusters) + len(self.independent)

    @property
    def m(self) -> int:
        return len(self.slot)


def synergy_expand(smap: SynergyMap, u_c) -> np.ndarray:
    """Broadcast each cluster command to its members; copy independent slots."""
    u_c = np.asarray(u_c, dtype=float)
    if u_c.shape[-1] != smap.dim:
        raise ValueError(f"cluster action has dim {u_c.shape[-1]}, expected {smap.dim}")
    return u_c[..., smap.slot]


# ---------------------------------------------------------------------------
# PCA and FastICA


@dataclass
class PCAFit:
    mean: np.ndarray
    components: np.ndarray        # (d, m)
    scales: np.ndarray            # (d,) singular values / sqrt(n - 1), floored
    explained_variance: np.ndarray
    rank: int
    padded: bool                  # d exceeded the numerical rank


def fit_pca(X, d: int) -> PCAFit:
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    if not 1 <= d <= m:
        raise ValueError(f"d must be in [1, {m}], got {d}")
    if n < d:
        raise ValueError(f"need at least d={d} rows, got {n}")
    mean = X.mean(axis=0)
    _, sv, vt = np.linalg.svd(X - mean, full_matrices=False)
    sv = np.concatenate([sv, np.zeros(m - len(sv))])
    var = sv ** 2 / max(n - 1, 1)
    tol = sv[0] * max(n, m) * np.finfo(float).eps if sv[0] > 0 else 0.0
    rank = int((sv > tol).sum())
    scales = np.maximum(sv[:d] / np.sqrt(max(n - 1, 1)), SCALE_FLOOR)
    scales[rank:] = SCALE_FLOOR
    return PCAFit(mean, vt[:d].copy(), scales, var[:d], rank, d > rank)


@dataclass
class ICAFit:
    unmixing: np.ndarray
    mixing: np.ndarray
    converged: bool
    n_iter: int


def _sym_decorrelate(W):
    s, u = np.linalg.eigh(W @ W.T)
    s = np.maximum(s, np.finfo(float).tiny)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ W


def fit_ica(Z, seed: int = 0, max_iter: int = 500, tol: float = 1e-6) -> ICAFit:
    """FastICA, tanh contrast, symmetric decorrelation, on whitened rows ``Z`` (n x d)."""
    Z = np.asarray(Z, dtype=float)
    n, d = Z.shape
    W = _sym_decorrelate(np.random.default_rng(seed).standard_normal((d, d)))
    best, best_lim = W, np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = np.tanh(Z @ W.T)                 # (n, d)
        g_prime = (1.0 - g * g).mean(axis=0)
        W1 = _sym_decorrelate(g.T @ Z / n - g_prime[:, None] * W)
        lim = np.max(np.abs(np.abs(np.einsum("ij,ij->i", W1, W)) - 1.0))
        W = W1
        if lim < best_lim:
            best, best_lim = W, lim
        if lim < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"FastICA did not converge in {max_iter} iterations (last change {best_lim:.2e})")
        W = best
    return ICAFit(W, np.linalg.inv(W), converged, it)


# ---------------------------------------------------------------------------
# codec


@dataclass
class LatentCodec:
    mean: np.ndarray
    components: np.ndarray
    scales: np.ndarray
    ica_unmixing: np.ndarray
    ica_mixing: np.ndarray
    d: int
    seed: int = 0
    report: dict = field(default_factory=dict, compare=False)

    @property
    def m(self) -> int:
        return len(self.mean)

    def encode(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        w = ((u - self.mean) @ self.components.T) / self.scales
        return w @ self.ica_unmixing.T

    def decode(self, z, clamp: bool = True) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        p = (z @ self.ica_mixing.T) * self.scales
        u = self.mean + p @ self.components
        return np.clip(u, 0.0, 1.0) if clamp else u

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "scales": self.scales.tolist(),
            "ica_unmixing": self.ica_unmixing.tolist(),
            "ica_mixing": self.ica_mixing.tolist(),
            "d": int(self.d),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LatentCodec":
        return cls(np.array(doc["mean"], dtype=float), np.array(doc["components"], dtype=float),
                   np.array(doc["scales"], dtype=float), np.array(doc["ica_unmixing"], dtype=float),
                   np.array(doc["ica_mixing"], dtype=float), int(doc["d"]), int(doc.get("seed", 0)))

    def dumps(self) -> bytes:
        return (json.dumps(self.to_dict()) + "\n").encode("utf-8")

    def save(self, path):
        Path(path).write_bytes(self.dumps())

    @classmethod
    def load(cls, path) -> "LatentCodec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def encode(codec: LatentCodec, u) -> np.ndarray:
    return codec.encode(u)


def decode(codec: LatentCodec, z) -> np.ndarray:
    return codec.decode(z)


def fit_codec(X, d: int, seed: int = 0) -> LatentCodec:
    """PCA to ``d`` dims, whiten, then FastICA on the whitened scores."""
    X = np.asarray(X, dtype=float)
    pca = fit_pca(X, d)
    Z = ((X - pca.mean) @ pca.components.T) / pca.scales
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ica = fit_ica(Z, seed=seed)
    total_var = float(np.var(X, axis=0, ddof=1).sum()) if len(X) > 1 else 0.0
    report = {
        "rows": int(len(X)),
        "rank": pca.rank,
        "rank_padded": bool(pca.padded),
        "explained_variance_ratio": (pca.explained_variance / total_var).tolist() if total_var > 0 else [],
        "ica_converged": bool(ica.converged),
        "ica_iterations": int(ica.n_iter),
        "warnings": [str(w.message) for w in caught],
    }
    return LatentCodec(pca.mean, pca.components, pca.scales, ica.unmixing, ica.mixing, d, seed,
                       report)


def reconstruction_error(codec: LatentCodec, X) -> float:
    """Per-entry RMS of ``decode(encode(x)) - x`` with the clamp disabled."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValueError("empty dataset")
    R = codec.decode(codec.encode(X), clamp=False) - X
    return float(np.sqrt(np.mean(R * R)))


# ---------------------------------------------------------------------------
# action interfaces (policy output in [-1, 1]^k -> excitation in [0, 1]^m)


class FullInterface:
    kind = "full"

    def __init__(self, m: int):
        self.m = m
        self.dim = m

    def to_excitation(self, u_raw) -> np.ndarray:
        return 0.5 * (np.clip(u_raw, -1.0, 1.0) + 1.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m": self.m}


class ClusterInterface:
    kind = "cluster"

    def __init__(self, smap: SynergyMap):
        self.smap = smap
        self.m = smap.m
        self.dim = smap.dim

    def to_excitation(self, u_raw) -> np.ndarray:
        return synergy_expand(self.smap, 0.5 * (np.clip(u_raw, -1.0, 1.0) + 1.0))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m": self.m}


class LatentInterface:
    """Policy output scaled to latent units (whitened ICA scores) and decoded."""
    kind = "latent"

    def __init__(self, codec: LatentCodec, scale: float = 2.0):
        self.codec = codec
        self.scale = scale
        self.m = codec.m
        self.dim = codec.d

    def to_excitation(self, u_raw) -> np.ndarray:
        return self.codec.decode(self.scale * np.clip(u_raw, -1.0, 1.0))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m": self.m, "scale": self.scale, "codec": self.codec.to_dict()}


def interface_from_dict(doc: dict, model: ModelSpec):
    kind = doc["kind"]
    if kind == "full":
        return FullInterface(len(model.muscles))
    if kind == "cluster":
        return ClusterInterface(SynergyMap.from_model(model))
    if kind == "latent":
        return LatentInterface(LatentCodec.from_dict(doc["codec"]), doc.get("scale", 2.0))
    raise ValueError(f"unknown action interface '{kind}'")


def make_interface(kind: str, model: ModelSpec, codec: LatentCodec = None, scale: float = 2.0):
    if kind == "full":
        return FullInterface(len(model.muscles))
    if kind == "cluster":
        return ClusterInterface(SynergyMap.from_model(model))
    if kind == "latent":
        if codec is None:
            raise ValueError("latent interface needs a fitted codec")
        return LatentInterface(codec, scale)
    raise ValueError(f"unknown action interface '{kind}'")
