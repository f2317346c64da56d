"""Feed-forward networks with hand-written reverse-mode gradients, plus Adam."""

from __future__ import annotations

import math

import numpy as np


class NonFiniteError(FloatingPointError):
    pass


class MLP:
    """Dense network with rectifier hidden layers and a linear output layer.

    ``forward`` caches the activations needed by ``backward``; one backward
    pass per forward.  Parameters live in ``self.params`` as a flat list
    ``[W0, b0, W1, b1, ...]`` with ``W_k`` shaped (fan_in, fan_out).
    """

    def __init__(self, sizes, rng: np.random.Generator = None, hidden_act: str = "relu",
                 dtype=np.float64):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if hidden_act not in ("relu", "linear"):
            raise ValueError("hidden_act must be 'relu' or 'linear'")
        self.sizes = sizes
        self.hidden_act = hidden_act
        self.dtype = np.dtype(dtype)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = []
        for fi, fo in zip(sizes[:-1], sizes[1:]):
            # default initializer of common deep-learning libraries: U(-1/sqrt(fan_in), +)
            bound = 1.0 / math.sqrt(fi)
            self.params.append(rng.uniform(-bound, bound, size=(fi, fo)).astype(self.dtype))
            self.params.append(rng.uniform(-bound, bound, size=fo).astype(self.dtype))
        self._cache = None

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x) -> np.ndarray:
        h = np.asarray(x, dtype=self.dtype)
        acts = [h]
        masks = []
        for k in range(self.n_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            h = h @ W + b
            if k < self.n_layers - 1 and self.hidden_act == "relu":
                m = h > 0
                h = h * m
                masks.append(m)
            else:
                masks.append(None)
            acts.append(h)
        self._cache = (acts, masks)
        return h

    __call__ = forward

    def backward(self, grad_out, need_input: bool = True):
        """Gradients w.r.t. parameters and input given dLoss/dOutput."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        acts, masks = self._cache
        g = np.asarray(grad_out, dtype=self.dtype)
        grads = [None] * len(self.params)
        for k in range(self.n_layers - 1, -1, -1):
            if masks[k] is not None:
                g = g * masks[k]
            h_in = acts[k]
            W = self.params[2 * k]
            if h_in.ndim == 1:
                grads[2 * k] = np.outer(h_in, g)
                grads[2 * k + 1] = g.copy()
            else:
                grads[2 * k] = h_in.T @ g
                grads[2 * k + 1] = g.sum(axis=0)
            if k > 0 or need_input:
                g = g @ W.T
        return grads, (g if need_input else None)

    def trunk_forward(self, x):
        """Hidden features (output of the last hidden layer) without caching."""
        h = np.asarray(x, dtype=self.dtype)
        for k in range(self.n_layers - 1):
            h = h @ self.params[2 * k] + self.params[2 * k + 1]
            if self.hidden_act == "relu":
                h = np.maximum(h, 0.0)
        return h

    def predict(self, x) -> np.ndarray:
        """Forward pass that leaves the backward cache untouched."""
        k = self.n_layers - 1
        return self.trunk_forward(x) @ self.params[2 * k] + self.params[2 * k + 1]

    def copy(self) -> "MLP":
        c = MLP.__new__(MLP)
        c.sizes, c.hidden_act, c.dtype = list(self.sizes), self.hidden_act, self.dtype
        c.params = [p.copy() for p in self.params]
        c._cache = None
        return c

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, v):
        i = 0
        for p in self.params:
            n = p.size
            p[...] = v[i:i + n].reshape(p.shape)
            i += n

    def to_dict(self) -> dict:
        return {"sizes": self.sizes, "hidden_act": self.hidden_act, "dtype": self.dtype.name,
                "params": [p.tolist() for p in self.params]}

    @classmethod
    def from_dict(cls, d: dict) -> "MLP":
        c = cls.__new__(cls)
        c.sizes, c.hidden_act = [int(s) for s in d["sizes"]], d.get("hidden_act", "relu")
        c.dtype = np.dtype(d.get("dtype", "float64"))
        c.params = [np.array(p, dtype=c.dtype) for p in d["params"]]
        c._cache = None
        return c


def check_finite(name: str, value, context: str = ""):
    v = np.asarray(value)
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"non-finite {name}{' (' + context + ')' if context else ''}: "
                             f"{np.count_nonzero(~np.isfinite(v))} bad entries")


class Adam:
    """Bias-corrected Adam over a list of arrays, updated in place."""

    def __init__(self, params, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [a.tolist() for a in self.m], "v": [a.tolist() for a in self.v]}


def adam_step(params, grads, opt: Adam, lr: float = None):
    if lr is not None:
        opt.lr = lr
    opt.step(grads)
    return params


def grad_check(net: MLP, x, loss_grad, loss, h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences of ``loss(net(x))``.

    ``loss`` maps the network output to a scalar and ``loss_grad`` to dLoss/dOutput.
    """
    y = net.forward(x)
    grads, _ = net.backward(loss_grad(y))
    analytic = np.concatenate([g.ravel() for g in grads])
    theta = net.get_flat()
    numeric = np.zeros_like(theta)
    for i in range(len(theta)):
        old = theta[i]
        theta[i] = old + h
        net.set_flat(theta)
        lp = loss(net.forward(x))
        theta[i] = old - h
        net.set_flat(theta)
        lm = loss(net.forward(x))
        theta[i] = old
        numeric[i] = (lp - lm) / (2 * h)
    net.set_flat(theta)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
