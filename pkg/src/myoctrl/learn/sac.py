"""Soft actor-critic with twin critics and automatic entropy tuning.

The update order and defaults follow the common reference implementation:
temperature step, critic step, then actor step against the freshly updated
critics, then Polyak averaging of the target critics.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .nn import MLP, Adam, NonFiniteError, check_finite

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
SQUASH_EPS = 1e-6
LOG_2PI = math.log(2.0 * math.pi)

# hidden sizes reported for the full-body experiments, kept as a preset
FULL_BODY_HIDDEN = (512, 300)
FULL_BODY_HIDDEN_PROSTHETIC = (400, 300)


@dataclass(frozen=True)
class SACConfig:
    gamma: float = 0.99
    lr: float = 3e-4
    batch: int = 256
    polyak: float = 0.005
    buffer_capacity: int = 200_000
    hidden: tuple = (64, 64)
    dtype: str = "float32"
    init_alpha: float = 1.0
    target_entropy: float = None     # None: -dim(action)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if not (self.lr > 0 and self.polyak > 0 and self.batch > 0 and self.buffer_capacity > 0):
            raise ValueError("lr, polyak, batch and buffer capacity must be positive")
        if len(self.hidden) < 1:
            raise ValueError("need at least one hidden layer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SACConfig":
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        return cls(**d)


class ReplayBuffer:
    """FIFO ring buffer of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.act = np.zeros((self.capacity, act_dim))
        self.rew = np.zeros(self.capacity)
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.done = np.zeros(self.capacity)
        self.ptr = 0
        self.size = 0

    def add(self, obs, act, rew, next_obs, done):
        i = self.ptr
        self.obs[i], self.act[i], self.rew[i] = obs, act, rew
        self.next_obs[i], self.done[i] = next_obs, float(done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        if self.size < batch:
            raise ValueError(f"buffer holds {self.size} transitions, batch needs {batch}")
        idx = rng.integers(0, self.size, size=batch)
        return self.obs[idx], self.act[idx], self.rew[idx], self.next_obs[idx], self.done[idx]


class SquashedGaussianPolicy:
    """tanh-squashed diagonal Gaussian; one MLP emits ``[mean, log_std]``."""

    def __init__(self, obs_dim: int, act_dim: int, hidden=(64, 64), rng=None, net: MLP = None,
                 dtype="float64"):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.net = net if net is not None else MLP([obs_dim, *hidden, 2 * act_dim], rng,
                                                   dtype=dtype)

    def _heads(self, out):
        mu = out[..., :self.act_dim]
        raw = out[..., self.act_dim:]
        return mu, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), raw

    def act(self, obs, deterministic: bool = False, rng: np.random.Generator = None) -> np.ndarray:
        """Squashed action, kept strictly inside (-1, 1) even when tanh saturates."""
        mu, log_std, _ = self._heads(self.net.predict(obs))
        pre = mu if deterministic else mu + np.exp(log_std) * rng.standard_normal(mu.shape)
        edge = np.nextafter(1.0, 0.0)
        return np.clip(np.tanh(pre), -edge, edge)

    @staticmethod
    def _squash_correction(a):
        return np.log(1.0 - a * a + SQUASH_EPS).sum(axis=-1)

    def log_prob(self, obs, a) -> np.ndarray:
        """Log-density of squashed actions ``a`` in (-1, 1)."""
        mu, log_std, _ = self._heads(self.net.predict(obs))
        a = np.asarray(a, dtype=float)
        pre = np.arctanh(a)
        z = (pre - mu) / np.exp(log_std)
        gauss = (-0.5 * z * z - log_std - 0.5 * LOG_2PI).sum(axis=-1)
        return gauss - self._squash_correction(a)

    def sample(self, obs, rng: np.random.Generator, cache: bool = True):
        """Reparameterized draw; returns ``(a, logp, aux)`` where aux feeds the actor gradient."""
        out = self.net.forward(obs) if cache else self.net.predict(obs)
        mu, log_std, raw = self._heads(out)
        eps = rng.standard_normal(mu.shape).astype(out.dtype)
        std = np.exp(log_std)
        pre = mu + std * eps
        a = np.tanh(pre)
        logp = (-0.5 * eps * eps - log_std - 0.5 * LOG_2PI).sum(axis=-1) - self._squash_correction(a)
        return a, logp, (eps, std, raw)

    def backward_from(self, a, aux, dL_dlogp, dL_da):
        """Backprop ``dL/dlogp`` (B,) and ``dL/da`` (B, k) through the last cached sample."""
        eps, std, raw = aux
        one_m = 1.0 - a * a
        # d logp / d pre: squash correction only (the Gaussian term is reparameterized away)
        c = 2.0 * a * one_m / (one_m + SQUASH_EPS)
        g_pre = dL_dlogp[:, None] * c + dL_da * one_m
        g_mu = g_pre
        g_logstd = g_pre * std * eps - dL_dlogp[:, None]
        g_logstd = g_logstd * ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX))
        grads, _ = self.net.backward(np.concatenate([g_mu, g_logstd], axis=-1), need_input=False)
        return grads

    def copy(self) -> "SquashedGaussianPolicy":
        return SquashedGaussianPolicy(self.obs_dim, self.act_dim, net=self.net.copy())

    def warm_start(self, act_dim: int, rng: np.random.Generator) -> "SquashedGaussianPolicy":
        """New policy sharing this trunk, with a freshly initialized action head."""
        fresh = MLP([self.obs_dim, *self.net.sizes[1:-1], 2 * act_dim], rng, dtype=self.net.dtype)
        net = self.net.copy()
        net.sizes = fresh.sizes
        net.params[-2:] = fresh.params[-2:]
        return SquashedGaussianPolicy(self.obs_dim, act_dim, net=net)

    def to_dict(self) -> dict:
        return {"obs_dim": self.obs_dim, "act_dim": self.act_dim, "net": self.net.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "SquashedGaussianPolicy":
        return cls(int(d["obs_dim"]), int(d["act_dim"]), net=MLP.from_dict(d["net"]))


def polyak_update(target: MLP, source: MLP, tau: float):
    for pt, p in zip(target.params, source.params):
        pt *= 1.0 - tau
        pt += tau * p


class SACLearner:
    def __init__(self, obs_dim: int, act_dim: int, cfg: SACConfig = SACConfig(),
                 policy: SquashedGaussianPolicy = None, rng: np.random.Generator = None):
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.policy = policy if policy is not None else SquashedGaussianPolicy(
            obs_dim, act_dim, cfg.hidden, rng, dtype=cfg.dtype)
        sizes = [obs_dim + act_dim, *cfg.hidden, 1]
        self.q1, self.q2 = MLP(sizes, rng, dtype=cfg.dtype), MLP(sizes, rng, dtype=cfg.dtype)
        self.q1_t, self.q2_t = self.q1.copy(), self.q2.copy()
        self.log_alpha = np.array([math.log(cfg.init_alpha)], dtype=cfg.dtype)
        self.target_entropy = (-float(act_dim) if cfg.target_entropy is None
                               else float(cfg.target_entropy))
        self.opt_pi = Adam(self.policy.net.params, cfg.lr)
        self.opt_q = Adam(self.q1.params + self.q2.params, cfg.lr)
        self.opt_alpha = Adam([self.log_alpha], cfg.lr)
        self.n_updates = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    def critic_target(self, rew, next_obs, done, alpha, rng) -> np.ndarray:
        a2, logp2, _ = self.policy.sample(next_obs, rng, cache=False)
        x2 = np.concatenate([next_obs, a2], axis=-1)
        qmin = np.minimum(self.q1_t.predict(x2), self.q2_t.predict(x2))[:, 0]
        return rew + (1.0 - done) * self.cfg.gamma * (qmin - alpha * logp2)

    def update(self, batch, rng: np.random.Generator) -> dict:
        obs, act, rew, next_obs, done = batch
        B = len(rew)

        # temperature (uses the current policy sample; alpha for this update is the old one)
        a_pi, logp, aux = self.policy.sample(obs, rng)
        alpha = self.alpha
        alpha_loss = -float(np.mean(self.log_alpha[0] * (logp + self.target_entropy)))
        self.opt_alpha.step([np.array([-np.mean(logp + self.target_entropy)])])

        # critics
        y = self.critic_target(rew, next_obs, done, alpha, rng)
        x = np.concatenate([obs, act], axis=-1)
        q1 = self.q1.forward(x)[:, 0]
        g1, _ = self.q1.backward(((q1 - y) / B)[:, None], need_input=False)
        q2 = self.q2.forward(x)[:, 0]
        g2, _ = self.q2.backward(((q2 - y) / B)[:, None], need_input=False)
        q_loss1 = 0.5 * float(np.mean((q1 - y) ** 2))
        q_loss2 = 0.5 * float(np.mean((q2 - y) ** 2))
        check_finite("critic loss", [q_loss1, q_loss2], f"update {self.n_updates}")
        self.opt_q.step(g1 + g2)

        # actor, against the updated critics
        xp = np.concatenate([obs, a_pi], axis=-1)
        ones = np.ones((B, 1))
        qa1 = self.q1.forward(xp)[:, 0]
        _, gin1 = self.q1.backward(ones)
        qa2 = self.q2.forward(xp)[:, 0]
        _, gin2 = self.q2.backward(ones)
        use1 = (qa1 <= qa2)[:, None]
        g_q = np.where(use1, gin1, gin2)[:, self.obs_dim:]
        qmin = np.minimum(qa1, qa2)
        pi_loss = float(np.mean(alpha * logp - qmin))
        check_finite("policy loss", pi_loss, f"update {self.n_updates}")
        grads = self.policy.backward_from(a_pi, aux, np.full(B, alpha / B), -g_q / B)
        self.opt_pi.step(grads)

        polyak_update(self.q1_t, self.q1, self.cfg.polyak)
        polyak_update(self.q2_t, self.q2, self.cfg.polyak)
        self.n_updates += 1
        if not np.isfinite(self.log_alpha[0]):
            raise NonFiniteError("temperature became non-finite")
        return {"q1": q_loss1, "q2": q_loss2, "policy": pi_loss, "alpha": alpha_loss,
                "alpha_value": alpha, "entropy": float(-np.mean(logp))}


def sac_update(learner: SACLearner, batch, rng) -> dict:
    return learner.update(batch, rng)
