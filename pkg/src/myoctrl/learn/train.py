"""Off-policy training loop with periodic deterministic evaluation."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..tasks import RunningStats, normalize_obs
from .sac import ReplayBuffer, SACConfig, SACLearner, SquashedGaussianPolicy


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    sac: SACConfig = SACConfig()
    warmup: int = 1000
    eval_every: int = 5000
    eval_episodes: int = 5
    seed: int = 0
    target_return: Optional[float] = None   # stop after the first evaluation reaching it
    log_excitations: bool = False

    def to_dict(self) -> dict:
        return {"steps": self.steps, "sac": self.sac.to_dict(), "warmup": self.warmup,
                "eval_every": self.eval_every, "eval_episodes": self.eval_episodes,
                "seed": self.seed, "target_return": self.target_return,
                "log_excitations": self.log_excitations}


@dataclass
class EvalResult:
    mean: float
    std: float
    returns: list
    lengths: list


@dataclass
class TrainResult:
    policy: SquashedGaussianPolicy          # best evaluated policy
    stats: RunningStats                     # observation statistics frozen with it
    curve: list                             # (step, mean_return, std_return)
    steps_done: int
    wall_clock: float
    episodes: int
    final_policy: SquashedGaussianPolicy = None
    final_stats: RunningStats = None
    excitations: Optional[np.ndarray] = None
    losses: list = field(default_factory=list)

    @property
    def best_return(self) -> float:
        return max((m for _, m, _ in self.curve), default=float("nan"))


def evaluate(env, policy: SquashedGaussianPolicy, stats: RunningStats, episodes: int,
             rng: np.random.Generator, deterministic: bool = True) -> EvalResult:
    """Rollouts with frozen normalization; returns are undiscounted sums.

    Deterministic evaluation uses the squashed mean action; otherwise actions
    are sampled with ``rng``.
    """
    rets, lens = [], []
    for _ in range(episodes):
        obs = env.reset(rng)
        total, n, done = 0.0, 0, False
        while not done:
            a = policy.act(normalize_obs(obs, stats), deterministic, rng)
            obs, r, done, _ = env.step(a)
            total += r
            n += 1
        rets.append(total)
        lens.append(n)
    return EvalResult(float(np.mean(rets)), float(np.std(rets)), rets, lens)


def _streams(seed: int):
    names = ("init", "warmup", "act", "env", "buffer", "update", "eval")
    kids = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(k) for n, k in zip(names, kids)}


def train(env_factory: Callable, cfg: TrainConfig, init_policy: SquashedGaussianPolicy = None,
          init_stats: RunningStats = None, progress: Callable = None) -> TrainResult:
    """Soft actor-critic on ``env_factory()`` for ``cfg.steps`` environment steps.

    Warmup steps use uniform random actions; afterwards one gradient update
    follows every environment step.  Every ``eval_every`` steps the current
    policy is evaluated deterministically; the best one is returned.
    """
    t_start = time.perf_counter()
    rng = _streams(cfg.seed)
    env, eval_env = env_factory(), env_factory()
    k, n_obs = env.action_dim, env.obs_dim
    policy = None
    if init_policy is not None:
        policy = (init_policy.copy() if init_policy.act_dim == k
                  else init_policy.warm_start(k, rng["init"]))
    learner = SACLearner(n_obs, k, cfg.sac, policy=policy, rng=rng["init"])
    stats = init_stats.copy() if init_stats is not None else RunningStats(n_obs)
    buf = ReplayBuffer(min(cfg.sac.buffer_capacity, max(cfg.steps, 1)), n_obs, k)
    excitations = np.zeros((cfg.steps, env.interface.m)) if cfg.log_excitations else None

    best = (-np.inf, learner.policy.copy(), stats.copy())
    curve, losses = [], []
    episodes = 0
    obs = env.reset(rng["env"])
    stats.update(obs)
    step = 0
    for step in range(1, cfg.steps + 1):
        if step <= cfg.warmup:
            a = rng["warmup"].uniform(-1.0, 1.0, size=k)
        else:
            a = learner.policy.act(normalize_obs(obs, stats), False, rng["act"])
        nxt, r, done, info = env.step(a)
        if excitations is not None:
            excitations[step - 1] = info.u
        terminal = info.fell or info.diverged
        if info.diverged:
            nxt = obs
        buf.add(obs, a, r, nxt, terminal)
        if not info.diverged:
            stats.update(nxt)
        obs = nxt
        if done:
            episodes += 1
            obs = env.reset(rng["env"])
            stats.update(obs)

        if step > cfg.warmup and buf.size >= cfg.sac.batch:
            o, act, rew, o2, d = buf.sample(cfg.sac.batch, rng["buffer"])
            out = learner.update((normalize_obs(o, stats), act, rew, normalize_obs(o2, stats), d),
                                 rng["update"])
            if step % 1000 == 0:
                losses.append((step, out))

        if step % cfg.eval_every == 0:
            frozen = stats.copy()
            ev = evaluate(eval_env, learner.policy, frozen, cfg.eval_episodes, rng["eval"])
            curve.append((step, ev.mean, ev.std))
            if ev.mean > best[0]:
                best = (ev.mean, learner.policy.copy(), frozen)
            if progress is not None:
                progress(step, ev)
            if cfg.target_return is not None and ev.mean >= cfg.target_return:
                break

    if excitations is not None:
        excitations = excitations[:step]
    return TrainResult(policy=best[1], stats=best[2], curve=curve, steps_done=step,
                       wall_clock=time.perf_counter() - t_start, episodes=episodes,
                       final_policy=learner.policy.copy(), final_stats=stats.copy(),
                       excitations=excitations, losses=losses)


# ---------------------------------------------------------------------------
# checkpoints and curves


def save_checkpoint(path, policy: SquashedGaussianPolicy, stats: RunningStats, meta: dict = None):
    doc = {"format": "myoctrl-policy-1", "net_spec": {"sizes": policy.net.sizes,
                                                      "hidden_act": policy.net.hidden_act,
                                                      "head": "squashed_gaussian"},
           "policy": policy.to_dict(), "obs_stats": stats.to_dict(), "meta": meta or {}}
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "myoctrl-policy-1":
        raise ValueError(f"{path}: not a policy checkpoint")
    return (SquashedGaussianPolicy.from_dict(doc["policy"]), RunningStats.from_dict(doc["obs_stats"]),
            doc.get("meta", {}))


def write_curve(path, curve):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,mean_return,std_return\n")
        for s, m, sd in curve:
            fh.write(f"{int(s)},{m!r},{sd!r}\n")


def read_curve(path) -> list:
    rows = Path(path).read_text(encoding="utf-8").strip().splitlines()[1:]
    out = []
    for r in rows:
        s, m, sd = r.split(",")
        out.append((int(s), float(m), float(sd)))
    return out
