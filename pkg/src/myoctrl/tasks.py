"""Imitation-reward environments: walk, exo and prosthetic.

An environment wraps a model, a periodic reference trajectory and an action
interface.  ``step`` takes a policy action in ``[-1, 1]^k`` and returns the raw
observation vector; normalization is owned by the learner
(:class:`RunningStats` + :func:`normalize_obs`) so that stored transitions can
be re-normalized consistently.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import dynamics as dyn
from .assets import STAND_HEIGHT, exo_attachments
from .mechanism import WrapError, compile_model
from .model import ModelSpec
from .represent import FullInterface

OBS_CLIP = 10.0
STD_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# reference trajectories


@dataclass
class ReferenceTrajectory:
    """Periodic joint-space reference.

    ``times`` runs from 0 to ``period``; the last frame closes the cycle.
    Coordinates listed in ``progressive`` (e.g. forward root translation)
    advance by ``frames[-1] - frames[0]`` every cycle instead of wrapping.
    """
    times: np.ndarray
    frames: np.ndarray
    progressive: tuple = ()

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=float))
        if len(self.times) < 2 or len(self.frames) != len(self.times):
            raise ValueError("reference needs >= 2 frames with one time per frame")
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("reference times must start at 0 and be strictly increasing")
        self.drift = np.zeros(self.frames.shape[1])
        for k in self.progressive:
            self.drift[k] = self.frames[-1, k] - self.frames[0, k]
        self.velocities = self._central_differences()

    @property
    def period(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def _central_differences(self) -> np.ndarray:
        t, f, T = self.times, self.frames, self.period
        n = len(t)
        v = np.zeros_like(f)
        for k in range(n):
            if 0 < k < n - 1:
                v[k] = (f[k + 1] - f[k - 1]) / (t[k + 1] - t[k - 1])
            else:
                # periodic neighbors across the seam
                prev_f = f[-2] - self.drift
                prev_t = t[-2] - T
                v[k] = (f[1] - prev_f) / (t[1] - prev_t)
        return v

    def lookup(self, t: float):
        """(q^r, qdot^r) at time ``t`` by linear interpolation in phase."""
        if t < 0:
            raise ValueError("t must be >= 0")
        T = self.period
        cycles = math.floor(t / T)
        phase = t - cycles * T
        k = int(np.searchsorted(self.times, phase, side="right")) - 1
        k = min(max(k, 0), len(self.times) - 2)
        w = (phase - self.times[k]) / (self.times[k + 1] - self.times[k])
        if w == 0.0:
            q, qd = self.frames[k].copy(), self.velocities[k].copy()
        else:
            q = (1.0 - w) * self.frames[k] + w * self.frames[k + 1]
            qd = (1.0 - w) * self.velocities[k] + w * self.velocities[k + 1]
        return q + cycles * self.drift, qd

    @classmethod
    def constant(cls, q, period: float = 1.0) -> "ReferenceTrajectory":
        q = np.asarray(q, dtype=float)
        return cls(np.array([0.0, period]), np.vstack([q, q]))

    @classmethod
    def from_csv(cls, path, progressive: tuple = ()) -> "ReferenceTrajectory":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        body = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
        return cls(body[:, 0], body[:, 1:], progressive)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"q_{i}" for i in range(self.dim)])
            for t, row in zip(self.times, self.frames):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def reference_lookup(traj: ReferenceTrajectory, t: float):
    return traj.lookup(t)


def default_reference(model: ModelSpec) -> ReferenceTrajectory:
    """Synthetic gait for walker-family models (root_x progressive)."""
    from .assets import synthetic_gait

    times, frames = synthetic_gait(model)
    names = model.coordinate_names
    prog = (names.index("root_x"),) if "root_x" in names else ()
    return ReferenceTrajectory(times, frames, prog)


# ---------------------------------------------------------------------------
# task configuration and rewards


@dataclass(frozen=True)
class TaskConfig:
    task: str = "walk"
    w_q: float = 1.0
    w_qdot: float = 5e-3
    w_c: float = 1.0
    w_m: float = 10.0
    w_contact: float = 5e-2
    concerned_joints: Optional[tuple] = None   # None: sagittal hip/knee/ankle joints
    upper_joints: tuple = ("shoulder_r", "elbow_r")
    episode_len: int = 1000
    fall_height: Optional[float] = None        # None: 0.6 x standing root height
    squared: bool = True                       # square the velocity and concerned terms
    dt_control: float = 0.01
    init: str = "reference"                    # "reference" | "zero"
    init_noise: float = 0.0

    def __post_init__(self):
        if self.task not in ("walk", "exo", "prosthetic"):
            raise ValueError(f"task must be walk, exo or prosthetic, got '{self.task}'")
        for k in ("w_q", "w_qdot", "w_c", "w_m", "w_contact"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be >= 0")
        if self.init not in ("reference", "zero"):
            raise ValueError("init must be 'reference' or 'zero'")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("concerned_joints", "upper_joints"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TaskConfig":
        d = dict(d)
        for k in ("concerned_joints", "upper_joints"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


def reward_walk(q, qdot, cfg: TaskConfig, ref, concerned=()) -> float:
    """``10 exp(-w_q |q - q^r|^2 - w_qdot |qd - qd^r|^2 - w_c |q_c - q_c^r|^2)``.

    With ``cfg.squared = False`` the velocity and concerned-joint terms use the
    plain norms instead of their squares.
    """
    qr, qdr = ref
    e_q = np.asarray(q, dtype=float) - qr
    e_v = np.asarray(qdot, dtype=float) - qdr
    e_c = e_q[list(concerned)] if len(concerned) else np.zeros(0)
    s_q = float(e_q @ e_q)
    s_v = float(e_v @ e_v)
    s_c = float(e_c @ e_c)
    if not cfg.squared:
        s_v, s_c = math.sqrt(s_v), math.sqrt(s_c)
    return 10.0 * math.exp(-cfg.w_q * s_q - cfg.w_qdot * s_v - cfg.w_c * s_c)


def reward_exo(q_u, q_u_ref, f_contact, cfg: TaskConfig) -> float:
    """``w_m exp(-|q_u - q_u^r|^2) - w_contact |f_contact|_2``."""
    e = np.asarray(q_u, dtype=float) - np.asarray(q_u_ref, dtype=float)
    f = np.asarray(f_contact, dtype=float).ravel()
    return cfg.w_m * math.exp(-float(e @ e)) - cfg.w_contact * float(np.sqrt(f @ f))


# ---------------------------------------------------------------------------
# observation normalization


class RunningStats:
    """Running mean and variance (parallel Welford merge)."""

    def __init__(self, dim: int):
        self.count = 0.0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    @property
    def var(self) -> np.ndarray:
        return self.m2 / self.count if self.count > 0 else np.ones_like(self.mean)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)

    def update(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = len(x)
        if n == 0:
            return
        bm = x.mean(axis=0)
        bm2 = ((x - bm) ** 2).sum(axis=0)
        self._merge(n, bm, bm2)

    def merge(self, other: "RunningStats"):
        if other.count > 0:
            self._merge(other.count, other.mean, other.m2)

    def _merge(self, n, mean, m2):
        tot = self.count + n
        delta = mean - self.mean
        self.mean = self.mean + delta * (n / tot)
        self.m2 = self.m2 + m2 + delta * delta * (self.count * n / tot)
        self.count = tot

    def copy(self) -> "RunningStats":
        c = RunningStats(len(self.mean))
        c.count, c.mean, c.m2 = self.count, self.mean.copy(), self.m2.copy()
        return c

    def to_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean.tolist(), "m2": self.m2.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RunningStats":
        s = cls(len(d["mean"]))
        s.count, s.mean, s.m2 = float(d["count"]), np.array(d["mean"]), np.array(d["m2"])
        return s


def normalize_obs(raw, stats: RunningStats) -> np.ndarray:
    """``clip((x - mean) / max(std, 1e-8), -10, 10)``."""
    return np.clip((np.asarray(raw, dtype=float) - stats.mean) / np.maximum(stats.std, STD_FLOOR),
                   -OBS_CLIP, OBS_CLIP)


# ---------------------------------------------------------------------------
# environment


@dataclass
class StepInfo:
    u: np.ndarray
    diverged: bool = False
    fell: bool = False
    truncated: bool = False


class MuscleEnv:
    """Single-threaded imitation environment.

    Observation layout (concatenated, in order): ``t``, ``q``, ``qdot``,
    ``f_m``, ``l_m``, ``v_m``, ``act``, ``eps`` (exo: spring end-point
    distances), ``q - q^r``, ``qdot - qdot^r``.
    """

    def __init__(self, model: ModelSpec, ref: ReferenceTrajectory, cfg: TaskConfig = TaskConfig(),
                 interface=None, sim: dyn.SimParams = dyn.SimParams()):
        self.model = model
        self.mech = compile_model(model)
        if ref.dim != self.mech.nq:
            raise ValueError(f"reference has {ref.dim} coordinates, model has {self.mech.nq}")
        self.ref = ref
        self.cfg = cfg
        self.sim = sim
        self.interface = interface if interface is not None else FullInterface(self.mech.nm)
        if self.interface.m != self.mech.nm:
            raise ValueError("action interface muscle count does not match the model")
        names = list(self.mech.coord_names)
        self.coord_names = names
        concerned = cfg.concerned_joints
        if concerned is None:
            concerned = tuple(n for n in names if n.split("_")[0] in ("hip", "knee", "ankle"))
        missing = [c for c in concerned if c not in names]
        if missing:
            raise ValueError(f"concerned joints not in model: {missing}")
        self.concerned = [names.index(c) for c in concerned]
        self.upper = [names.index(c) for c in cfg.upper_joints if c in names]
        if cfg.task == "exo":
            if len(self.upper) != len(cfg.upper_joints):
                raise ValueError("exo task needs the upper-limb joints in the model")
            self.attachments = exo_attachments()
            self.servo_q = [names.index(s.joint) for s in self.attachments.servos]
        else:
            self.attachments = None
            self.servo_q = []
        self.root_y = names.index("root_y") if "root_y" in names else None
        if cfg.fall_height is not None:
            self.fall_height = cfg.fall_height
        else:
            self.fall_height = 0.6 * STAND_HEIGHT if self.root_y is not None else None
        self.n_eps = len(self.attachments.springs) if self.attachments else 0
        nq, nm = self.mech.nq, self.mech.nm
        self.layout = [("t", 1), ("q", nq), ("qdot", nq), ("f_m", nm), ("l_m", nm), ("v_m", nm),
                       ("act", nm), ("eps", self.n_eps), ("q_err", nq), ("qdot_err", nq)]
        self.obs_dim = sum(s for _, s in self.layout)
        self.action_dim = self.interface.dim
        self.state: Optional[dyn.SimState] = None
        self.t0 = 0.0
        self.steps = 0

    # -- helpers -------------------------------------------------------------
    def ref_at(self, t_episode: float):
        return self.ref.lookup(self.t0 + t_episode)

    def _servo_targets(self, t_episode):
        if not self.servo_q:
            return None, None
        qr, qdr = self.ref_at(t_episode)
        return qr[self.servo_q], qdr[self.servo_q]

    def observe(self) -> np.ndarray:
        s = self.state
        qr, qdr = self.ref_at(s.t)
        ms = s.muscle
        eps = s.spring_gap if self.n_eps else np.zeros(0)
        return np.concatenate([[s.t], s.q, s.qd, ms.f, ms.l_m, ms.v_m, s.act, eps,
                               s.q - qr, s.qd - qdr])

    def reward(self) -> float:
        s = self.state
        ref = self.ref_at(s.t)
        if self.cfg.task == "exo":
            f = s.spring if s.spring is not None else np.zeros(0)
            return reward_exo(s.q[self.upper], ref[0][self.upper], f, self.cfg)
        return reward_walk(s.q, s.qd, self.cfg, ref, self.concerned)

    # -- API -----------------------------------------------------------------
    def reset(self, rng: np.random.Generator) -> np.ndarray:
        """Start at a uniformly drawn phase of the reference cycle."""
        phase = float(rng.uniform(0.0, self.ref.period))
        self.t0 = phase
        if self.cfg.init == "reference":
            q, qd = self.ref.lookup(phase)
        else:
            q, qd = np.zeros(self.mech.nq), np.zeros(self.mech.nq)
        if self.cfg.init_noise > 0:
            q = q + rng.uniform(-self.cfg.init_noise, self.cfg.init_noise, size=q.shape)
        self.state = dyn.initial_state(self.mech, q, qd)
        if self.n_eps:
            self.state.spring, self.state.spring_gap = dyn.spring_readout(
                self.mech, q, qd, self.attachments)
        self.steps = 0
        return self.observe()

    def step(self, u_raw):
        """Advance one control period; returns ``(obs, reward, done, info)``."""
        u_raw = np.asarray(u_raw, dtype=float)
        if u_raw.shape != (self.action_dim,):
            raise ValueError(f"action must have shape ({self.action_dim},), got {u_raw.shape}")
        u = self.interface.to_excitation(u_raw)
        tgt, tgt_d = self._servo_targets(self.state.t + self.cfg.dt_control)
        info = StepInfo(u=u)
        try:
            self.state = dyn.step(self.mech, self.state, u, self.cfg.dt_control, self.sim,
                                  self.attachments, tgt, tgt_d)
        except (dyn.SimulationDiverged, WrapError, np.linalg.LinAlgError):
            info.diverged = True
            self.steps += 1
            return np.zeros(self.obs_dim), 0.0, True, info
        self.steps += 1
        r = self.reward()
        if self.fall_height is not None and self.state.q[self.root_y] < self.fall_height:
            info.fell = True
        if self.steps >= self.cfg.episode_len:
            info.truncated = True
        return self.observe(), r, info.fell or info.truncated, info

    def manifest(self) -> dict:
        return {
            "model": self.model.name,
            "task": self.cfg.to_dict(),
            "coordinates": self.coord_names,
            "muscles": self.model.muscle_names,
            "observation_layout": [[n, s] for n, s in self.layout],
            "obs_dim": self.obs_dim,
            "action_interface": self.interface.kind,
            "action_dim": self.action_dim,
            "fall_height": self.fall_height,
        }


def env_step(env: MuscleEnv, u_raw):
    return env.step(u_raw)


def reset(env: MuscleEnv, rng: np.random.Generator):
    return env.reset(rng)


# ---------------------------------------------------------------------------
# shipped task presets


TASK_MODELS = {"walk": "walker2d", "exo": "walker2d_exo", "prosthetic": "walker2d_prosthetic"}

PENDULUM_TARGET = 0.8
PENDULUM_EPISODE = 200


def pendulum_task():
    """Swing the one-joint arm from rest to 0.8 rad and hold it (2 s episodes)."""
    from .model import shipped_model

    model = shipped_model("pendulum1")
    ref = ReferenceTrajectory.constant([PENDULUM_TARGET])
    cfg = TaskConfig(task="walk", concerned_joints=(), episode_len=PENDULUM_EPISODE,
                     init="zero", init_noise=0.05)
    return model, ref, cfg


def task_preset(task: str, model: ModelSpec = None, ref: ReferenceTrajectory = None,
                episode_len: int = 1000):
    from .model import shipped_model, shipped_path

    if model is None:
        model = shipped_model(TASK_MODELS[task])
    if ref is None:
        names = model.coordinate_names
        prog = (names.index("root_x"),) if "root_x" in names else ()
        path = shipped_path(f"{model.name}.ref.csv")
        ref = ReferenceTrajectory.from_csv(path, prog) if path.exists() else default_reference(model)
    return model, ref, TaskConfig(task=task, episode_len=episode_len)
