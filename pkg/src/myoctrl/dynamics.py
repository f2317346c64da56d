"""Forward dynamics of muscle-driven planar models.

Solves ``M(q) qdd + c(q, qd) = R^T f_m(act) + J_c^T f_c + tau_ext`` where ``R``
is the moment-arm matrix.  :func:`step` advances one control period with
``n_sub`` physics substeps of semi-implicit Euler; the velocity-dependent
muscle and joint damping are treated linearly implicitly inside each substep
(``(M + dt * D) dqd = dt * (tau - c)``), which keeps stiff distal muscles
stable at ``dt = 1e-3``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .mechanism import (Mechanism, SingularMassError, WrapError, add_point_jacobian, compile_model,
                        contact_kernel, coordinates, crba, expand_coordinates, link_kinematics,
                        muscle_path_kernel, point_velocity, rnea, world_point)
from .model import ModelSpec
from .muscle import (DEFAULT_ACTIVATION, L_M_FLOOR, ActivationParams, MuscleState,
                     _activation_step, _fl, _fp, _fv, _fv_slope)


class SimulationDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ContactParams:
    k_n: float = 1e4
    d_n: float = 1e2
    mu: float = 0.8
    k_t: float = 1e3

    def __post_init__(self):
        if min(self.k_n, self.d_n, self.mu, self.k_t) < 0:
            raise ValueError("contact parameters must be >= 0")


@dataclass(frozen=True)
class SimParams:
    n_sub: int = 10
    activation: ActivationParams = DEFAULT_ACTIVATION
    contact: ContactParams = field(default_factory=ContactParams)
    limit_k: float = 200.0   # soft joint-range spring, per unit (rad or m)
    limit_d: float = 5.0


@dataclass(frozen=True)
class ExternalWrench:
    segment: str
    force: tuple = (0.0, 0.0)
    torque: float = 0.0


@dataclass(frozen=True)
class PointSpring:
    """Zero-rest-length spring between two segment-fixed points."""
    seg_a: str
    pos_a: tuple
    seg_b: str
    pos_b: tuple
    k: float
    d: float = 0.0


@dataclass(frozen=True)
class Servo:
    """PD servo acting on one generalized coordinate."""
    joint: str
    kp: float
    kd: float


@dataclass(frozen=True)
class Attachments:
    springs: tuple = ()
    servos: tuple = ()


@dataclass
class SimState:
    t: float
    q: np.ndarray
    qd: np.ndarray
    act: np.ndarray
    muscle: Optional[MuscleState] = None
    contact: Optional[np.ndarray] = None      # per sphere (f_t, f_n)
    spring: Optional[np.ndarray] = None       # per spring world force on seg_a (fx, fy)
    spring_gap: Optional[np.ndarray] = None   # per spring end-point distance (m)


# ---------------------------------------------------------------------------
# joint-space quantities


def _mech(model) -> Mechanism:
    return model if isinstance(model, Mechanism) else compile_model(model)


def _check_mass(mech: Mechanism):
    bad = [nm for nm, m in zip(mech.coord_names, mech.coord_real_mass) if m <= 0.0]
    if bad:
        raise SingularMassError(f"coordinates move only phantom mass: {', '.join(bad)}")


def mass_matrix(model, q) -> np.ndarray:
    """Joint-space mass matrix (composite-rigid-body algorithm)."""
    mech = _mech(model)
    _check_mass(mech)
    th, _, G, _ = coordinates(mech, q)
    pose, S = link_kinematics(mech.arr, th)
    return G.T @ crba(mech.arr, pose, S) @ G


def inverse_dynamics(model, q, qd, qdd, gravity: bool = True) -> np.ndarray:
    """Generalized forces needed for ``qdd`` at ``(q, qd)`` (recursive Newton-Euler)."""
    mech = _mech(model)
    th, thd, G, gam = coordinates(mech, q, qd)
    pose, S = link_kinematics(mech.arr, th)
    g = mech.arr.gravity if gravity else np.zeros(2)
    thdd = G @ np.asarray(qdd, dtype=float) + gam
    return G.T @ rnea(mech.arr, pose, S, thd, thdd, g[0], g[1])


def bias_forces(model, q, qd) -> np.ndarray:
    """Coriolis, centrifugal and gravity terms: inverse dynamics at zero acceleration."""
    mech = _mech(model)
    return inverse_dynamics(mech, q, qd, np.zeros(mech.nq))


def muscle_generalized_forces(moment_arms, muscle_forces) -> np.ndarray:
    R = np.asarray(moment_arms, dtype=float)
    f = np.asarray(muscle_forces, dtype=float)
    if R.shape[0] != f.shape[0]:
        raise ValueError(f"moment arms for {R.shape[0]} muscles but {f.shape[0]} forces")
    return R.T @ f


@dataclass
class ContactResult:
    forces: np.ndarray       # (n_spheres, 2): tangential, normal
    points: np.ndarray       # world contact points
    generalized: np.ndarray  # J_c^T f_c


def contact_forces(model, q, qd, params: ContactParams = ContactParams()) -> ContactResult:
    mech = _mech(model)
    th, thd, G, _ = coordinates(mech, q, qd)
    pose, S = link_kinematics(mech.arr, th)
    f, pts, tau = contact_kernel(mech.arr, pose, S, thd, params.k_n, params.d_n,
                                 params.mu, params.k_t)
    return ContactResult(f, pts, G.T @ tau)


def external_generalized(model, q, wrenches: Sequence[ExternalWrench]) -> np.ndarray:
    """Generalized force of world-frame wrenches applied at segment frame origins."""
    mech = _mech(model)
    th, _, G, _ = coordinates(mech, q)
    pose, S = link_kinematics(mech.arr, th)
    names = [s.name for s in mech.model.segments]
    tau = np.zeros(mech.n_links)
    for w in wrenches:
        k = names.index(w.segment)
        li = int(mech.seg_link[k])
        if li < 0:
            continue
        off = mech.seg_off[k]
        px, py = world_point(pose, li, off[0], off[1])
        fx, fy = w.force
        j = li
        while j >= 0:
            tau[j] += S[j, 0] * (w.torque + px * fy - py * fx) + S[j, 1] * fx + S[j, 2] * fy
            j = mech.arr.parent[j]
    return G.T @ tau


def forward_dynamics(model, q, qd, tau_muscle=None, tau_contact=None, tau_ext=None) -> np.ndarray:
    """Joint accelerations from the equations of motion (Cholesky solve)."""
    mech = _mech(model)
    M = mass_matrix(mech, q)
    rhs = -bias_forces(mech, q, qd)
    for t in (tau_muscle, tau_contact, tau_ext):
        if t is not None:
            rhs = rhs + np.asarray(t, dtype=float)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise SingularMassError(f"mass matrix is not positive definite: {exc}") from None
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)


def mechanical_energy(model, q, qd) -> float:
    """Kinetic plus gravitational potential energy (J)."""
    mech = _mech(model)
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    ke = 0.5 * qd @ mass_matrix(mech, q) @ qd
    th, _, _, _ = coordinates(mech, q)
    pose, _ = link_kinematics(mech.arr, th)
    a = mech.arr
    pe = 0.0
    for i in range(mech.n_links):
        cx, cy = world_point(pose, i, a.com[i, 0], a.com[i, 1])
        pe -= a.mass[i] * (a.gravity[0] * cx + a.gravity[1] * cy)
    return float(ke + pe)


# ---------------------------------------------------------------------------
# time stepping


@njit(cache=True)
def _muscle_state(a, q, qd, act):
    th, thd, G, gam = expand_coordinates(a, q, qd)
    pose, S = link_kinematics(a, th)
    L, dL, err = muscle_path_kernel(a, pose, S)
    nm = L.shape[0]
    ldot = dL @ thd
    lm = np.zeros(nm)
    vm = np.zeros(nm)
    f = np.zeros(nm)
    for i in range(nm):
        lm[i] = max((L[i] - a.m_lts[i]) / a.m_lopt[i], L_M_FLOOR)
        vm[i] = ldot[i] / (a.m_lopt[i] * a.m_vmax[i])
        f[i] = a.m_fmax[i] * (_fl(lm[i]) * _fv(vm[i]) * act[i] + _fp(lm[i]))
    return L, lm, vm, f, err


@njit(cache=True)
def _springs(a, pose, S, thd, sp_link, sp_pos, sp_k, sp_d, tau):
    ns = sp_k.shape[0]
    out = np.zeros((ns, 2))
    gap = np.zeros(ns)
    for k in range(ns):
        la, lb = sp_link[k, 0], sp_link[k, 1]
        ax, ay = world_point(pose, la, sp_pos[k, 0], sp_pos[k, 1])
        bx, by = world_point(pose, lb, sp_pos[k, 2], sp_pos[k, 3])
        vax, vay = point_velocity(a, S, thd, la, ax, ay)
        vbx, vby = point_velocity(a, S, thd, lb, bx, by)
        fx = sp_k[k] * (bx - ax) + sp_d[k] * (vbx - vax)
        fy = sp_k[k] * (by - ay) + sp_d[k] * (vby - vay)
        out[k, 0] = fx
        out[k, 1] = fy
        gap[k] = np.sqrt((bx - ax) ** 2 + (by - ay) ** 2)
        add_point_jacobian(a, S, la, ax, ay, fx, fy, tau)
        add_point_jacobian(a, S, lb, bx, by, -fx, -fy, tau)
    return out, gap


@njit(cache=True)
def _advance(a, q, qd, act, u, dt, n_sub, tact, tdeact, kn, dn, mu, kt, klim, dlim,
             sp_link, sp_pos, sp_k, sp_d, sv_q, sv_kp, sv_kd, sv_target, sv_target_d, tau_ext):
    """Run ``n_sub`` substeps in place.  Returns a status code (0 ok, 1 diverged, 2 wrap)."""
    nm = act.shape[0]
    nq = q.shape[0]
    gx, gy = a.gravity[0], a.gravity[1]
    for _ in range(n_sub):
        for i in range(nm):
            act[i] = _activation_step(act[i], u[i], dt, tact, tdeact)
        th, thd, G, gam = expand_coordinates(a, q, qd)
        pose, S = link_kinematics(a, th)
        L, dL, err = muscle_path_kernel(a, pose, S)
        for i in range(nm):
            if err[i] != 0:
                return 2
        R = -(dL @ G)
        ldot = dL @ thd
        f = np.zeros(nm)
        kv = np.zeros(nm)
        for i in range(nm):
            lm = max((L[i] - a.m_lts[i]) / a.m_lopt[i], L_M_FLOOR)
            scale = a.m_lopt[i] * a.m_vmax[i]
            vm = ldot[i] / scale
            fl = _fl(lm)
            f[i] = a.m_fmax[i] * (fl * _fv(vm) * act[i] + _fp(lm))
            kv[i] = a.m_fmax[i] * act[i] * fl * _fv_slope(vm) / scale
        tau = R.T @ f + tau_ext
        _, _, tc = contact_kernel(a, pose, S, thd, kn, dn, mu, kt)
        _springs(a, pose, S, thd, sp_link, sp_pos, sp_k, sp_d, tc)
        tau += G.T @ tc
        for k in range(sv_q.shape[0]):
            j = sv_q[k]
            tau[j] += sv_kp[k] * (sv_target[k] - q[j]) + sv_kd[k] * (sv_target_d[k] - qd[j])
        for k in range(nq):
            if q[k] < a.q_lo[k]:
                tau[k] += klim * (a.q_lo[k] - q[k]) - dlim * qd[k]
            elif q[k] > a.q_hi[k]:
                tau[k] += klim * (a.q_hi[k] - q[k]) - dlim * qd[k]
            tau[k] -= a.q_damp[k] * qd[k]
        M = G.T @ crba(a, pose, S) @ G
        c = G.T @ rnea(a, pose, S, thd, gam, gx, gy)
        A = M + dt * (R.T @ (kv.reshape(-1, 1) * R))
        for k in range(nq):
            A[k, k] += dt * a.q_damp[k]
        rhs = dt * (tau - c)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(rhs))):
            return 1
        dqd = np.linalg.solve(A, rhs)
        for k in range(nq):
            qd[k] += dqd[k]
            q[k] += qd[k] * dt
        for k in range(nq):
            if not (np.isfinite(q[k]) and np.isfinite(qd[k])):
                return 1
    return 0


class _Compiled:
    """Attachment arrays resolved against a mechanism."""

    def __init__(self, mech: Mechanism, att: Optional[Attachments]):
        att = att or Attachments()
        names = [s.name for s in mech.model.segments]
        ns = len(att.springs)
        self.sp_link = np.zeros((ns, 2), dtype=np.int64)
        self.sp_pos = np.zeros((ns, 4))
        self.sp_k = np.zeros(ns)
        self.sp_d = np.zeros(ns)
        for k, s in enumerate(att.springs):
            for side, (seg, pos) in enumerate(((s.seg_a, s.pos_a), (s.seg_b, s.pos_b))):
                si = names.index(seg)
                off = mech.seg_off[si]
                c, sn = np.cos(off[2]), np.sin(off[2])
                self.sp_link[k, side] = mech.seg_link[si]
                self.sp_pos[k, 2 * side] = off[0] + c * pos[0] - sn * pos[1]
                self.sp_pos[k, 2 * side + 1] = off[1] + sn * pos[0] + c * pos[1]
            self.sp_k[k] = s.k
            self.sp_d[k] = s.d
        coords = list(mech.coord_names)
        self.sv_q = np.array([coords.index(s.joint) for s in att.servos], dtype=np.int64)
        self.sv_kp = np.array([s.kp for s in att.servos], dtype=float)
        self.sv_kd = np.array([s.kd for s in att.servos], dtype=float)


_ATT_CACHE: dict = {}


def _compiled_attachments(mech, att):
    key = (id(mech), att)
    hit = _ATT_CACHE.get(key)
    if hit is None:
        hit = _ATT_CACHE[key] = _Compiled(mech, att)
    return hit


def muscle_state(model, q, qd, act) -> MuscleState:
    mech = _mech(model)
    L, lm, vm, f, err = _muscle_state(mech.arr, np.ascontiguousarray(q, dtype=float),
                                      np.ascontiguousarray(qd, dtype=float),
                                      np.ascontiguousarray(act, dtype=float))
    if err.any():
        names = [mech.model.muscles[i].name for i in np.flatnonzero(err)]
        raise WrapError(f"path point inside wrap circle for muscle(s): {', '.join(names)}")
    return MuscleState(act=np.array(act, dtype=float), l_mt=L, l_m=lm, v_m=vm, f=f)


def spring_readout(model, q, qd, attachments: Optional[Attachments]):
    mech = _mech(model)
    ca = _compiled_attachments(mech, attachments)
    th, thd, G, _ = coordinates(mech, q, qd)
    pose, S = link_kinematics(mech.arr, th)
    return _springs(mech.arr, pose, S, thd, ca.sp_link, ca.sp_pos, ca.sp_k, ca.sp_d,
                    np.zeros(mech.n_links))


def initial_state(model, q=None, qd=None, act=None, t: float = 0.0) -> SimState:
    mech = _mech(model)
    q = np.zeros(mech.nq) if q is None else np.array(q, dtype=float)
    qd = np.zeros(mech.nq) if qd is None else np.array(qd, dtype=float)
    act = np.zeros(mech.nm) if act is None else np.array(act, dtype=float)
    return SimState(t=t, q=q, qd=qd, act=act, muscle=muscle_state(mech, q, qd, act))


def step(model, state: SimState, u, dt_control: float = 0.01, params: SimParams = SimParams(),
         attachments: Optional[Attachments] = None, servo_target=None, servo_target_d=None,
         tau_ext=None) -> SimState:
    """Advance one control period of ``dt_control`` seconds.

    Each of the ``params.n_sub`` substeps runs activation -> muscle paths and
    moment arms -> muscle force -> contact -> forward dynamics -> semi-implicit
    Euler.  ``u`` is the full muscle excitation vector in [0, 1].
    """
    mech = _mech(model)
    a = mech.arr
    u = np.ascontiguousarray(u, dtype=float)
    if u.shape != (mech.nm,):
        raise ValueError(f"excitation must have shape ({mech.nm},), got {u.shape}")
    if np.any(u < 0) or np.any(u > 1):
        raise ValueError("excitation must lie in [0, 1]")
    _check_mass(mech)
    ca = _compiled_attachments(mech, attachments)
    nsv = len(ca.sv_q)
    tgt = np.zeros(nsv) if servo_target is None else np.ascontiguousarray(servo_target, dtype=float)
    tgt_d = np.zeros(nsv) if servo_target_d is None else np.ascontiguousarray(servo_target_d, dtype=float)
    text = np.zeros(mech.nq) if tau_ext is None else np.ascontiguousarray(tau_ext, dtype=float)
    q = state.q.copy()
    qd = state.qd.copy()
    act = state.act.copy()
    cp = params.contact
    dt = dt_control / params.n_sub
    status = _advance(a, q, qd, act, u, dt, params.n_sub, params.activation.tau_act,
                      params.activation.tau_deact, cp.k_n, cp.d_n, cp.mu, cp.k_t,
                      params.limit_k, params.limit_d, ca.sp_link, ca.sp_pos, ca.sp_k, ca.sp_d,
                      ca.sv_q, ca.sv_kp, ca.sv_kd, tgt, tgt_d, text)
    if status == 1:
        raise SimulationDiverged(f"non-finite state at t={state.t + dt_control:.4f}")
    if status == 2:
        raise WrapError("path point entered a wrap circle")
    new = SimState(t=state.t + dt_control, q=q, qd=qd, act=act,
                   muscle=muscle_state(mech, q, qd, act))
    if len(a.c_link):
        new.contact = contact_forces(mech, q, qd, cp).forces
    if len(ca.sp_k):
        new.spring, new.spring_gap = spring_readout(mech, q, qd, attachments)
    return new


# ---------------------------------------------------------------------------
# trajectory log


def trajectory_header(nq: int, nm: int) -> list:
    return (["t"] + [f"q_{i}" for i in range(nq)] + [f"qd_{i}" for i in range(nq)]
            + [f"act_{i}" for i in range(nm)])


def write_trajectory(path, states: Sequence[SimState]):
    if not states:
        raise ValueError("no states to write")
    nq, nm = len(states[0].q), len(states[0].act)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_header(nq, nm))
        for s in states:
            w.writerow([repr(float(s.t))] + [repr(float(x)) for x in s.q]
                       + [repr(float(x)) for x in s.qd] + [repr(float(x)) for x in s.act])


def read_trajectory(path) -> dict:
    """Returns ``{"t": (T,), "q": (T, nq), "qd": (T, nq), "act": (T, nm)}``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    if body.size == 0:
        body = body.reshape(0, len(head))
    nq = sum(1 for h in head if h.startswith("q_"))
    nm = sum(1 for h in head if h.startswith("act_"))
    return {"t": body[:, 0], "q": body[:, 1:1 + nq], "qd": body[:, 1 + nq:1 + 2 * nq],
            "act": body[:, 1 + 2 * nq:1 + 2 * nq + nm]}
