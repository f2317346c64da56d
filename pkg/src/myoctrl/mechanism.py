"""Planar articulated-body kernels.

A :class:`ModelSpec` is compiled into flat arrays ("links") that numba kernels
can walk.  Every joint becomes one link; a segment with several joints is the
last link of its chain and the intermediate links are massless frames.
Segments without joints are welded to their parent's link.

All spatial quantities are planar and expressed in the world frame about the
world origin: motion vectors are ``(omega, vx, vy)`` and force vectors
``(moment_z, fx, fy)``.  Coupled and locked joints are eliminated: the full
joint vector ``theta = g(q)`` with ``theta_dot = G q_dot`` and
``theta_ddot = G q_ddot + gamma``.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .model import PHANTOM_MIN_INERTIA, PHANTOM_MIN_MASS, ModelSpec

HINGE, SLIDE = 0, 1
FREE, COUPLED, LOCKED = 0, 1, 2
NO_WRAP = -2
PLANAR_TOL = 1e-9


class PlanarError(ValueError):
    pass


class SingularMassError(RuntimeError):
    pass


class WrapError(RuntimeError):
    pass


Arrays = namedtuple("Arrays", [
    "parent", "jtype", "axis", "fixed",          # link structure
    "mass", "com", "inertia",                    # link mass properties (link frame)
    "jmode", "jq", "jpoly", "jconst",            # coordinate map theta = g(q)
    "q_link", "q_lo", "q_hi", "q_damp",          # per generalized coordinate
    "m_fmax", "m_lopt", "m_lts", "m_vmax",       # muscles
    "m_start", "pt_link", "pt_pos",
    "w_link", "w_center", "w_radius",
    "c_link", "c_pos", "c_radius",               # contact spheres
    "gravity",
])


@dataclass(frozen=True, eq=False)
class Mechanism:
    """Compiled model: numba-ready arrays plus the name bookkeeping."""
    model: ModelSpec
    arr: Arrays
    link_names: tuple       # joint name per link
    coord_names: tuple      # q ordering (model joint order)
    seg_link: np.ndarray    # link each segment rides on (-1 = world)
    seg_off: np.ndarray     # segment frame in that link frame (x, y, phi)
    coord_real_mass: np.ndarray  # non-phantom mass moved by each coordinate

    @property
    def n_links(self) -> int:
        return len(self.link_names)

    @property
    def nq(self) -> int:
        return len(self.coord_names)

    @property
    def nm(self) -> int:
        return len(self.arr.m_fmax)


def _compose(a, b):
    c, s = math.cos(a[2]), math.sin(a[2])
    return (a[0] + c * b[0] - s * b[1], a[1] + s * b[0] + c * b[1], a[2] + b[2])


def _apply(pose, p):
    c, s = math.cos(pose[2]), math.sin(pose[2])
    return (pose[0] + c * p[0] - s * p[1], pose[1] + s * p[0] + c * p[1])


def _planar_axis(j):
    ax = tuple(j.axis) + (0.0,) * (3 - len(j.axis))
    if j.kind == "hinge":
        if abs(ax[0]) > PLANAR_TOL or abs(ax[1]) > PLANAR_TOL:
            raise PlanarError(f"joint '{j.name}': hinge axis must be +/-z for planar dynamics")
        return (math.copysign(1.0, ax[2]), 0.0)
    if abs(ax[2]) > PLANAR_TOL:
        raise PlanarError(f"joint '{j.name}': slide axis must lie in the x-y plane")
    return (ax[0], ax[1])


@lru_cache(maxsize=64)
def compile_model(model: ModelSpec) -> Mechanism:
    segs = {s.name: s for s in model.segments}
    children: dict = {}
    root = None
    for s in model.segments:
        if s.parent is None:
            root = s.name
        else:
            children.setdefault(s.parent, []).append(s.name)
    order = []
    stack = [root]
    while stack:
        name = stack.pop(0)
        order.append(name)
        stack.extend(children.get(name, []))

    joints_of: dict = {}
    for j in model.joints:
        joints_of.setdefault(j.child, []).append(j)

    link_names, parent, jtype, axis, fixed = [], [], [], [], []
    seg_link, seg_off = {}, {}
    for name in order:
        s = segs[name]
        attach = (s.attach_pose.pos[0], s.attach_pose.pos[1], s.attach_pose.rot)
        if s.parent is None:
            base_link, base_off = -1, (0.0, 0.0, 0.0)
        else:
            base_link, base_off = seg_link[s.parent], seg_off[s.parent]
        frame = _compose(base_off, attach)
        js = joints_of.get(name, [])
        if not js:
            seg_link[name], seg_off[name] = base_link, frame
            continue
        prev = base_link
        for k, j in enumerate(js):
            link_names.append(j.name)
            parent.append(prev)
            jtype.append(HINGE if j.kind == "hinge" else SLIDE)
            axis.append(_planar_axis(j))
            fixed.append(frame if k == 0 else (0.0, 0.0, 0.0))
            prev = len(link_names) - 1
        seg_link[name], seg_off[name] = prev, (0.0, 0.0, 0.0)

    n = len(link_names)
    lidx = {nm: i for i, nm in enumerate(link_names)}

    # lump segment mass properties onto links
    mass = np.zeros(n)
    com = np.zeros((n, 2))
    inertia = np.zeros(n)
    bodies: dict = {i: [] for i in range(n)}
    real = np.zeros(n)
    for s in model.segments:
        li = seg_link[s.name]
        if li < 0:
            continue
        m = max(s.mass, PHANTOM_MIN_MASS) if s.is_phantom else s.mass
        inr = max(s.inertia, PHANTOM_MIN_INERTIA) if s.is_phantom else s.inertia
        c = _apply(seg_off[s.name], s.com[:2])
        bodies[li].append((m, c, inr))
        if not s.is_phantom:
            real[li] += s.mass
    for i, items in bodies.items():
        if not items:
            continue
        mt = sum(b[0] for b in items)
        cx = sum(b[0] * b[1][0] for b in items) / mt
        cy = sum(b[0] * b[1][1] for b in items) / mt
        it = sum(b[2] + b[0] * ((b[1][0] - cx) ** 2 + (b[1][1] - cy) ** 2) for b in items)
        mass[i], com[i], inertia[i] = mt, (cx, cy), it

    coords = model.coordinate_joints
    coord_names = tuple(j.name for j in coords)
    qidx = {nm: k for k, nm in enumerate(coord_names)}
    jmode = np.zeros(n, dtype=np.int64)
    jq = np.full(n, -1, dtype=np.int64)
    deg = max([len(j.coupling.poly_coeffs) for j in model.joints if j.coupling] + [1])
    jpoly = np.zeros((n, deg))
    jconst = np.zeros(n)
    for j in model.joints:
        i = lidx[j.name]
        if j.coupling is not None:
            jmode[i] = COUPLED
            jq[i] = qidx[j.coupling.master_joint]
            jpoly[i, :len(j.coupling.poly_coeffs)] = j.coupling.poly_coeffs
        elif j.locked:
            jmode[i] = LOCKED
            jconst[i] = min(max(0.0, j.range[0]), j.range[1])
        else:
            jq[i] = qidx[j.name]
    q_link = np.array([lidx[nm] for nm in coord_names], dtype=np.int64)
    q_lo = np.array([j.range[0] for j in coords], dtype=float)
    q_hi = np.array([j.range[1] for j in coords], dtype=float)
    q_damp = np.array([j.damping for j in coords], dtype=float)

    # non-phantom mass moved by each coordinate (its links' subtrees)
    sub = real.copy()
    for i in range(n - 1, -1, -1):
        if parent[i] >= 0:
            sub[parent[i]] += sub[i]
    coord_real = np.zeros(len(coords))
    for i in range(n):
        if jmode[i] != LOCKED and jq[i] >= 0:
            coord_real[jq[i]] = max(coord_real[jq[i]], sub[i])

    mus = model.muscles
    m_start = [0]
    pt_link, pt_pos = [], []
    w_link, w_center, w_radius = [], [], []
    for m in mus:
        for p in m.path:
            pt_link.append(seg_link[p.segment])
            pt_pos.append(_apply(seg_off[p.segment], p.local_pos[:2]))
        m_start.append(len(pt_link))
        if m.wrap is None:
            w_link.append(NO_WRAP)
            w_center.append((0.0, 0.0))
            w_radius.append(0.0)
        else:
            w_link.append(seg_link[m.wrap.segment])
            w_center.append(_apply(seg_off[m.wrap.segment], m.wrap.center[:2]))
            w_radius.append(m.wrap.radius)

    sph = model.contact_spheres
    arr = Arrays(
        parent=np.array(parent, dtype=np.int64),
        jtype=np.array(jtype, dtype=np.int64),
        axis=np.array(axis, dtype=float).reshape(n, 2),
        fixed=np.array(fixed, dtype=float).reshape(n, 3),
        mass=mass, com=com, inertia=inertia,
        jmode=jmode, jq=jq, jpoly=jpoly, jconst=jconst,
        q_link=q_link, q_lo=q_lo, q_hi=q_hi, q_damp=q_damp,
        m_fmax=np.array([m.f_max for m in mus], dtype=float),
        m_lopt=np.array([m.l_opt for m in mus], dtype=float),
        m_lts=np.array([m.l_ts for m in mus], dtype=float),
        m_vmax=np.array([m.v_max for m in mus], dtype=float),
        m_start=np.array(m_start, dtype=np.int64),
        pt_link=np.array(pt_link, dtype=np.int64),
        pt_pos=np.array(pt_pos, dtype=float).reshape(len(pt_link), 2),
        w_link=np.array(w_link, dtype=np.int64),
        w_center=np.array(w_center, dtype=float).reshape(len(mus), 2),
        w_radius=np.array(w_radius, dtype=float),
        c_link=np.array([seg_link[c.segment] for c in sph], dtype=np.int64),
        c_pos=np.array([_apply(seg_off[c.segment], c.local_pos[:2]) for c in sph],
                       dtype=float).reshape(len(sph), 2),
        c_radius=np.array([c.radius for c in sph], dtype=float),
        gravity=np.array(model.gravity[:2], dtype=float),
    )
    return Mechanism(
        model=model, arr=arr, link_names=tuple(link_names), coord_names=coord_names,
        seg_link=np.array([seg_link[s.name] for s in model.segments], dtype=np.int64),
        seg_off=np.array([seg_off[s.name] for s in model.segments], dtype=float).reshape(-1, 3),
        coord_real_mass=coord_real,
    )


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def expand_coordinates(a, q, qd):
    """theta, theta_dot, G (n x nq) and gamma for the current generalized state."""
    n = a.parent.shape[0]
    nq = q.shape[0]
    th = np.zeros(n)
    thd = np.zeros(n)
    G = np.zeros((n, nq))
    gam = np.zeros(n)
    for i in range(n):
        mode = a.jmode[i]
        if mode == FREE:
            k = a.jq[i]
            th[i] = q[k]
            thd[i] = qd[k]
            G[i, k] = 1.0
        elif mode == LOCKED:
            th[i] = a.jconst[i]
        else:
            k = a.jq[i]
            x = q[k]
            val = 0.0
            d1 = 0.0
            d2 = 0.0
            for p in range(a.jpoly.shape[1]):
                c = a.jpoly[i, p]
                val += c * x ** p
                if p >= 1:
                    d1 += p * c * x ** (p - 1)
                if p >= 2:
                    d2 += p * (p - 1) * c * x ** (p - 2)
            th[i] = val
            thd[i] = d1 * qd[k]
            G[i, k] = d1
            gam[i] = d2 * qd[k] * qd[k]
    return th, thd, G, gam


@njit(cache=True)
def link_kinematics(a, th):
    """World pose (x, y, phi) of each link frame and each joint's motion vector S."""
    n = a.parent.shape[0]
    pose = np.zeros((n, 3))
    S = np.zeros((n, 3))
    for i in range(n):
        p = a.parent[i]
        bx, by, bphi = 0.0, 0.0, 0.0
        if p >= 0:
            bx, by, bphi = pose[p, 0], pose[p, 1], pose[p, 2]
        c, s = math.cos(bphi), math.sin(bphi)
        fx, fy, fphi = a.fixed[i, 0], a.fixed[i, 1], a.fixed[i, 2]
        ox = bx + c * fx - s * fy
        oy = by + s * fx + c * fy
        ophi = bphi + fphi
        if a.jtype[i] == HINGE:
            sig = a.axis[i, 0]
            pose[i, 0] = ox
            pose[i, 1] = oy
            pose[i, 2] = ophi + sig * th[i]
            S[i, 0] = sig
            S[i, 1] = sig * oy
            S[i, 2] = -sig * ox
        else:
            c2, s2 = math.cos(ophi), math.sin(ophi)
            awx = c2 * a.axis[i, 0] - s2 * a.axis[i, 1]
            awy = s2 * a.axis[i, 0] + c2 * a.axis[i, 1]
            pose[i, 0] = ox + th[i] * awx
            pose[i, 1] = oy + th[i] * awy
            pose[i, 2] = ophi
            S[i, 1] = awx
            S[i, 2] = awy
    return pose, S


@njit(cache=True)
def world_point(pose, link, lx, ly):
    if link < 0:
        return lx, ly
    c, s = math.cos(pose[link, 2]), math.sin(pose[link, 2])
    return pose[link, 0] + c * lx - s * ly, pose[link, 1] + s * lx + c * ly


@njit(cache=True)
def add_point_jacobian(a, S, link, px, py, gx, gy, out):
    """out[j] += (gx, gy) . d p / d theta_j for a world point p rigidly on ``link``."""
    j = link
    while j >= 0:
        out[j] += gx * (S[j, 1] - S[j, 0] * py) + gy * (S[j, 2] + S[j, 0] * px)
        j = a.parent[j]


@njit(cache=True)
def point_velocity(a, S, thd, link, px, py):
    vx = 0.0
    vy = 0.0
    j = link
    while j >= 0:
        vx += (S[j, 1] - S[j, 0] * py) * thd[j]
        vy += (S[j, 2] + S[j, 0] * px) * thd[j]
        j = a.parent[j]
    return vx, vy


@njit(cache=True)
def _body_inertia(a, pose, i):
    I = np.zeros((3, 3))
    m = a.mass[i]
    if m == 0.0 and a.inertia[i] == 0.0:
        return I
    cx, cy = world_point(pose, i, a.com[i, 0], a.com[i, 1])
    I[0, 0] = a.inertia[i] + m * (cx * cx + cy * cy)
    I[0, 1] = -m * cy
    I[1, 0] = -m * cy
    I[0, 2] = m * cx
    I[2, 0] = m * cx
    I[1, 1] = m
    I[2, 2] = m
    return I


@njit(cache=True)
def crba(a, pose, S):
    """Joint-space mass matrix by the composite-rigid-body algorithm."""
    n = a.parent.shape[0]
    Ic = np.zeros((n, 3, 3))
    for i in range(n):
        Ic[i] = _body_inertia(a, pose, i)
    for i in range(n - 1, -1, -1):
        p = a.parent[i]
        if p >= 0:
            Ic[p] += Ic[i]
    M = np.zeros((n, n))
    for i in range(n):
        F = Ic[i] @ S[i]
        M[i, i] = S[i] @ F
        j = a.parent[i]
        while j >= 0:
            v = S[j] @ F
            M[i, j] = v
            M[j, i] = v
            j = a.parent[j]
    return M


@njit(cache=True)
def _crm(m, mp):
    # planar motion cross product m x mp
    return np.array([0.0, -m[0] * mp[2] + mp[0] * m[2], m[0] * mp[1] - mp[0] * m[1]])


@njit(cache=True)
def _crf(m, f):
    # planar force cross product m x* f
    return np.array([m[1] * f[2] - m[2] * f[1], -m[0] * f[2], m[0] * f[1]])


@njit(cache=True)
def rnea(a, pose, S, thd, thdd, gx, gy):
    """Inverse dynamics (recursive Newton-Euler) in the world frame."""
    n = a.parent.shape[0]
    v = np.zeros((n, 3))
    acc = np.zeros((n, 3))
    f = np.zeros((n, 3))
    a0 = np.array([0.0, -gx, -gy])
    for i in range(n):
        p = a.parent[i]
        vp = np.zeros(3)
        ap = a0
        if p >= 0:
            vp = v[p]
            ap = acc[p]
        vJ = S[i] * thd[i]
        v[i] = vp + vJ
        acc[i] = ap + S[i] * thdd[i] + _crm(v[i], vJ)
        I = _body_inertia(a, pose, i)
        f[i] = I @ acc[i] + _crf(v[i], I @ v[i])
    tau = np.zeros(n)
    for i in range(n - 1, -1, -1):
        tau[i] = S[i] @ f[i]
        p = a.parent[i]
        if p >= 0:
            f[p] += f[i]
    return tau


@njit(cache=True)
def _wrap_segment(ax, ay, bx, by, cx, cy, r):
    """Length of the taut path a->b around circle (c, r) and its endpoint gradients.

    Returns (length, gax, gay, gbx, gby, status) with status 0 = straight,
    1 = wrapped, -1 = an endpoint lies inside the circle.
    """
    dx, dy = bx - ax, by - ay
    L = math.sqrt(dx * dx + dy * dy)
    pax, pay = ax - cx, ay - cy
    pbx, pby = bx - cx, by - cy
    da = math.sqrt(pax * pax + pay * pay)
    db = math.sqrt(pbx * pbx + pby * pby)
    # closest point of the segment to the center
    t = 0.0
    if L > 0.0:
        t = -(pax * dx + pay * dy) / (L * L)
        t = min(max(t, 0.0), 1.0)
    qx, qy = pax + t * dx, pay + t * dy
    dist = math.sqrt(qx * qx + qy * qy)
    if dist >= r or L == 0.0:
        if L == 0.0:
            return 0.0, 0.0, 0.0, 0.0, 0.0, 0
        ux, uy = dx / L, dy / L
        return L, -ux, -uy, ux, uy, 0
    if da <= r or db <= r:
        return L, 0.0, 0.0, 0.0, 0.0, -1
    # atan2 forms stay accurate where acos loses half the digits
    delta = math.atan2(abs(pax * pby - pay * pbx), pax * pbx + pay * pby)
    ta = math.sqrt(da * da - r * r)
    tb = math.sqrt(db * db - r * r)
    ba = math.atan2(ta, r)
    bb = math.atan2(tb, r)
    arc = delta - ba - bb
    if arc <= 0.0:
        ux, uy = dx / L, dy / L
        return L, -ux, -uy, ux, uy, 0
    sgn = 1.0 if pax * pby - pay * pbx >= 0.0 else -1.0
    # tangent points: rotate the radial unit vectors toward each other
    ang_a = math.atan2(pay, pax) + sgn * ba
    ang_b = math.atan2(pby, pbx) - sgn * bb
    tax, tay = cx + r * math.cos(ang_a), cy + r * math.sin(ang_a)
    tbx, tby = cx + r * math.cos(ang_b), cy + r * math.sin(ang_b)
    return (ta + tb + r * arc, (ax - tax) / ta, (ay - tay) / ta,
            (bx - tbx) / tb, (by - tby) / tb, 1)


@njit(cache=True)
def muscle_path_kernel(a, pose, S):
    """Path lengths, d l / d theta (nm x n) and a per-muscle error flag."""
    nm = a.m_fmax.shape[0]
    n = a.parent.shape[0]
    L = np.zeros(nm)
    dL = np.zeros((nm, n))
    err = np.zeros(nm, dtype=np.int64)
    for i in range(nm):
        wl = a.w_link[i]
        cx, cy = 0.0, 0.0
        if wl != NO_WRAP:
            cx, cy = world_point(pose, wl, a.w_center[i, 0], a.w_center[i, 1])
        for k in range(a.m_start[i], a.m_start[i + 1] - 1):
            la, lb = a.pt_link[k], a.pt_link[k + 1]
            ax, ay = world_point(pose, la, a.pt_pos[k, 0], a.pt_pos[k, 1])
            bx, by = world_point(pose, lb, a.pt_pos[k + 1, 0], a.pt_pos[k + 1, 1])
            if wl != NO_WRAP:
                seg, gax, gay, gbx, gby, st = _wrap_segment(ax, ay, bx, by, cx, cy,
                                                            a.w_radius[i])
                if st < 0:
                    err[i] = 1
            else:
                dx, dy = bx - ax, by - ay
                seg = math.sqrt(dx * dx + dy * dy)
                st = 0
                gax, gay, gbx, gby = 0.0, 0.0, 0.0, 0.0
                if seg > 0.0:
                    gbx, gby = dx / seg, dy / seg
                    gax, gay = -gbx, -gby
            L[i] += seg
            add_point_jacobian(a, S, la, ax, ay, gax, gay, dL[i])
            add_point_jacobian(a, S, lb, bx, by, gbx, gby, dL[i])
            if st == 1:
                # the circle moves with its own link; translation invariance
                add_point_jacobian(a, S, wl, cx, cy, -(gax + gbx), -(gay + gby), dL[i])
    return L, dL, err


@njit(cache=True)
def contact_kernel(a, pose, S, thd, kn, dn, mu, kt):
    """Penalty ground contact (plane y = 0).

    Returns per-sphere (f_t, f_n), the world contact points, and the
    generalized force on theta.
    """
    nc = a.c_link.shape[0]
    n = a.parent.shape[0]
    forces = np.zeros((nc, 2))
    points = np.zeros((nc, 2))
    tau = np.zeros(n)
    for k in range(nc):
        li = a.c_link[k]
        cx, cy = world_point(pose, li, a.c_pos[k, 0], a.c_pos[k, 1])
        px, py = cx, cy - a.c_radius[k]
        points[k, 0] = px
        points[k, 1] = py
        pen = -py
        if pen <= 0.0:
            continue
        vx, vy = point_velocity(a, S, thd, li, px, py)
        fn = kn * pen - dn * vy
        if fn <= 0.0:
            continue
        ft = -min(kt * abs(vx), mu * fn)
        if vx < 0.0:
            ft = -ft
        elif vx == 0.0:
            ft = 0.0
        forces[k, 0] = ft
        forces[k, 1] = fn
        add_point_jacobian(a, S, li, px, py, ft, fn, tau)
    return forces, points, tau


# ---------------------------------------------------------------------------
# python-facing helpers


def coordinates(mech: Mechanism, q, qd=None):
    q = np.ascontiguousarray(q, dtype=float)
    qd = np.zeros_like(q) if qd is None else np.ascontiguousarray(qd, dtype=float)
    if q.shape != (mech.nq,):
        raise ValueError(f"q must have shape ({mech.nq},), got {q.shape}")
    return expand_coordinates(mech.arr, q, qd)


def muscle_paths(mech: Mechanism, q):
    """Path lengths and moment arms ``R = -dl/dq`` at ``q``."""
    th, _, G, _ = coordinates(mech, q)
    pose, S = link_kinematics(mech.arr, th)
    L, dL, err = muscle_path_kernel(mech.arr, pose, S)
    if err.any():
        names = [mech.model.muscles[i].name for i in np.flatnonzero(err)]
        raise WrapError(f"path point inside wrap circle for muscle(s): {', '.join(names)}")
    return L, -(dL @ G)


def segment_poses(mech: Mechanism, q) -> np.ndarray:
    """World pose (x, y, phi) of every segment frame, in model segment order."""
    th, _, _, _ = coordinates(mech, q)
    pose, _ = link_kinematics(mech.arr, th)
    out = np.zeros((len(mech.model.segments), 3))
    for k in range(len(out)):
        li = mech.seg_link[k]
        base = (0.0, 0.0, 0.0) if li < 0 else tuple(pose[li])
        out[k] = _compose(base, tuple(mech.seg_off[k]))
    return out


def segment_com_world(mech: Mechanism, q) -> np.ndarray:
    poses = segment_poses(mech, q)
    return np.array([_apply(tuple(p), s.com[:2]) for p, s in zip(poses, mech.model.segments)])
