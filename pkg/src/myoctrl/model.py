"""Musculoskeletal model schema, JSON (de)serialization and validation.

A model file is a UTF-8 JSON document with the top-level keys ``name``,
``version``, ``gravity``, ``segments``, ``joints``, ``muscles``, ``clusters``
and ``contact_spheres``.  Angles are radians, lengths meters, forces newtons.

Parsing collects every violation it can find before raising, so a broken file
is reported in one pass rather than one error at a time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence

PHANTOM_MIN_MASS = 1e-6
PHANTOM_MIN_INERTIA = 1e-9
DEFAULT_V_MAX = 10.0


class ModelError(ValueError):
    """Raised when a model file cannot be turned into a valid ModelSpec."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        msg = "; ".join(self.violations) if self.violations else "invalid model"
        super().__init__(msg)


class ModelSyntaxError(ModelError):
    pass


Vec = tuple  # tuple of floats, length 2 or 3


@dataclass(frozen=True)
class Pose:
    pos: Vec = (0.0, 0.0, 0.0)
    rot: float = 0.0


@dataclass(frozen=True)
class SegmentSpec:
    name: str
    mass: float
    inertia: float
    parent: Optional[str] = None
    attach_pose: Pose = field(default_factory=Pose)
    is_phantom: bool = False
    com: Vec = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Coupling:
    master_joint: str
    poly_coeffs: tuple

    def value(self, x: float) -> float:
        return sum(c * x**i for i, c in enumerate(self.poly_coeffs))


@dataclass(frozen=True)
class JointSpec:
    name: str
    kind: str
    axis: Vec
    range: tuple
    child: str
    coupling: Optional[Coupling] = None
    damping: float = 0.0
    locked: bool = False


@dataclass(frozen=True)
class PathPoint:
    segment: str
    local_pos: Vec


@dataclass(frozen=True)
class WrapCircle:
    segment: str
    center: Vec
    radius: float


@dataclass(frozen=True)
class MuscleSpec:
    name: str
    f_max: float
    l_opt: float
    l_ts: float
    path: tuple
    v_max: float = DEFAULT_V_MAX
    wrap: Optional[WrapCircle] = None
    cluster: Optional[str] = None


@dataclass(frozen=True)
class ClusterSpec:
    name: str
    members: tuple


@dataclass(frozen=True)
class ContactSphere:
    segment: str
    local_pos: Vec
    radius: float


@dataclass(frozen=True)
class ModelSpec:
    name: str
    segments: tuple
    joints: tuple
    muscles: tuple
    clusters: tuple = ()
    gravity: Vec = (0.0, -9.81, 0.0)
    contact_spheres: tuple = ()
    version: str = "1"

    # -- derived views -------------------------------------------------
    def segment(self, name: str) -> SegmentSpec:
        for s in self.segments:
            if s.name == name:
                return s
        raise KeyError(name)

    def joint(self, name: str) -> JointSpec:
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(name)

    @property
    def coordinate_joints(self) -> list:
        """Joints that carry a generalized coordinate (not coupled, not locked)."""
        return [j for j in self.joints if j.coupling is None and not j.locked]

    @property
    def coordinate_names(self) -> list:
        return [j.name for j in self.coordinate_joints]

    @property
    def dim_q(self) -> int:
        return len(self.coordinate_joints)

    @property
    def muscle_names(self) -> list:
        return [m.name for m in self.muscles]

    @property
    def independent_muscles(self) -> list:
        return [m.name for m in self.muscles if m.cluster is None]

    @property
    def action_dim(self) -> int:
        """Cluster-space action dimension: one slot per cluster plus one per free muscle."""
        return len(self.clusters) + len(self.independent_muscles)


# ---------------------------------------------------------------------------
# parsing


class _Reader:
    """Pulls typed fields out of decoded JSON while recording problems."""

    def __init__(self):
        self.errors: list[str] = []

    def get(self, obj: dict, key: str, where: str, default: Any = ..., kind=None):
        if not isinstance(obj, dict):
            self.errors.append(f"{where}: expected an object")
            return None
        if key not in obj:
            if default is ...:
                self.errors.append(f"{where}: missing field '{key}'")
                return None
            return default
        val = obj[key]
        if kind == "num":
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                self.errors.append(f"{where}: field '{key}' must be a number")
                return None
            return float(val)
        if kind == "str":
            if not isinstance(val, str):
                self.errors.append(f"{where}: field '{key}' must be a string")
                return None
        if kind == "vec":
            if (not isinstance(val, list) or len(val) not in (2, 3)
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val)):
                self.errors.append(f"{where}: field '{key}' must be a 2- or 3-vector of numbers")
                return None
            return tuple(float(v) for v in val)
        if kind == "list" and not isinstance(val, list):
            self.errors.append(f"{where}: field '{key}' must be a list")
            return None
        if kind == "bool" and not isinstance(val, bool):
            self.errors.append(f"{where}: field '{key}' must be a boolean")
            return None
        return val


def _decode(text) -> Any:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelSyntaxError([f"not UTF-8 at byte {exc.start}"]) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelSyntaxError(
            [f"syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None


def _pose(r: _Reader, obj, where) -> Pose:
    if obj is None:
        return Pose()
    pos = r.get(obj, "pos", where, (0.0, 0.0, 0.0), "vec")
    rot = r.get(obj, "rot", where, 0.0, "num")
    return Pose(pos if pos is not None else (0.0, 0.0, 0.0), rot if rot is not None else 0.0)


def parse_model(text) -> ModelSpec:
    """Parse model-file bytes or text into a validated :class:`ModelSpec`.

    Raises :class:`ModelError` listing every structural and invariant
    violation found.
    """
    doc = _decode(text)
    r = _Reader()
    if not isinstance(doc, dict):
        raise ModelSyntaxError(["top level must be a JSON object"])

    name = r.get(doc, "name", "model", kind="str")
    version = str(doc.get("version", "1"))
    gravity = r.get(doc, "gravity", "model", (0.0, -9.81, 0.0), "vec")

    segments = []
    for i, s in enumerate(r.get(doc, "segments", "model", kind="list") or []):
        where = f"segments[{i}]"
        nm = r.get(s, "name", where, kind="str")
        where = f"segment '{nm}'" if nm else where
        segments.append(SegmentSpec(
            name=nm,
            mass=r.get(s, "mass", where, kind="num"),
            inertia=r.get(s, "inertia", where, kind="num"),
            parent=r.get(s, "parent", where, None),
            attach_pose=_pose(r, r.get(s, "attach_pose", where, None), where),
            is_phantom=r.get(s, "is_phantom", where, False, "bool"),
            com=r.get(s, "com", where, (0.0, 0.0, 0.0), "vec"),
        ))

    joints = []
    for i, j in enumerate(r.get(doc, "joints", "model", kind="list") or []):
        where = f"joints[{i}]"
        nm = r.get(j, "name", where, kind="str")
        where = f"joint '{nm}'" if nm else where
        rng = r.get(j, "range", where, kind="list")
        if rng is not None and (len(rng) != 2 or not all(isinstance(v, (int, float)) for v in rng)):
            r.errors.append(f"{where}: range must be [lo, hi]")
            rng = None
        coupling = None
        cj = r.get(j, "coupling", where, None)
        if cj is not None:
            coeffs = r.get(cj, "poly_coeffs", where, kind="list")
            coupling = Coupling(
                master_joint=r.get(cj, "master_joint", where, kind="str"),
                poly_coeffs=tuple(float(c) for c in coeffs) if coeffs else (),
            )
        joints.append(JointSpec(
            name=nm,
            kind=r.get(j, "kind", where, kind="str"),
            axis=r.get(j, "axis", where, kind="vec"),
            range=tuple(float(v) for v in rng) if rng else None,
            child=r.get(j, "child", where, kind="str"),
            coupling=coupling,
            damping=r.get(j, "damping", where, 0.0, "num"),
            locked=r.get(j, "locked", where, False, "bool"),
        ))

    muscles = []
    for i, m in enumerate(r.get(doc, "muscles", "model", kind="list") or []):
        where = f"muscles[{i}]"
        nm = r.get(m, "name", where, kind="str")
        where = f"muscle '{nm}'" if nm else where
        path = []
        for k, p in enumerate(r.get(m, "path", where, kind="list") or []):
            path.append(PathPoint(r.get(p, "segment", f"{where} path[{k}]", kind="str"),
                                  r.get(p, "local_pos", f"{where} path[{k}]", kind="vec")))
        wrap = None
        wj = r.get(m, "wrap", where, None)
        if wj is not None:
            wrap = WrapCircle(r.get(wj, "segment", where, kind="str"),
                              r.get(wj, "center", where, kind="vec"),
                              r.get(wj, "radius", where, kind="num"))
        muscles.append(MuscleSpec(
            name=nm,
            f_max=r.get(m, "f_max", where, kind="num"),
            l_opt=r.get(m, "l_opt", where, kind="num"),
            l_ts=r.get(m, "l_ts", where, kind="num"),
            path=tuple(path),
            v_max=r.get(m, "v_max", where, DEFAULT_V_MAX, "num"),
            wrap=wrap,
            cluster=r.get(m, "cluster", where, None),
        ))

    clusters = []
    for i, c in enumerate(r.get(doc, "clusters", "model", [], "list") or []):
        where = f"clusters[{i}]"
        members = r.get(c, "members", where, kind="list") or []
        clusters.append(ClusterSpec(r.get(c, "name", where, kind="str"), tuple(members)))

    spheres = []
    for i, c in enumerate(r.get(doc, "contact_spheres", "model", [], "list") or []):
        where = f"contact_spheres[{i}]"
        spheres.append(ContactSphere(r.get(c, "segment", where, kind="str"),
                                     r.get(c, "local_pos", where, kind="vec"),
                                     r.get(c, "radius", where, kind="num")))

    if r.errors:
        raise ModelError(r.errors)

    model = ModelSpec(name=name, segments=tuple(segments), joints=tuple(joints),
                      muscles=tuple(muscles), clusters=tuple(clusters),
                      gravity=gravity, contact_spheres=tuple(spheres), version=version)
    problems = validate(model)
    if problems:
        raise ModelError(problems)
    return model


def load_model(path) -> ModelSpec:
    return parse_model(Path(path).read_bytes())


def shipped_model(name: str) -> ModelSpec:
    """Load one of the desk models bundled in ``myoctrl/data``."""
    data = resources.files("myoctrl") / "data" / f"{name}.json"
    return parse_model(data.read_bytes())


def shipped_path(filename: str) -> Path:
    return Path(str(resources.files("myoctrl") / "data" / filename))


SHIPPED_MODELS = ("pendulum1", "double_pendulum", "walker2d", "walker2d_exo", "walker2d_prosthetic")


# ---------------------------------------------------------------------------
# validation


def _norm(v) -> float:
    return math.sqrt(sum(x * x for x in v))


def validate(model: ModelSpec) -> list[str]:
    """Check every type invariant; returns the list of violations (empty if valid)."""
    out: list[str] = []

    def dupes(names, kind):
        seen = set()
        for n in names:
            if n in seen:
                out.append(f"duplicate {kind} name '{n}'")
            seen.add(n)

    seg_names = [s.name for s in model.segments]
    dupes(seg_names, "segment")
    dupes([j.name for j in model.joints], "joint")
    dupes([m.name for m in model.muscles], "muscle")
    dupes([c.name for c in model.clusters], "cluster")
    segs = {s.name: s for s in model.segments}
    joints = {j.name: j for j in model.joints}
    muscles = {m.name: m for m in model.muscles}

    if len(model.gravity) not in (2, 3) or not all(math.isfinite(g) for g in model.gravity):
        out.append("gravity must be a finite 2- or 3-vector")

    roots = [s.name for s in model.segments if s.parent is None]
    if len(roots) != 1:
        out.append(f"model must have exactly one root segment, found {len(roots)}: {roots}")
    for s in model.segments:
        if s.is_phantom:
            if not s.mass >= PHANTOM_MIN_MASS:
                out.append(f"segment '{s.name}': phantom mass must be >= {PHANTOM_MIN_MASS} kg")
        elif not s.mass > 0:
            out.append(f"segment '{s.name}': mass must be > 0")
        if not s.inertia >= 0:
            out.append(f"segment '{s.name}': inertia must be >= 0")
        if s.parent is not None and s.parent not in segs:
            out.append(f"segment '{s.name}': parent '{s.parent}' does not exist")
    # tree check: walking up from any segment must terminate at the root
    for s in model.segments:
        seen = {s.name}
        cur = s
        while cur.parent is not None and cur.parent in segs:
            if cur.parent in seen:
                out.append(f"segment '{s.name}': parent chain contains a cycle")
                break
            seen.add(cur.parent)
            cur = segs[cur.parent]

    for j in model.joints:
        w = f"joint '{j.name}'"
        if j.kind not in ("hinge", "slide"):
            out.append(f"{w}: kind must be 'hinge' or 'slide', got '{j.kind}'")
        if abs(_norm(j.axis) - 1.0) > 1e-12:
            out.append(f"{w}: axis must be a unit vector")
        lo, hi = j.range
        if not lo < hi:
            out.append(f"{w}: range lo ({lo}) must be < hi ({hi})")
        if j.child not in segs:
            out.append(f"{w}: child segment '{j.child}' does not exist")
        if not j.damping >= 0:
            out.append(f"{w}: damping must be >= 0")
        if j.coupling is not None:
            c = j.coupling
            if j.locked:
                out.append(f"{w}: a joint cannot be both locked and coupled")
            if c.master_joint == j.name:
                out.append(f"{w}: joint cannot be coupled to itself")
            elif c.master_joint not in joints:
                out.append(f"{w}: master joint '{c.master_joint}' does not exist")
            else:
                m = joints[c.master_joint]
                if m.coupling is not None or m.locked:
                    out.append(f"{w}: master joint '{m.name}' must be an independent coordinate")
            if not c.poly_coeffs:
                out.append(f"{w}: coupling needs at least one polynomial coefficient")

    for m in model.muscles:
        w = f"muscle '{m.name}'"
        if not m.f_max > 0:
            out.append(f"{w}: f_max must be > 0")
        if not m.l_opt > 0:
            out.append(f"{w}: l_opt must be > 0")
        if not m.l_ts >= 0:
            out.append(f"{w}: l_ts must be >= 0")
        if not m.v_max > 0:
            out.append(f"{w}: v_max must be > 0")
        if len(m.path) < 2:
            out.append(f"{w}: path needs at least 2 points, has {len(m.path)}")
        else:
            if m.path[0].segment == m.path[-1].segment:
                out.append(f"{w}: first and last path points must be on different segments")
        for p in m.path:
            if p.segment not in segs:
                out.append(f"{w}: path segment '{p.segment}' does not exist")
        if m.wrap is not None:
            if m.wrap.segment not in segs:
                out.append(f"{w}: wrap segment '{m.wrap.segment}' does not exist")
            if not m.wrap.radius > 0:
                out.append(f"{w}: wrap radius must be > 0")

    owner: dict[str, str] = {}
    for c in model.clusters:
        for mem in c.members:
            if mem not in muscles:
                out.append(f"cluster '{c.name}': member '{mem}' does not exist")
                continue
            if mem in owner:
                out.append(f"clusters '{owner[mem]}' and '{c.name}' share muscle '{mem}'")
            else:
                owner[mem] = c.name
    cluster_names = {c.name for c in model.clusters}
    for m in model.muscles:
        if m.cluster is not None:
            if m.cluster not in cluster_names:
                out.append(f"muscle '{m.name}': cluster '{m.cluster}' does not exist")
            elif owner.get(m.name) != m.cluster:
                out.append(f"muscle '{m.name}': not listed as a member of cluster '{m.cluster}'")
        elif m.name in owner:
            out.append(f"muscle '{m.name}': member of cluster '{owner[m.name]}' "
                       "but has no cluster id")

    for k, c in enumerate(model.contact_spheres):
        if c.segment not in segs:
            out.append(f"contact_spheres[{k}]: segment '{c.segment}' does not exist")
        if not c.radius > 0:
            out.append(f"contact_spheres[{k}]: radius must be > 0")
    return out


# ---------------------------------------------------------------------------
# serialization


def _vec(v):
    return [float(x) for x in v]


def model_to_dict(model: ModelSpec) -> dict:
    segs = []
    for s in model.segments:
        segs.append({
            "name": s.name, "mass": s.mass, "inertia": s.inertia, "parent": s.parent,
            "attach_pose": {"pos": _vec(s.attach_pose.pos), "rot": s.attach_pose.rot},
            "is_phantom": s.is_phantom, "com": _vec(s.com),
        })
    joints = []
    for j in model.joints:
        d = {"name": j.name, "kind": j.kind, "axis": _vec(j.axis), "range": _vec(j.range),
             "child": j.child, "damping": j.damping, "locked": j.locked, "coupling": None}
        if j.coupling is not None:
            d["coupling"] = {"master_joint": j.coupling.master_joint,
                             "poly_coeffs": _vec(j.coupling.poly_coeffs)}
        joints.append(d)
    muscles = []
    for m in model.muscles:
        d = {"name": m.name, "f_max": m.f_max, "l_opt": m.l_opt, "l_ts": m.l_ts,
             "v_max": m.v_max, "cluster": m.cluster,
             "path": [{"segment": p.segment, "local_pos": _vec(p.local_pos)} for p in m.path],
             "wrap": None}
        if m.wrap is not None:
            d["wrap"] = {"segment": m.wrap.segment, "center": _vec(m.wrap.center),
                         "radius": m.wrap.radius}
        muscles.append(d)
    return {
        "name": model.name,
        "version": model.version,
        "gravity": _vec(model.gravity),
        "segments": segs,
        "joints": joints,
        "muscles": muscles,
        "clusters": [{"name": c.name, "members": list(c.members)} for c in model.clusters],
        "contact_spheres": [{"segment": c.segment, "local_pos": _vec(c.local_pos),
                             "radius": c.radius} for c in model.contact_spheres],
    }


def serialize_model(model: ModelSpec) -> bytes:
    return (json.dumps(model_to_dict(model), indent=1) + "\n").encode("utf-8")
