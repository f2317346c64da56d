"""Generators for the shipped desk models and synthetic reference gaits.

Run ``python -m myoctrl.assets`` to rewrite the files under ``myoctrl/data``.
Muscle optimal fiber and tendon slack lengths are derived from each path's
length range over the joint ranges, so fibers stay in ``l_m in [0.6, 1.3]``.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .model import (ClusterSpec, ContactSphere, JointSpec, ModelSpec, MuscleSpec,
                    PathPoint, Pose, SegmentSpec, WrapCircle, serialize_model)

DATA_DIR = Path(__file__).parent / "data"

GAIT_PERIOD = 1.2
GAIT_SPEED = 1.2        # m/s forward drift of root_x in the synthetic gait
GAIT_FRAMES = 120
STAND_HEIGHT = 0.98     # hip height with straight legs and flat feet
LM_LO, LM_HI = 0.6, 1.3

THIGH, SHANK, ANKLE_H = 0.45, 0.45, 0.08


def _seg(name, mass, inertia, parent=None, pos=(0.0, 0.0), com=(0.0, 0.0), phantom=False):
    return SegmentSpec(name=name, mass=mass, inertia=inertia, parent=parent,
                       attach_pose=Pose((pos[0], pos[1], 0.0), 0.0), is_phantom=phantom,
                       com=(com[0], com[1], 0.0))


def _hinge(name, child, lo, hi, sign=1.0, damping=0.0, coupling=None):
    return JointSpec(name=name, kind="hinge", axis=(0.0, 0.0, sign), range=(lo, hi),
                     child=child, damping=damping, coupling=coupling)


def _slide(name, child, axis, lo, hi):
    return JointSpec(name=name, kind="slide", axis=(axis[0], axis[1], 0.0), range=(lo, hi),
                     child=child)


def _mus(name, f_max, pts, wrap=None, cluster=None):
    path = tuple(PathPoint(s, (p[0], p[1], 0.0)) for s, p in pts)
    w = None if wrap is None else WrapCircle(wrap[0], (wrap[1][0], wrap[1][1], 0.0), wrap[2])
    # l_opt and l_ts are placeholders until _fit_lengths runs
    return MuscleSpec(name=name, f_max=f_max, l_opt=1.0, l_ts=0.0, path=path, wrap=w,
                      cluster=cluster)


def _fit_lengths(model: ModelSpec, n_samples: int = 3000, seed: int = 0) -> ModelSpec:
    """Set l_opt and l_ts so every fiber spans [LM_LO, LM_HI] over the joint ranges."""
    from dataclasses import replace

    from .mechanism import compile_model, muscle_paths

    if not model.muscles:
        return model
    mech = compile_model(model)
    rng = np.random.default_rng(seed)
    lo = np.array([j.range[0] for j in model.coordinate_joints])
    hi = np.array([j.range[1] for j in model.coordinate_joints])
    # root translations do not change path lengths; keep them finite
    lo, hi = np.maximum(lo, -1.0), np.minimum(hi, 1.0)
    Ls = np.array([muscle_paths(mech, lo + (hi - lo) * rng.random(len(lo)))[0]
                   for _ in range(n_samples)])
    lmin, lmax = Ls.min(axis=0), Ls.max(axis=0)
    out = []
    for m, a, b in zip(model.muscles, lmin, lmax):
        l_opt = max((b - a) / (LM_HI - LM_LO), 0.02)
        l_ts = max(b - LM_HI * l_opt, 0.0)
        out.append(replace(m, l_opt=round(float(l_opt), 6), l_ts=round(float(l_ts), 6)))
    return replace(model, muscles=tuple(out))


# ---------------------------------------------------------------------------
# models


def pendulum1() -> ModelSpec:
    """One hinged arm hanging from a fixed base, driven by a flexor/extensor pair."""
    segs = (
        _seg("base", 1.0, 0.01),
        _seg("arm", 1.0, 1.0 * 0.5 ** 2 / 12, parent="base", com=(0.0, -0.25)),
    )
    joints = (_hinge("swing", "arm", -1.2, 1.6, damping=0.05),)
    muscles = (
        _mus("flexor", 100.0, [("base", (0.15, 0.0)), ("arm", (0.0, -0.3))]),
        _mus("extensor", 100.0, [("base", (-0.15, 0.0)), ("arm", (0.0, -0.3))]),
    )
    return _fit_lengths(ModelSpec("pendulum1", segs, joints, muscles))


def double_pendulum() -> ModelSpec:
    """Passive, undamped two-link chain (energy-conservation test bed)."""
    segs = (
        _seg("base", 1.0, 0.01),
        _seg("upper", 1.0, 0.02, parent="base", com=(0.0, -0.25)),
        _seg("lower", 1.0, 0.02, parent="upper", pos=(0.0, -0.5), com=(0.0, -0.25)),
    )
    joints = (_hinge("shoulder", "upper", -1e3, 1e3), _hinge("elbow", "lower", -1e3, 1e3))
    return ModelSpec("double_pendulum", segs, joints, ())


def _root_joints(child="pelvis"):
    return (
        _slide("root_x", child, (1.0, 0.0), -1e4, 1e4),
        _slide("root_y", child, (0.0, 1.0), -1e4, 1e4),
        _hinge("root_rot", child, -math.pi, math.pi),
    )


def _leg(side, foot=True, damping=0.5):
    s = side
    segs = [
        _seg(f"thigh_{s}", 8.0, 0.15, parent="pelvis", com=(0.0, -0.19)),
    ]
    joints = [_hinge(f"hip_{s}", f"thigh_{s}", -0.8, 1.6, damping=damping)]
    if foot:
        segs += [
            _seg(f"shank_{s}", 3.5, 0.05, parent=f"thigh_{s}", pos=(0.0, -THIGH), com=(0.0, -0.19)),
            _seg(f"foot_{s}", 1.2, 0.01, parent=f"shank_{s}", pos=(0.0, -SHANK), com=(0.05, -0.04)),
        ]
        joints += [
            _hinge(f"knee_{s}", f"shank_{s}", -0.1, 2.2, sign=-1.0, damping=damping),
            _hinge(f"ankle_{s}", f"foot_{s}", -0.8, 0.6, damping=damping),
        ]
        shank = f"shank_{s}"
    else:
        # rigid prosthesis in place of shank and foot
        segs += [_seg(f"prosthesis_{s}", 2.5, 0.04, parent=f"thigh_{s}", pos=(0.0, -THIGH),
                      com=(0.0, -0.25))]
        joints += [_hinge(f"knee_{s}", f"prosthesis_{s}", -0.1, 2.2, sign=-1.0, damping=damping)]
        shank = f"prosthesis_{s}"
    knee_wrap = (f"thigh_{s}", (0.0, -THIGH), 0.05)
    muscles = [
        _mus(f"iliopsoas_{s}", 1500.0, [("pelvis", (0.06, 0.08)), (f"thigh_{s}", (0.03, -0.08))]),
        _mus(f"glut_max_{s}", 1500.0, [("pelvis", (-0.08, 0.05)), (f"thigh_{s}", (-0.03, -0.12))],
             cluster=f"hip_ext_{s}"),
        _mus(f"hamstrings_{s}", 2500.0, [("pelvis", (-0.06, 0.0)), (shank, (-0.03, -0.06))],
             cluster=f"hip_ext_{s}"),
        _mus(f"rect_fem_{s}", 1200.0, [("pelvis", (0.05, 0.02)), (shank, (0.04, -0.08))],
             wrap=knee_wrap, cluster=f"knee_ext_{s}"),
        _mus(f"vasti_{s}", 5000.0, [(f"thigh_{s}", (0.04, -0.2)), (shank, (0.04, -0.08))],
             wrap=knee_wrap, cluster=f"knee_ext_{s}"),
        _mus(f"bfsh_{s}", 800.0, [(f"thigh_{s}", (-0.03, -0.25)), (shank, (-0.03, -0.06))]),
    ]
    clusters = [ClusterSpec(f"hip_ext_{s}", (f"glut_max_{s}", f"hamstrings_{s}")),
                ClusterSpec(f"knee_ext_{s}", (f"vasti_{s}", f"rect_fem_{s}"))]
    if foot:
        muscles += [
            _mus(f"gastroc_{s}", 2000.0, [(f"thigh_{s}", (-0.03, -0.38)), (f"foot_{s}", (-0.06, -0.02))],
                 cluster=f"plantarflex_{s}"),
            _mus(f"soleus_{s}", 4000.0, [(shank, (-0.03, -0.15)), (f"foot_{s}", (-0.06, -0.02))],
                 cluster=f"plantarflex_{s}"),
            _mus(f"tib_ant_{s}", 1500.0, [(shank, (0.03, -0.15)), (f"foot_{s}", (0.08, -0.03))]),
        ]
        clusters.append(ClusterSpec(f"plantarflex_{s}", (f"soleus_{s}", f"gastroc_{s}")))
        spheres = [ContactSphere(f"foot_{s}", (-0.05, -0.06, 0.0), 0.02),
                   ContactSphere(f"foot_{s}", (0.15, -0.06, 0.0), 0.02)]
    else:
        spheres = [ContactSphere(shank, (0.0, -(SHANK + ANKLE_H) + 0.02, 0.0), 0.02)]
    return segs, joints, muscles, clusters, spheres


def _arm(side="r", damping=0.2):
    s = side
    segs = [
        _seg(f"upper_arm_{s}", 2.0, 0.02, parent="pelvis", pos=(0.0, 0.5), com=(0.0, -0.15)),
        _seg(f"forearm_{s}", 1.5, 0.015, parent=f"upper_arm_{s}", pos=(0.0, -0.3), com=(0.0, -0.13)),
    ]
    joints = [
        _hinge(f"shoulder_{s}", f"upper_arm_{s}", -1.0, 1.5, damping=damping),
        _hinge(f"elbow_{s}", f"forearm_{s}", 0.0, 2.4, damping=damping),
    ]
    muscles = [
        _mus(f"delt_ant_{s}", 600.0, [("pelvis", (0.05, 0.55)), (f"upper_arm_{s}", (0.02, -0.1))]),
        _mus(f"delt_post_{s}", 600.0, [("pelvis", (-0.05, 0.55)), (f"upper_arm_{s}", (-0.02, -0.1))]),
        _mus(f"biceps_{s}", 500.0, [(f"upper_arm_{s}", (0.02, -0.05)), (f"forearm_{s}", (0.02, -0.04))]),
        _mus(f"triceps_{s}", 600.0, [(f"upper_arm_{s}", (-0.02, -0.05)), (f"forearm_{s}", (-0.025, 0.02))]),
    ]
    return segs, joints, muscles


def _pelvis():
    return _seg("pelvis", 50.0, 3.0, com=(0.0, 0.3))


def walker2d() -> ModelSpec:
    """Planar biped: HAT/pelvis root with a 3-DoF planar root and two 3-joint legs."""
    segs, joints, muscles, clusters, spheres = [_pelvis()], list(_root_joints()), [], [], []
    for side in ("r", "l"):
        s, j, m, c, sp = _leg(side)
        segs += s
        joints += j
        muscles += m
        clusters += c
        spheres += sp
    return _fit_lengths(ModelSpec("walker2d", tuple(segs), tuple(joints), tuple(muscles),
                                  tuple(clusters), contact_spheres=tuple(spheres)))


EXO_SPRING_K = 2e4
EXO_SPRING_D = 2e2
EXO_KP, EXO_KD = 300.0, 30.0


def walker2d_exo() -> ModelSpec:
    """Walker with a right arm and a passive-structure leg exoskeleton.

    Exo joints are driven by PD servos (see :func:`exo_attachments`) and tied
    to the human thighs and shanks by stiff bandage springs.
    """
    base = walker2d()
    segs, joints, muscles = list(base.segments), list(base.joints), list(base.muscles)
    s, j, m = _arm("r")
    segs += s
    joints += j
    muscles += m
    for side in ("r", "l"):
        segs += [
            _seg(f"exo_thigh_{side}", 2.0, 0.03, parent="pelvis", com=(0.0, -0.2)),
            _seg(f"exo_shank_{side}", 1.5, 0.02, parent=f"exo_thigh_{side}", pos=(0.0, -THIGH),
                 com=(0.0, -0.2)),
        ]
        joints += [
            _hinge(f"exo_hip_{side}", f"exo_thigh_{side}", -0.8, 1.6, damping=1.0),
            _hinge(f"exo_knee_{side}", f"exo_shank_{side}", -0.1, 2.2, sign=-1.0, damping=1.0),
        ]
    model = ModelSpec("walker2d_exo", tuple(segs), tuple(joints), tuple(muscles),
                      base.clusters, contact_spheres=base.contact_spheres)
    return _fit_lengths(model)


def exo_attachments():
    from .dynamics import Attachments, PointSpring, Servo

    springs, servos = [], []
    for side in ("r", "l"):
        springs += [
            PointSpring(f"thigh_{side}", (0.0, -0.2), f"exo_thigh_{side}", (0.0, -0.2),
                        EXO_SPRING_K, EXO_SPRING_D),
            PointSpring(f"shank_{side}", (0.0, -0.2), f"exo_shank_{side}", (0.0, -0.2),
                        EXO_SPRING_K, EXO_SPRING_D),
        ]
        servos += [Servo(f"exo_hip_{side}", EXO_KP, EXO_KD), Servo(f"exo_knee_{side}", EXO_KP, EXO_KD)]
    return Attachments(tuple(springs), tuple(servos))


def walker2d_prosthetic() -> ModelSpec:
    """Walker with a rigid right below-knee prosthesis and a crutch in the right hand."""
    segs, joints, muscles, clusters, spheres = [_pelvis()], list(_root_joints()), [], [], []
    for side, foot in (("r", False), ("l", True)):
        s, j, m, c, sp = _leg(side, foot=foot)
        segs += s
        joints += j
        muscles += m
        clusters += c
        spheres += sp
    s, j, m = _arm("r")
    segs += s
    joints += j
    muscles += m
    # massless strut welded to the forearm; its tip reaches the ground in quiet stance
    segs.append(_seg("crutch", 1e-6, 1e-9, parent="forearm_r", pos=(0.0, -0.27), phantom=True))
    spheres.append(ContactSphere("crutch", (0.0, -0.88, 0.0), 0.02))
    model = ModelSpec("walker2d_prosthetic", tuple(segs), tuple(joints), tuple(muscles),
                      tuple(clusters), contact_spheres=tuple(spheres))
    return _fit_lengths(model)


GENERATORS = {
    "pendulum1": pendulum1,
    "double_pendulum": double_pendulum,
    "walker2d": walker2d,
    "walker2d_exo": walker2d_exo,
    "walker2d_prosthetic": walker2d_prosthetic,
}


# ---------------------------------------------------------------------------
# synthetic reference gait


def _gait_angles(phase: np.ndarray) -> dict:
    """Joint angle curves of one sinusoid-based gait cycle; phase in [0, 1)."""
    w = 2.0 * np.pi * phase
    out = {}
    for side, shift in (("r", 0.0), ("l", np.pi)):
        out[f"hip_{side}"] = 0.15 + 0.35 * np.sin(w + shift)
        out[f"knee_{side}"] = 0.08 + 0.6 * ((1.0 - np.cos(w + shift + 0.6)) / 2.0) ** 2
        out[f"ankle_{side}"] = 0.05 + 0.12 * np.sin(w + shift - 0.9)
        out[f"exo_hip_{side}"] = out[f"hip_{side}"]
        out[f"exo_knee_{side}"] = out[f"knee_{side}"]
    out["shoulder_r"] = -0.3 * np.sin(w)
    out["elbow_r"] = 0.5 + 0.15 * np.sin(w + 0.5)
    out["root_rot"] = 0.04 * np.sin(2.0 * w)
    return out


def synthetic_gait(model: ModelSpec, period: float = GAIT_PERIOD, n_frames: int = GAIT_FRAMES,
                   speed: float = GAIT_SPEED):
    """Periodic reference for every coordinate of a walker-family model.

    root_y is set each frame so the lowest contact point touches the ground.
    Returns ``(times, frames)`` with ``n_frames + 1`` rows; the last row closes
    the cycle (``times[-1] == period``).
    """
    from .mechanism import compile_model, link_kinematics, coordinates, world_point

    mech = compile_model(model)
    times = np.linspace(0.0, period, n_frames + 1)
    ang = _gait_angles(times / period)
    names = model.coordinate_names
    frames = np.zeros((len(times), len(names)))
    for k, nm in enumerate(names):
        if nm in ang:
            frames[:, k] = ang[nm]
    if "root_x" in names:
        frames[:, names.index("root_x")] = speed * times
    if "root_y" in names:
        iy = names.index("root_y")
        a = mech.arr
        for r in range(len(times)):
            th, _, _, _ = coordinates(mech, frames[r])
            pose, _ = link_kinematics(a, th)
            low = min(world_point(pose, a.c_link[c], a.c_pos[c, 0], a.c_pos[c, 1])[1] - a.c_radius[c]
                      for c in range(len(a.c_link)))
            frames[r, iy] = -low
    return times, frames


def write_reference_csv(path, times, frames):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"q_{i}" for i in range(frames.shape[1])])
        for t, row in zip(times, frames):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def main():
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    for name, gen in GENERATORS.items():
        model = gen()
        (DATA_DIR / f"{name}.json").write_bytes(serialize_model(model))
        if model.contact_spheres:
            t, f = synthetic_gait(model)
            write_reference_csv(DATA_DIR / f"{name}.ref.csv", t, f)
        print(f"wrote {name}: {len(model.segments)} segments, {len(model.joints)} joints, "
              f"{len(model.muscles)} muscles")


if __name__ == "__main__":
    main()
