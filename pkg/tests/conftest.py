import json

import numpy as np
import pytest

from myoctrl.model import parse_model


def seg(name, mass, inertia, parent=None, pos=(0.0, 0.0), com=(0.0, 0.0), phantom=False):
    return {"name": name, "mass": mass, "inertia": inertia, "parent": parent,
            "attach_pose": {"pos": [pos[0], pos[1], 0.0], "rot": 0.0},
            "is_phantom": phantom, "com": [com[0], com[1], 0.0]}


def hinge(name, child, rng=(-1e3, 1e3), damping=0.0, axis=(0.0, 0.0, 1.0)):
    return {"name": name, "kind": "hinge", "axis": list(axis), "range": list(rng),
            "child": child, "damping": damping}


def muscle(name, points, f_max=100.0, l_opt=0.3, l_ts=0.0, cluster=None, wrap=None):
    return {"name": name, "f_max": f_max, "l_opt": l_opt, "l_ts": l_ts, "cluster": cluster,
            "path": [{"segment": s, "local_pos": [p[0], p[1], 0.0]} for s, p in points],
            "wrap": wrap}


def model_doc(segments, joints, muscles=(), clusters=(), gravity=(0.0, -9.81, 0.0), name="test"):
    return {"name": name, "version": "1", "gravity": list(gravity), "segments": list(segments),
            "joints": list(joints), "muscles": list(muscles), "clusters": list(clusters),
            "contact_spheres": []}


def build(doc):
    return parse_model(json.dumps(doc))


def chain_model(m1=1.3, m2=0.7, l1=0.9, a1=0.4, a2=0.35, i1=0.05, i2=0.02, gravity=-9.81):
    """Two-link hinge chain hanging from a fixed base; coms on the link axes."""
    return build(model_doc(
        [seg("base", 1.0, 0.01), seg("l1", m1, i1, "base", com=(0.0, -a1)),
         seg("l2", m2, i2, "l1", pos=(0.0, -l1), com=(0.0, -a2))],
        [hinge("j1", "l1"), hinge("j2", "l2")], gravity=(0.0, gravity, 0.0), name="chain"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ROOT_SPAN = 1.0   # sampling half-width for unbounded root coordinates


def random_q(model, rng):
    """Uniform configuration inside the joint ranges (root coordinates clipped)."""
    lo, hi = [], []
    for j in model.coordinate_joints:
        a, b = j.range
        lo.append(max(a, -ROOT_SPAN) if j.name.startswith("root") or b - a > 100 else a)
        hi.append(min(b, ROOT_SPAN) if j.name.startswith("root") or b - a > 100 else b)
    return rng.uniform(lo, hi)


# one verdict line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
