import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numba import njit

from myoctrl.dynamics import muscle_state
from myoctrl.model import SHIPPED_MODELS, shipped_model
from myoctrl.muscle import (ActivationParams, activation_step, fiber_kinematics, fl_active, fp, fv,
                            moment_arms, muscle_force, path_length, tau)

from conftest import build, hinge, model_doc, muscle, random_q, seg


@njit(cache=True)
def rk4_activation(u_of_t, t_end, h, tau_act, tau_deact):
    """Classical RK4 on d act/dt = (u - act)/tau(u, act); u piecewise constant on a 1 ms grid."""
    n = int(round(t_end / h))
    per = int(round(1e-3 / h))
    out = np.zeros(n // per + 1)
    a = 0.0
    for i in range(n):
        u = u_of_t[i // per]

        def f(x):
            t = tau_act * (0.5 + 1.5 * x) if u > x else tau_deact / (0.5 + 1.5 * x)
            return (u - x) / t

        k1 = f(a)
        k2 = f(a + 0.5 * h * k1)
        k3 = f(a + 0.5 * h * k2)
        k4 = f(a + h * k3)
        a += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (i + 1) % per == 0:
            out[(i + 1) // per] = a
    return out


def test_tau_defaults():
    assert tau(1.0, 0.0) == 0.005
    assert tau(0.0, 0.0) == 0.080
    assert tau(0.0, 1.0) == pytest.approx(0.020, abs=1e-15)
    p = ActivationParams()
    assert (p.tau_act, p.tau_deact) == (0.010, 0.040)
    with pytest.raises(ValueError):
        ActivationParams(tau_act=0.0)


def test_activation_step_examples():
    # one 1 ms step against the fine-grained RK4 oracle
    ref_up = rk4_activation(np.ones(1), 1e-3, 1e-6, 0.010, 0.040)[-1]
    assert activation_step(0.0, 1.0, 1e-3) == pytest.approx(ref_up, abs=1e-9)
    assert 0.14 < ref_up < 0.16
    down = activation_step(1.0, 0.0, 1e-3)
    assert down == pytest.approx(0.952096, abs=1e-6)
    # closed form of the falling branch: (a - u)/(a + 1/3) decays with rate 1.5 (u + 1/3)/tau_deact
    r = 0.75 * math.exp(-0.5 * 1e-3 / 0.040)
    assert down == pytest.approx(r / 3 / (1 - r), abs=1e-15)
    for a in np.linspace(0, 1, 11):
        assert activation_step(a, a, 1e-3) == a


def test_activation_matches_rk4_oracle():
    u = np.ones(1000)
    ours = [0.0]
    for k in range(1000):
        ours.append(activation_step(ours[-1], u[k], 1e-3))
    ref = rk4_activation(u, 1.0, 1e-6, 0.010, 0.040)
    assert np.max(np.abs(np.array(ours) - ref)) < 1e-3


def test_activation_release_matches_rk4_oracle():
    u = np.r_[np.ones(300), np.zeros(400), np.full(300, 0.4)]
    ours = [0.0]
    for k in range(1000):
        ours.append(activation_step(ours[-1], u[k], 1e-3))
    ref = rk4_activation(u, 1.0, 1e-6, 0.010, 0.040)
    assert np.max(np.abs(np.array(ours) - ref)) < 1e-3


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.floats(1e-5, 1e-3),
       st.floats(0, 1))
def test_activation_stays_in_unit_interval(us, dt, a0):
    a = a0
    for u in us:
        for _ in range(25):
            a = activation_step(a, u, dt)
            assert 0.0 <= a <= 1.0


def test_hill_identities():
    assert fl_active(1.0) == 1.0
    assert fv(0.0) == 1.0
    assert fp(1.0) == 0.0
    assert fp(0.9) == 0.0
    assert np.all(fp(np.linspace(0.0, 1.0, 101)) == 0.0)
    assert abs(muscle_force(1000.0, 1.0, 0.0, 1.0) - 1000.0) < 1e-12
    assert muscle_force(0.0, 1.3, 0.2, 0.7) == 0.0
    for l in (0.5, 1.0, 1.2, 1.5):
        assert muscle_force(500.0, l, 0.3, 0.0) == pytest.approx(500.0 * fp(l), rel=1e-15)


def test_force_velocity_shape():
    assert fv(-1.0) == 0.0
    assert fv(-2.0) == 0.0
    v = np.linspace(-1, 5, 2001)
    assert np.all(np.diff(fv(v)) >= 0)
    assert fv(1e6) == pytest.approx(1.4, abs=1e-6)
    h = 1e-9
    assert abs(fv(h) - fv(-h)) < 1e-7


def test_force_monotone_in_activation(rng):
    n = 1000
    l = rng.uniform(0.4, 1.8, n)
    v = rng.uniform(-1.2, 1.2, n)
    a1 = rng.uniform(0, 1, n)
    a2 = np.minimum(a1 + rng.uniform(0, 1, n), 1.0)
    f1 = muscle_force(800.0, l, v, a1)
    f2 = muscle_force(800.0, l, v, a2)
    assert np.all(f2 >= f1)
    assert np.all(f1 >= 0)


def test_fiber_kinematics_formula():
    l_m, v_m = fiber_kinematics(0.5, 0.2, 0.25, 0.1, 10.0)
    assert l_m == pytest.approx((0.5 - 0.1) / 0.25)
    assert v_m == pytest.approx(0.2 / (0.25 * 10.0))


def _line_model(wrap=None):
    return build(model_doc(
        [seg("base", 1.0, 0.01), seg("arm", 1.0, 0.02, "base", com=(0.1, 0))],
        [hinge("j", "arm")],
        [muscle("m", [("base", (-0.2, 0.0)), ("arm", (0.2, 0.0))], wrap=wrap)]))


def test_path_length_straight_line():
    assert path_length(_line_model(), [0.0])[0] == pytest.approx(0.4, abs=1e-15)


def test_path_length_wrap_detour():
    wrap = {"segment": "base", "center": [0.0, 0.05, 0.0], "radius": 0.1}
    m = _line_model(wrap)
    assert path_length(m, [0.0])[0] > 0.4 + 1e-6


def test_pendulum_flexor_geometry():
    m = shipped_model("pendulum1")
    # origin on the base at (0.15, 0); insertion 0.3 m down the arm, rotating about z
    for q in (0.0, 0.5):
        ins = np.array([0.3 * math.sin(q), -0.3 * math.cos(q)])
        expect = float(np.hypot(*(ins - [0.15, 0.0])))
        assert path_length(m, [q])[0] == pytest.approx(expect, abs=1e-14)
    assert path_length(m, [0.5])[0] < path_length(m, [0.0])[0]
    # shortening under positive rotation: positive moment arm (flexion torque)
    assert moment_arms(m, [0.2])[0, 0] > 0


def _fd_moment_arms(model, q, h=1e-6):
    R = np.zeros((len(model.muscles), len(q)))
    for j in range(len(q)):
        e = np.zeros(len(q))
        e[j] = h
        R[:, j] = -(path_length(model, q + e) - path_length(model, q - e)) / (2 * h)
    return R


def moment_arm_rel_err(R, F, floor=1e-4):
    return float(np.max(np.abs(R - F) / np.maximum(np.abs(F), floor)))


@pytest.mark.parametrize("name", [n for n in SHIPPED_MODELS if n != "double_pendulum"])
def test_moment_arms_match_fd(name, rng):
    model = shipped_model(name)
    for _ in range(10):
        q = random_q(model, rng)
        assert moment_arm_rel_err(moment_arms(model, q), _fd_moment_arms(model, q)) < 1e-5


def test_moment_arms_with_wrap_match_fd(rng):
    wrap = {"segment": "base", "center": [0.0, 0.05, 0.0], "radius": 0.1}
    m = _line_model(wrap)
    for q in rng.uniform(-0.3, 0.3, 10):
        q = np.array([q])
        assert moment_arm_rel_err(moment_arms(m, q), _fd_moment_arms(m, q)) < 1e-5


def test_moment_arm_zero_for_uncrossed_joint():
    m = shipped_model("walker2d")
    names = m.coordinate_names
    R = moment_arms(m, np.zeros(m.dim_q))
    for i, mu in enumerate(m.muscles):
        side = mu.name.rsplit("_", 1)[-1]
        other = "l" if side == "r" else "r"
        for jn in (f"hip_{other}", f"knee_{other}", f"ankle_{other}"):
            assert R[i, names.index(jn)] == 0.0


def test_fiber_velocity_matches_numerical_path_rate(rng):
    m = shipped_model("walker2d")
    lo = np.array([mu.l_opt * mu.v_max for mu in m.muscles])
    for _ in range(5):
        q = random_q(m, rng)
        qd = rng.normal(0, 1, m.dim_q)
        h = 1e-6
        ldot = (path_length(m, q + h * qd) - path_length(m, q - h * qd)) / (2 * h)
        ms = muscle_state(m, q, qd, np.zeros(len(m.muscles)))
        assert np.max(np.abs(ms.v_m - ldot / lo)) < 1e-3
