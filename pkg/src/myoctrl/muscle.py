"""Hill-type muscle-tendon mechanics.

Force is ``f = f_max * (F_l(l_m) * F_v(v_m) * act + F_p(l_m))`` with a rigid
tendon and no pennation, so the normalized fiber length and velocity follow
directly from the path length and its rate.  Positive ``v_m`` is lengthening.

Curve shapes (dimensionless, normalized to 1 at the optimum):

* active force-length: Gaussian ``exp(-((l - 1) / 0.45)**2)``
* force-velocity: Hill hyperbola ``(1 + v) / (1 - v / 0.25)`` while shortening
  (zero below ``v = -1``), and ``(c + 1.4 v) / (c + v)`` while lengthening,
  with ``c = 0.08`` so the slope is continuous at ``v = 0``
* passive force-length: ``(exp(4 (l - 1) / 0.6) - 1) / (exp(4) - 1)`` for ``l > 1``
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, vectorize

from .mechanism import compile_model, muscle_paths

FL_WIDTH = 0.45
FV_SHAPE = 0.25
FV_ECC_MAX = 1.4
FV_ECC_C = 0.08
FP_STRAIN = 0.6
FP_SHAPE = 4.0
L_M_FLOOR = 1e-3


@dataclass(frozen=True)
class ActivationParams:
    tau_act: float = 0.010
    tau_deact: float = 0.040

    def __post_init__(self):
        if not (self.tau_act > 0 and self.tau_deact > 0):
            raise ValueError("activation time constants must be positive")


DEFAULT_ACTIVATION = ActivationParams()


@dataclass
class MuscleState:
    """Per-muscle arrays: activation, path length (m), normalized fiber
    length and velocity, and tendon force (N)."""
    act: np.ndarray
    l_mt: np.ndarray
    l_m: np.ndarray
    v_m: np.ndarray
    f: np.ndarray


# -- activation dynamics ------------------------------------------------------

@njit(cache=True)
def _tau(u, act, tau_act, tau_deact):
    if u > act:
        return tau_act * (0.5 + 1.5 * act)
    return tau_deact / (0.5 + 1.5 * act)


@njit(cache=True)
def _activation_step(act, u, dt, tau_act, tau_deact):
    """Exact solution of the activation ODE over ``dt`` for constant ``u``.

    Rising (u > act): with y = u - act and c = 0.5 + 1.5u the ODE integrates to
    ln y - 1.5y/c = ln y0 - (dt/tau_act + 1.5 y0)/c, solved by Newton in s = ln y
    (concave and increasing, so the iterates approach the root monotonically).
    Falling (u < act): a Riccati equation with roots u and -1/3, solved in closed form.
    """
    if u > act:
        y0 = u - act
        c = 0.5 + 1.5 * u
        k = math.log(y0) - (dt / tau_act + 1.5 * y0) / c
        s = math.log(y0)
        for _ in range(60):
            e = math.exp(s)
            h = s - 1.5 * e / c - k
            step = h / (1.0 - 1.5 * e / c)
            s -= step
            if abs(step) < 1e-15:
                break
        a = u - math.exp(s)
    elif u < act:
        r = (act - u) / (act + 1.0 / 3.0) * math.exp(-1.5 * (u + 1.0 / 3.0) * dt / tau_deact)
        a = (u + r / 3.0) / (1.0 - r)
    else:
        a = act
    if a < 0.0:
        return 0.0
    if a > 1.0:
        return 1.0
    return a


@vectorize(["float64(float64, float64, float64, float64, float64)"], cache=True)
def _activation_step_v(act, u, dt, tau_act, tau_deact):
    return _activation_step(act, u, dt, tau_act, tau_deact)


def tau(u: float, act: float, params: ActivationParams = DEFAULT_ACTIVATION) -> float:
    """Time constant (s) of the first-order activation filter."""
    return _tau(float(u), float(act), params.tau_act, params.tau_deact)


def activation_step(act, u, dt: float, params: ActivationParams = DEFAULT_ACTIVATION):
    """Advance ``d act/dt = (u - act) / tau(u, act)`` by ``dt`` with ``u`` held constant.

    The step is the exact solution of the ODE (not an explicit Euler update),
    so it stays accurate when ``dt`` is comparable to the time constants.
    Works on scalars or arrays of matching shape; the result lies in [0, 1].
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = _activation_step_v(np.asarray(act, dtype=float), np.asarray(u, dtype=float), float(dt),
                             params.tau_act, params.tau_deact)
    return float(out) if np.ndim(out) == 0 else out


# -- force curves -------------------------------------------------------------

@njit(cache=True)
def _fl(l):
    x = (l - 1.0) / FL_WIDTH
    return math.exp(-x * x)


@njit(cache=True)
def _fl_slope(l):
    x = (l - 1.0) / FL_WIDTH
    return -2.0 * x / FL_WIDTH * math.exp(-x * x)


@njit(cache=True)
def _fv(v):
    if v <= 0.0:
        if v <= -1.0:
            return 0.0
        return (1.0 + v) / (1.0 - v / FV_SHAPE)
    return (FV_ECC_C + FV_ECC_MAX * v) / (FV_ECC_C + v)


@njit(cache=True)
def _fv_slope(v):
    if v <= 0.0:
        if v <= -1.0:
            return 0.0
        d = 1.0 - v / FV_SHAPE
        return (1.0 + 1.0 / FV_SHAPE) / (d * d)
    d = FV_ECC_C + v
    return (FV_ECC_MAX - 1.0) * FV_ECC_C / (d * d)


@njit(cache=True)
def _fp(l):
    if l <= 1.0:
        return 0.0
    return (math.exp(FP_SHAPE * (l - 1.0) / FP_STRAIN) - 1.0) / (math.exp(FP_SHAPE) - 1.0)


@njit(cache=True)
def _force(f_max, l_m, v_m, act):
    return f_max * (_fl(l_m) * _fv(v_m) * act + _fp(l_m))


@vectorize(["float64(float64)"], cache=True)
def fl_active(l_m):
    """Active force-length multiplier."""
    return _fl(l_m)


@vectorize(["float64(float64)"], cache=True)
def fv(v_m):
    """Force-velocity multiplier; monotone nondecreasing, 0 at v=-1, 1 at v=0, -> 1.4."""
    return _fv(v_m)


@vectorize(["float64(float64)"], cache=True)
def fp(l_m):
    """Passive force-length multiplier; zero at or below optimal length."""
    return _fp(l_m)


@vectorize(["float64(float64, float64, float64, float64)"], cache=True)
def muscle_force(f_max, l_m, v_m, act):
    """Tendon force (N) of a rigid-tendon Hill muscle."""
    return _force(f_max, l_m, v_m, act)


# -- kinematics ---------------------------------------------------------------

def fiber_kinematics(l_mt, ldot_mt, l_opt, l_ts, v_max):
    """Normalized fiber length and velocity from path length and its rate."""
    l_m = np.maximum((np.asarray(l_mt) - l_ts) / l_opt, L_M_FLOOR)
    v_m = np.asarray(ldot_mt) / (np.asarray(l_opt) * v_max)
    return l_m, v_m


def path_length(model, q):
    """Muscle-tendon path length (m) per muscle at configuration ``q``."""
    mech = compile_model(model)
    l_mt, _ = muscle_paths(mech, np.asarray(q, dtype=float))
    return l_mt


def moment_arms(model, q):
    """Moment-arm matrix ``R[i, j] = -d l_mt_i / d q_j`` (muscles x dim(q))."""
    mech = compile_model(model)
    _, r = muscle_paths(mech, np.asarray(q, dtype=float))
    return r
