"""Acceptance criteria 1-11, each reported as one PASS/FAIL line.

Criterion 9 reads the artifacts written by ``scripts/walk_desk.py`` under
``results/walk_desk`` and reruns the comparison when they are absent.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from myoctrl import dynamics as dyn
from myoctrl.census import census_check, shipped_census
from myoctrl.learn import MLP, SACConfig, TrainConfig, grad_check, train
from myoctrl.model import SHIPPED_MODELS, parse_model, serialize_model, shipped_model
from myoctrl.muscle import activation_step, fl_active, fp, fv, moment_arms, muscle_force, tau
from myoctrl.pipeline import KINDS, RUNNERS, StageConfig, compare, load_run
from myoctrl.represent import LatentCodec, fit_codec, make_interface, reconstruction_error
from myoctrl.tasks import MuscleEnv, TaskConfig, pendulum_task, reward_exo, reward_walk

from conftest import ACCEPTANCE_LINES, random_q
from test_muscle import _fd_moment_arms, moment_arm_rel_err, rk4_activation
from test_represent import _matched_abs_corr, _sources

ROOT = Path(__file__).resolve().parents[1]
WALK_DESK = ROOT / "results" / "walk_desk"


def verdict(n: int, ok: bool, detail: str):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_c01_activation_dynamics():
    activation_step(0.0, 1.0, 1e-3)        # compile outside the timed region
    t0 = time.perf_counter()
    a = [0.0]
    for _ in range(1000):
        a.append(activation_step(a[-1], 1.0, 1e-3))
    elapsed = time.perf_counter() - t0
    ref = rk4_activation(np.ones(1000), 1.0, 1e-6, 0.010, 0.040)
    err = float(np.max(np.abs(np.array(a) - ref)))
    ok = err < 1e-3 and tau(1.0, 0.0) == 0.005 and tau(0.0, 0.0) == 0.080 and elapsed < 1.0
    verdict(1, ok, f"max |act - RK4| = {err:.2e}, tau(1,0) = {tau(1.0, 0.0)}, "
                   f"tau(0,0) = {tau(0.0, 0.0)}, {elapsed:.3f} s")


def test_c02_hill_identities(rng):
    lows = np.linspace(0.0, 1.0, 101)
    exact = (fl_active(1.0) == 1.0 and fv(0.0) == 1.0 and all(fp(l) == 0.0 for l in lows))
    f_err = max(abs(muscle_force(f, 1.0, 0.0, 1.0) - f) for f in (1.0, 250.0, 4000.0))
    l = rng.uniform(0.4, 1.8, 1000)
    v = rng.uniform(-1.0, 1.0, 1000)
    a1, a2 = np.sort(rng.uniform(0.0, 1.0, (2, 1000)), axis=0)
    F1 = np.array([muscle_force(100.0, *x) for x in zip(l, v, a1)])
    F2 = np.array([muscle_force(100.0, *x) for x in zip(l, v, a2)])
    mono = bool(np.all(F2 >= F1))
    verdict(2, exact and f_err <= 1e-12 and mono,
            f"identities exact: {exact}, |F - f_max| = {f_err:.1e}, monotone at 1000 points: {mono}")


def test_c03_moment_arms(rng):
    worst = 0.0
    for name in SHIPPED_MODELS:
        model = shipped_model(name)
        if not model.muscles:
            continue
        for _ in range(10):
            q = random_q(model, rng)
            worst = max(worst, moment_arm_rel_err(moment_arms(model, q), _fd_moment_arms(model, q)))
    verdict(3, worst < 1e-5, f"max relative error vs central differences = {worst:.2e}")


def test_c04_dynamics(rng):
    t0 = time.perf_counter()
    crba = 0.0
    resid = 0.0
    n_states = 0
    for name in SHIPPED_MODELS:
        model = shipped_model(name)
        n = model.dim_q
        for _ in range(5):
            q = random_q(model, rng)
            M = dyn.mass_matrix(model, q)
            cols = np.column_stack([dyn.inverse_dynamics(model, q, np.zeros(n), e, gravity=False)
                                    for e in np.eye(n)])
            crba = max(crba, float(np.max(np.abs(M - cols))))
        for _ in range(200):
            q = random_q(model, rng)
            qd = rng.normal(0, 2, n)
            tq = rng.normal(0, 50, n)
            qdd = dyn.forward_dynamics(model, q, qd, tau_ext=tq)
            resid = max(resid, float(np.max(np.abs(dyn.inverse_dynamics(model, q, qd, qdd) - tq))))
            n_states += 1
    model = shipped_model("double_pendulum")
    s = dyn.initial_state(model, q=[1.2, -0.5])
    e0 = dyn.mechanical_energy(model, s.q, s.qd)
    p = dyn.SimParams(n_sub=100)           # 1e-4 s substeps
    drift = 0.0
    for _ in range(1000):                  # 10 s
        s = dyn.step(model, s, np.zeros(0), 0.01, p)
        drift = max(drift, abs(dyn.mechanical_energy(model, s.q, s.qd) - e0) / abs(e0))
    elapsed = time.perf_counter() - t0
    ok = crba < 1e-9 and resid < 1e-8 and n_states >= 1000 and drift < 0.01 and elapsed < 30
    verdict(4, ok, f"CRBA vs RNEA {crba:.1e}, residual {resid:.1e} over {n_states} states, "
                   f"energy drift {100 * drift:.4f}%, {elapsed:.1f} s")


def test_c05_rewards():
    cfg = TaskConfig()
    weights = (cfg.w_q, cfg.w_qdot, cfg.w_c, cfg.w_m, cfg.w_contact) == (1.0, 5e-3, 1.0, 10.0, 5e-2)
    q = np.array([0.1, -0.2, 0.3])
    ref = (q.copy(), np.zeros(3))
    perfect_walk = reward_walk(q, np.zeros(3), cfg, ref)
    perfect_exo = reward_exo(q, q, np.zeros(2), TaskConfig(task="exo"))
    q1 = q.copy()
    q1[1] += 1.0
    err = abs(reward_walk(q1, np.zeros(3), cfg, ref) - 10 * math.exp(-1))
    ok = weights and perfect_walk == 10.0 and perfect_exo == 10.0 and err < 1e-12
    verdict(5, ok, f"perfect walk {perfect_walk}, perfect exo {perfect_exo}, "
                   f"1 rad error off by {err:.1e}, weights as specified: {weights}")


def test_c06_codec(rng):
    t0 = time.perf_counter()
    X = rng.uniform(size=(2000, 8)) @ rng.normal(size=(8, 8))
    full = reconstruction_error(fit_codec(X, 8), X)
    rmse = [reconstruction_error(fit_codec(X, d), X) for d in range(1, 9)]
    mono = all(b <= a + 1e-12 for a, b in zip(rmse, rmse[1:]))
    S = _sources()
    recovered = 0
    worst = 1.0
    for seed in range(5):
        A = np.random.default_rng(100 + seed).normal(size=(3, 3))
        c = _matched_abs_corr(S, fit_codec(S @ A.T, 3, seed=seed).encode(S @ A.T))
        worst = min(worst, float(c.min()))
        recovered += bool(np.all(c > 0.95))
    elapsed = time.perf_counter() - t0
    ok = full < 1e-8 and mono and recovered == 5 and elapsed < 10
    verdict(6, ok, f"full-rank RMSE {full:.1e}, nonincreasing in d: {mono}, ICA {recovered}/5 seeds "
                   f"(min |corr| {worst:.3f}), {elapsed:.1f} s")


def test_c07_learner_numerics():
    worst = 0.0
    for seed in range(5):
        r = np.random.default_rng(seed)
        net = MLP([4, 8, 3], r, dtype=np.float64)
        x, y = r.normal(size=(6, 4)), r.normal(size=(6, 3))
        worst = max(worst, grad_check(net, x, lambda o: o - y, lambda o: 0.5 * float(np.sum((o - y) ** 2))))
    model, ref, cfg = pendulum_task()
    env = lambda: MuscleEnv(model, ref, cfg, make_interface("full", model))
    tcfg = TrainConfig(steps=1200, sac=SACConfig(batch=64, hidden=(16, 16), seed=4), warmup=200,
                       eval_every=400, eval_episodes=2, seed=4)
    same = train(env, tcfg).curve == train(env, tcfg).curve
    verdict(7, worst < 1e-4 and same,
            f"max gradient relative error {worst:.1e}, identical curves for identical seeds: {same}")


def _constant_return(model, ref, cfg, u, seeds):
    out = []
    for s in seeds:
        env = MuscleEnv(model, ref, cfg, make_interface("full", model))
        env.reset(np.random.default_rng(s))
        total, done = 0.0, False
        while not done:
            _, r, done, _ = env.step(2.0 * u - 1.0)
            total += r
        out.append(total)
    return float(np.mean(out))


@pytest.mark.slow
def test_c08_control_capability():
    t0 = time.perf_counter()
    model, ref, cfg = pendulum_task()
    grid = np.linspace(0.0, 1.0, 11)
    baseline = max(_constant_return(model, ref, cfg, np.array([a, b]), (0, 1, 2))
                   for a in grid for b in grid)
    target = 0.8 * baseline
    env = lambda: MuscleEnv(model, ref, cfg, make_interface("full", model))
    results = []
    for seed in range(3):
        res = train(env, TrainConfig(steps=200_000, sac=SACConfig(seed=seed), warmup=1000,
                                     eval_every=2000, eval_episodes=3, seed=seed,
                                     target_return=target))
        results.append((res.best_return, res.steps_done))
    elapsed = time.perf_counter() - t0
    solved = sum(b >= target for b, _ in results)
    ok = solved == 3 and elapsed < 1800 and all(n <= 200_000 for _, n in results)
    verdict(8, ok, f"grid baseline {baseline:.1f}, target {target:.1f}, solved {solved}/3 "
                   f"(best {[round(b, 1) for b, _ in results]} at steps {[n for _, n in results]}), "
                   f"{elapsed / 60:.1f} min")


@pytest.mark.slow
def test_c09_tsht_ordering():
    cfg = StageConfig(task="walk", M=150_000, N=200_000, d=8, seeds=(0, 1, 2))
    recs = []
    for kind in KINDS:
        for seed in cfg.seeds:
            d = WALK_DESK / f"{kind}_s{seed}"
            if not (d / "run.json").exists():
                RUNNERS[kind](cfg, seed, out=d)
            recs.append(load_run(d))
    for r in recs:
        c = StageConfig.from_dict(r.config)
        assert (c.M, c.N, r.steps) == (150_000, 200_000, 350_000), f"{r.kind} s{r.seed}: wrong budget"
    rep = compare(recs, WALK_DESK / "report.json")
    cells = rep["tasks"]["walk"]["cells"]
    hours = sum(r.wall_clock for r in recs) / 3600
    cols = "  ".join(f"{k} {v['mean']:.1f}±{v['std']:.1f}" for k, v in cells.items())
    published = {"SAR", "SAR-Ours"} <= set(cells)
    ok = rep["tasks"]["walk"]["ours_beats_e2e"] and published and hours < 8
    verdict(9, ok, f"mean max return {cols}; {hours:.1f} h total")


def test_c10_census():
    t0 = time.perf_counter()
    m = shipped_census()
    rep = census_check(m)
    segs = sum(p.segments for p in m.body_parts)
    joints = sum(p.joints for p in m.body_parts)
    mtus = sum(g.mtus for g in m.muscle_groups)
    elapsed = time.perf_counter() - t0
    ok = (rep.passed and (segs, joints, mtus) == (90, 206, 700) and len(m.muscle_groups) == 13
          and elapsed < 1.0)
    verdict(10, ok, f"segments {segs}, joints {joints}, muscles {mtus} over "
                    f"{len(m.muscle_groups)} groups, {elapsed * 1e3:.0f} ms")


def test_c11_round_trips(tmp_path, rng):
    models_ok = True
    for name in SHIPPED_MODELS:
        text = serialize_model(shipped_model(name))
        back = parse_model(text)
        models_ok &= back == shipped_model(name) and serialize_model(back) == text
    codec = fit_codec(rng.uniform(size=(500, 6)), 3, seed=2)
    codec.save(tmp_path / "codec.json")
    loaded = LatentCodec.load(tmp_path / "codec.json")
    codec_ok = (loaded.dumps() == (tmp_path / "codec.json").read_bytes()
                and all(np.array_equal(getattr(loaded, f), getattr(codec, f))
                        for f in ("mean", "components", "scales", "ica_unmixing", "ica_mixing")))
    model = shipped_model("pendulum1")
    states = [dyn.initial_state(model, q=[0.3])]
    for k in range(100):
        states.append(dyn.step(model, states[-1], np.array([0.6, 0.2 * (k % 4)])))
    dyn.write_trajectory(tmp_path / "traj.csv", states)
    back = dyn.read_trajectory(tmp_path / "traj.csv")
    traj_err = max(float(np.max(np.abs(back[k] - np.array([getattr(s, k) for s in states]))))
                   for k in ("t", "q", "qd", "act"))
    verdict(11, models_ok and codec_ok and traj_err <= 1e-12,
            f"models bit-exact: {models_ok}, codec bit-exact: {codec_ok}, "
            f"trajectory max error {traj_err:.1e}")
