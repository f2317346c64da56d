"""Command-line entry point: ``myoctrl <command> ...``.

Exit codes: 0 ok, 1 validation failure, 2 runtime error.  ``MYOCTRL_SEED``
overrides the seed of ``train`` and ``eval``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
INNER_DT = 1e-3     # largest integrator substep used by ``simulate``


class CliError(Exception):
    def __init__(self, msg: str, code: int = EXIT_RUNTIME):
        super().__init__(msg)
        self.code = code


def _seed(arg_seed: int) -> int:
    env = os.environ.get("MYOCTRL_SEED")
    if env is None or env == "":
        return arg_seed
    try:
        return int(env)
    except ValueError:
        raise CliError(f"MYOCTRL_SEED must be an integer, got '{env}'", EXIT_INVALID)


def _load_model(path):
    from .model import ModelError, load_model, validate

    try:
        model = load_model(path)
    except OSError as e:
        raise CliError(f"{path}: {e.strerror}", EXIT_RUNTIME)
    except ModelError as e:
        raise CliError(f"{path}: {e}", EXIT_INVALID)
    errs = validate(model)
    if errs:
        raise CliError(f"{path}: invalid model\n  " + "\n  ".join(errs), EXIT_INVALID)
    return model


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    model = _load_model(args.model)
    print(f"{args.model}: ok ({len(model.segments)} segments, {len(model.joints)} joints, "
          f"{len(model.muscles)} muscles)")
    return EXIT_OK


def cmd_census(args) -> int:
    from .census import MS_HUMAN_700, census_check, load_census

    try:
        manifest = load_census(args.manifest)
        expected = load_census(args.expected) if args.expected else MS_HUMAN_700
    except OSError as e:
        raise CliError(f"{e.filename}: {e.strerror}")
    except (KeyError, TypeError, ValueError) as e:
        raise CliError(f"malformed census manifest: {e}", EXIT_INVALID)
    rep = census_check(manifest, expected)
    print(rep)
    return EXIT_OK if rep.passed else EXIT_INVALID


def _read_excitations(path, muscle_names):
    """CSV with a header; an optional ``t`` column gives zero-order-hold switch times."""
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CliError(f"{path}: empty excitation file", EXIT_INVALID)
    head, body = rows[0], rows[1:]
    times = None
    if head and head[0] == "t":
        times = np.array([float(r[0]) for r in body])
        head, body = head[1:], [r[1:] for r in body]
    if head != list(muscle_names):
        raise CliError(f"{path}: columns must be the model's muscle names {list(muscle_names)}",
                       EXIT_INVALID)
    u = np.array([[float(x) for x in r] for r in body]).reshape(-1, len(head))
    if np.any(u < 0) or np.any(u > 1) or not np.all(np.isfinite(u)):
        raise CliError(f"{path}: excitations must lie in [0, 1]", EXIT_INVALID)
    return times, u


def cmd_simulate(args) -> int:
    from . import dynamics as dyn

    model = _load_model(args.model)
    names = [m.name for m in model.muscles]
    n = int(round(args.seconds / args.dt))
    if args.dt <= 0 or n < 1:
        raise CliError("need --dt > 0 and --seconds >= --dt", EXIT_INVALID)
    if args.excite:
        times, u_tab = _read_excitations(args.excite, names)
    else:
        times, u_tab = None, np.zeros((1, len(names)))
    n_sub = args.substeps or max(1, math.ceil(args.dt / INNER_DT - 1e-9))
    params = dyn.SimParams(n_sub=n_sub)
    state = dyn.initial_state(model)
    states = [state]
    for i in range(n):
        t = i * args.dt
        if times is None:
            row = min(i, len(u_tab) - 1) if args.excite else 0
        else:
            row = max(int(np.searchsorted(times, t + 1e-12, side="right")) - 1, 0)
        try:
            state = dyn.step(model, state, u_tab[row], args.dt, params)
        except dyn.SimulationDiverged as e:
            dyn.write_trajectory(args.out, states)
            raise CliError(f"simulation diverged at t={t:.4f}: {e}")
        states.append(state)
    dyn.write_trajectory(args.out, states)
    print(f"wrote {len(states)} states to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from dataclasses import replace

    from .learn.sac import SACConfig
    from .pipeline import ALGO_KIND, RUNNERS, StageConfig

    if args.model:
        _load_model(args.model)
    seed = _seed(args.seed)
    sac = SACConfig(hidden=tuple(args.hidden), seed=seed)
    try:
        cfg = StageConfig(task=args.task, M=args.M, N=args.N, d=args.d, seeds=(seed,),
                          model_path=args.model, ref_path=args.ref, episode_len=args.episode_len,
                          sac=sac, warmup=args.warmup, eval_every=args.eval_every,
                          eval_episodes=args.eval_episodes)
    except ValueError as e:
        raise CliError(str(e), EXIT_INVALID)
    if args.sar_collection:
        cfg = replace(cfg, sar_collection=args.sar_collection)
    rec = RUNNERS[ALGO_KIND[args.algo]](cfg, seed, out=args.out)
    print(f"{rec.kind} seed {seed}: max return {rec.max_return:.3f} over {rec.steps} steps "
          f"({rec.wall_clock:.1f} s) -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .learn.train import evaluate, load_checkpoint
    from .pipeline import env_from_checkpoint_meta

    try:
        policy, stats, meta = load_checkpoint(args.policy)
    except OSError as e:
        raise CliError(f"{args.policy}: {e.strerror}")
    except (KeyError, ValueError) as e:
        raise CliError(f"{args.policy}: {e}", EXIT_INVALID)
    if "model" not in meta:
        raise CliError(f"{args.policy}: checkpoint carries no environment description", EXIT_INVALID)
    env = env_from_checkpoint_meta(meta)
    rng = np.random.default_rng(_seed(args.seed))
    ev = evaluate(env, policy, stats, args.episodes, rng, deterministic=args.deterministic)
    print(json.dumps({"mean_return": ev.mean, "std_return": ev.std, "returns": ev.returns,
                      "lengths": ev.lengths, "deterministic": args.deterministic}, indent=1))
    return EXIT_OK


def cmd_compare(args) -> int:
    from .pipeline import compare, format_table

    missing = [d for d in args.runs if not (Path(d) / "run.json").exists()]
    if missing:
        raise CliError("no run.json in: " + ", ".join(missing), EXIT_INVALID)
    rep = compare(args.runs, args.out)
    print(format_table(rep), end="")
    return EXIT_OK


def rollout(run_dir, seed: int = 0):
    """One deterministic episode of a run's policy; returns times, q, act and names."""
    from .learn.train import load_checkpoint
    from .pipeline import env_from_checkpoint_meta
    from .tasks import normalize_obs

    policy, stats, meta = load_checkpoint(Path(run_dir) / "policy.json")
    env = env_from_checkpoint_meta(meta)
    obs = env.reset(np.random.default_rng(seed))
    ts, qs, acts = [env.state.t], [env.state.q.copy()], [env.state.act.copy()]
    done = False
    while not done:
        obs, _, done, info = env.step(policy.act(normalize_obs(obs, stats), deterministic=True))
        if info.diverged:
            break
        ts.append(env.state.t)
        qs.append(env.state.q.copy())
        acts.append(env.state.act.copy())
    return (np.array(ts), np.array(qs), np.array(acts), env.coord_names,
            [m.name for m in env.model.muscles])


def _export_series(path: Path, fmt: str, x, ys, xlabel, names, title):
    if fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join([xlabel] + list(names)) + "\n")
            for i in range(len(x)):
                fh.write(",".join(repr(float(v)) for v in [x[i], *ys[i]]) + "\n")
        return
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for j, n in enumerate(names):
        ax.plot(x, ys[:, j], label=n, lw=1)
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    if len(names) <= 12:
        ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_export(args) -> int:
    from .learn.train import read_curve

    run = Path(args.run)
    if not (run / "run.json").exists():
        raise CliError(f"{run}: not a run directory", EXIT_INVALID)
    plots = [p.strip() for p in args.plots.split(",") if p.strip()]
    bad = [p for p in plots if p not in ("joints", "activations", "returns")]
    if bad:
        raise CliError(f"unknown plots: {bad}", EXIT_INVALID)
    out = Path(args.out) if args.out else run / "export"
    out.mkdir(parents=True, exist_ok=True)
    ext = args.format
    written = []
    if "returns" in plots:
        curve = np.array(read_curve(run / "returns.csv")).reshape(-1, 3)
        p = out / f"returns.{ext}"
        _export_series(p, ext, curve[:, 0], curve[:, 1:], "step", ["mean_return", "std_return"],
                       "evaluation return")
        written.append(p)
    if "joints" in plots or "activations" in plots:
        t, q, act, qn, mn = rollout(run, _seed(0))
        if "joints" in plots:
            p = out / f"joints.{ext}"
            _export_series(p, ext, t, q, "t", qn, "joint coordinates")
            written.append(p)
        if "activations" in plots:
            p = out / f"activations.{ext}"
            _export_series(p, ext, t, act, "t", mn, "muscle activations")
            written.append(p)
    for p in written:
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="myoctrl", description="Planar musculoskeletal control toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a model file")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("census", help="check a census manifest against expected counts")
    p.add_argument("manifest")
    p.add_argument("--expected", default=None)
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("simulate", help="forward-simulate a model and write a trajectory CSV")
    p.add_argument("model")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--passive", action="store_true", help="zero excitation")
    g.add_argument("--excite", metavar="CSV", help="excitation table (header: [t,] muscle names)")
    p.add_argument("--dt", type=float, default=1e-3, help="output/control period in seconds")
    p.add_argument("--seconds", type=float, default=1.0)
    p.add_argument("--substeps", type=int, default=None,
                   help="integrator substeps per period (default: substep <= 1 ms)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="run one algorithm for one seed")
    p.add_argument("--task", choices=("walk", "exo", "prosthetic", "pendulum"), default="walk")
    p.add_argument("--algo", choices=("tsht", "e2e", "sar", "sar-ours"), default="tsht")
    p.add_argument("--model", default=None)
    p.add_argument("--ref", default=None)
    p.add_argument("-M", type=int, default=150_000)
    p.add_argument("-N", type=int, default=200_000)
    p.add_argument("-d", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episode-len", type=int, default=1000)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--eval-every", type=int, default=5000)
    p.add_argument("--eval-episodes", type=int, default=5)
    p.add_argument("--hidden", type=int, nargs="+", default=[64, 64])
    p.add_argument("--sar-collection", choices=("full", "cluster"), default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=int, default=5)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="tabulate max returns of finished runs")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export", help="export plots or tables from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--plots", default="joints,activations,returns")
    p.add_argument("--format", choices=("svg", "csv"), default="svg")
    p.add_argument("--out", default=None, help="output directory (default: <run>/export)")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except CliError as e:
        print(f"myoctrl: {e}", file=sys.stderr)
        return e.code
    except Exception as e:     # unexpected failures are runtime errors, not validation failures
        print(f"myoctrl: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
