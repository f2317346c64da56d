"""Two-stage hierarchical training (TSHT) and the E2E / SAR / SAR-Ours baselines.

* TSHT: cluster-space (synergy) collection for M steps, PCA+ICA codec fit on
  the collected excitations, latent-space training for N steps warm-started
  from the collection policy's hidden layers and observation statistics.
* E2E: full muscle-space training for M + N steps.
* SAR: full muscle-space collection for M steps, codec, fresh latent training.
* SAR-Ours: synergy collection for M steps, codec, fresh latent training.

Every algorithm consumes exactly M + N environment steps.  Return curves
concatenate both stages, with training-stage steps offset by M.
"""

from __future__ import annotations

import json
import platform
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .learn.sac import SACConfig
from .learn.train import TrainConfig, TrainResult, save_checkpoint, train, write_curve
from .model import ModelSpec, load_model, model_to_dict, parse_model
from .represent import LatentCodec, fit_codec, make_interface
from .tasks import MuscleEnv, ReferenceTrajectory, TaskConfig, pendulum_task, task_preset

KINDS = ("TSHT", "E2E", "SAR", "SAR_OURS")
COLUMNS = {"TSHT": "Ours", "E2E": "E2E", "SAR": "SAR", "SAR_OURS": "SAR-Ours"}
ALGO_KIND = {"tsht": "TSHT", "e2e": "E2E", "sar": "SAR", "sar-ours": "SAR_OURS"}
REPORT_FOOTER = ("Absolute returns of the full-body (700-muscle) experiments are not reproducible "
                 "with the desk models; only the ordering between columns is comparable.")


@dataclass(frozen=True)
class StageConfig:
    task: str = "walk"
    M: int = 150_000
    N: int = 200_000
    d: int = 8
    seeds: tuple = (0, 1, 2)
    model_path: Optional[str] = None
    ref_path: Optional[str] = None
    episode_len: int = 1000
    sac: SACConfig = SACConfig()
    warmup: int = 1000
    eval_every: int = 5000
    eval_episodes: int = 5
    latent_scale: float = 2.0
    warm_start: bool = True          # TSHT only
    sar_collection: str = "full"     # action space of SAR's collection policy

    def __post_init__(self):
        if self.M <= 0 or self.N <= 0:
            raise ValueError("M and N must be positive")
        if self.d < 1:
            raise ValueError("d must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["sac"] = self.sac.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StageConfig":
        d = dict(d)
        d["seeds"] = tuple(d["seeds"])
        d["sac"] = SACConfig.from_dict(d["sac"])
        return cls(**d)


@dataclass
class RunRecord:
    kind: str
    seed: int
    task: str
    curve: list
    max_return: float
    wall_clock: float
    steps: int
    config: dict
    codec_file: Optional[str] = None
    build: dict = field(default_factory=dict)
    stage_steps: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["curve"] = [[int(s), float(m), float(sd)] for s, m, sd in self.curve]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        d = dict(d)
        d["curve"] = [tuple(c) for c in d["curve"]]
        return cls(**d)


def build_info() -> dict:
    return {"myoctrl": __version__, "numpy": np.__version__, "python": platform.python_version()}


def _max_return(curve) -> float:
    return float(max((m for _, m, _ in curve), default=float("nan")))


# ---------------------------------------------------------------------------
# environment plumbing


def load_task(cfg: StageConfig):
    if cfg.task == "pendulum":
        return pendulum_task()
    model = load_model(cfg.model_path) if cfg.model_path else None
    ref = None
    if cfg.ref_path:
        names = (model.coordinate_names if model is not None
                 else task_preset(cfg.task)[0].coordinate_names)
        prog = (names.index("root_x"),) if "root_x" in names else ()
        ref = ReferenceTrajectory.from_csv(cfg.ref_path, prog)
    model, ref, task_cfg = task_preset(cfg.task, model, ref, cfg.episode_len)
    return model, ref, task_cfg


def env_factory(model: ModelSpec, ref: ReferenceTrajectory, task_cfg: TaskConfig, interface):
    return lambda: MuscleEnv(model, ref, task_cfg, interface)


def _train_cfg(cfg: StageConfig, steps: int, seed: int, log: bool) -> TrainConfig:
    return TrainConfig(steps=steps, sac=replace(cfg.sac, seed=seed), warmup=cfg.warmup,
                       eval_every=cfg.eval_every, eval_episodes=cfg.eval_episodes, seed=seed,
                       log_excitations=log)


# ---------------------------------------------------------------------------
# stages


def run_collection(cfg: StageConfig, seed: int, interface: str = "cluster", task=None):
    """Train a collection policy for M steps; returns ``(TrainResult, dataset)``.

    The dataset holds the expanded full excitation ``u`` of every training step.
    """
    model, ref, task_cfg = task if task is not None else load_task(cfg)
    iface = make_interface(interface, model)
    res = train(env_factory(model, ref, task_cfg, iface), _train_cfg(cfg, cfg.M, seed, True))
    return res, res.excitations


def run_training(cfg: StageConfig, codec: LatentCodec, seed: int, init: TrainResult = None,
                 task=None) -> TrainResult:
    """Latent-space training for N steps; env actions are decoded by ``codec``."""
    model, ref, task_cfg = task if task is not None else load_task(cfg)
    iface = make_interface("latent", model, codec, cfg.latent_scale)
    tcfg = _train_cfg(cfg, cfg.N, seed + 10_000, False)
    if init is not None:
        return train(env_factory(model, ref, task_cfg, iface), tcfg,
                     init_policy=init.final_policy, init_stats=init.final_stats)
    return train(env_factory(model, ref, task_cfg, iface), tcfg)


def _two_stage(cfg: StageConfig, seed: int, kind: str, collect_space: str, warm: bool,
               out: Optional[Path]):
    t0 = time.perf_counter()
    task = load_task(cfg)
    col, data = run_collection(cfg, seed, collect_space, task)
    codec = fit_codec(data, cfg.d, seed)
    trn = run_training(cfg, codec, seed, col if warm else None, task)
    curve = list(col.curve) + [(s + cfg.M, m, sd) for s, m, sd in trn.curve]
    rec = RunRecord(kind=kind, seed=seed, task=cfg.task, curve=curve, max_return=_max_return(curve),
                    wall_clock=time.perf_counter() - t0, steps=col.steps_done + trn.steps_done,
                    config=cfg.to_dict(), build=build_info(),
                    stage_steps={"collection": col.steps_done, "training": trn.steps_done})
    if out is not None:
        rec.codec_file = "codec.json"
        _write_run(out, rec, task, trn, make_interface("latent", task[0], codec, cfg.latent_scale),
                   extra={"collection_policy.json": (col, make_interface(collect_space, task[0]))})
        codec.save(out / "codec.json")
        (out / "codec_report.json").write_text(json.dumps(codec.report, indent=1) + "\n")
    return rec


def run_tsht(cfg: StageConfig, seed: int = 0, out=None) -> RunRecord:
    return _two_stage(cfg, seed, "TSHT", "cluster", cfg.warm_start, _outdir(out))


def run_sar(cfg: StageConfig, seed: int = 0, out=None) -> RunRecord:
    return _two_stage(cfg, seed, "SAR", cfg.sar_collection, False, _outdir(out))


def run_sar_ours(cfg: StageConfig, seed: int = 0, out=None) -> RunRecord:
    return _two_stage(cfg, seed, "SAR_OURS", "cluster", False, _outdir(out))


def run_e2e(cfg: StageConfig, seed: int = 0, out=None) -> RunRecord:
    t0 = time.perf_counter()
    task = load_task(cfg)
    model, ref, task_cfg = task
    iface = make_interface("full", model)
    res = train(env_factory(model, ref, task_cfg, iface), _train_cfg(cfg, cfg.M + cfg.N, seed, False))
    rec = RunRecord(kind="E2E", seed=seed, task=cfg.task, curve=list(res.curve),
                    max_return=_max_return(res.curve), wall_clock=time.perf_counter() - t0,
                    steps=res.steps_done, config=cfg.to_dict(), build=build_info(),
                    stage_steps={"training": res.steps_done})
    out = _outdir(out)
    if out is not None:
        _write_run(out, rec, task, res, iface)
    return rec


RUNNERS = {"TSHT": run_tsht, "E2E": run_e2e, "SAR": run_sar, "SAR_OURS": run_sar_ours}


def _outdir(out) -> Optional[Path]:
    if out is None:
        return None
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _policy_meta(task, iface, extra=None) -> dict:
    model, ref, task_cfg = task
    meta = {"model": model_to_dict(model), "task": task_cfg.to_dict(),
            "reference": {"times": ref.times.tolist(), "frames": ref.frames.tolist(),
                          "progressive": list(ref.progressive)},
            "interface": iface.to_dict()}
    if extra:
        meta.update(extra)
    return meta


def _write_run(out: Path, rec: RunRecord, task, res: TrainResult, iface, extra=None):
    (out / "run.json").write_text(json.dumps(rec.to_dict(), indent=1) + "\n", encoding="utf-8")
    write_curve(out / "returns.csv", rec.curve)
    save_checkpoint(out / "policy.json", res.policy, res.stats, _policy_meta(task, iface))
    env = MuscleEnv(task[0], task[1], task[2], iface)
    (out / "manifest.json").write_text(json.dumps(
        {**env.manifest(), "seed": rec.seed, "kind": rec.kind, "build": rec.build}, indent=1) + "\n")
    for name, (r, itf) in (extra or {}).items():
        save_checkpoint(out / name, r.policy, r.stats, _policy_meta(task, itf))


def env_from_checkpoint_meta(meta: dict) -> MuscleEnv:
    from .represent import interface_from_dict

    model = parse_model(json.dumps(meta["model"]))
    r = meta["reference"]
    ref = ReferenceTrajectory(np.array(r["times"]), np.array(r["frames"]), tuple(r["progressive"]))
    return MuscleEnv(model, ref, TaskConfig.from_dict(meta["task"]),
                     interface_from_dict(meta["interface"], model))


# ---------------------------------------------------------------------------
# comparison report


def load_run(run_dir) -> RunRecord:
    return RunRecord.from_dict(json.loads((Path(run_dir) / "run.json").read_text(encoding="utf-8")))


def compare(records, out=None) -> dict:
    """Per-task table of max returns (mean and std over seeds) for the four algorithms.

    ``records`` are RunRecords or run directories.  Writes ``out`` (JSON),
    a sibling ``.txt`` table and one learning-curve SVG per task when ``out``
    is given.
    """
    recs = [r if isinstance(r, RunRecord) else load_run(r) for r in records]
    tasks = sorted({r.task for r in recs})
    report = {"columns": [COLUMNS[k] for k in KINDS], "tasks": {}, "missing": [],
              "footer": REPORT_FOOTER}
    for task in tasks:
        row = {}
        for kind in KINDS:
            vals = [r.max_return for r in recs if r.task == task and r.kind == kind]
            if not vals:
                report["missing"].append(f"{task}: {COLUMNS[kind]}")
                continue
            row[COLUMNS[kind]] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)),
                                  "n": len(vals),
                                  "seeds": sorted(r.seed for r in recs if r.task == task and r.kind == kind)}
        ours = row.get("Ours")
        others = [row[c]["mean"] for c in ("E2E", "SAR", "SAR-Ours") if c in row]
        entry = {"cells": row,
                 "ours_beats_e2e": bool(ours and "E2E" in row and ours["mean"] > row["E2E"]["mean"]),
                 "expected_ordering_holds": bool(ours and len(others) == 3
                                                 and all(ours["mean"] > o for o in others))}
        report["tasks"][task] = entry
    if out is not None:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(report, indent=1) + "\n", encoding="utf-8")
        out.with_suffix(".txt").write_text(format_table(report), encoding="utf-8")
        for task in tasks:
            plot_curves([r for r in recs if r.task == task], out.with_name(f"{out.stem}_{task}.svg"),
                        title=f"{task}: evaluation return")
    return report


def format_table(report: dict) -> str:
    cols = report["columns"]
    head = ["task"] + cols + ["ordering"]
    rows = []
    for task, entry in report["tasks"].items():
        cells = [task]
        for c in cols:
            v = entry["cells"].get(c)
            cells.append(f"{v['mean']:.2f} ± {v['std']:.2f}" if v else "missing")
        flag = "Ours > all" if entry["expected_ordering_holds"] else (
            "Ours > E2E" if entry["ours_beats_e2e"] else "not observed")
        cells.append(flag)
        rows.append(cells)
    widths = [max(len(str(r[i])) for r in [head] + rows) for i in range(len(head))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in [head] + rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    if report["missing"]:
        lines.append("")
        lines.append("missing runs: " + ", ".join(report["missing"]))
    lines.append("")
    lines.append(report["footer"])
    return "\n".join(lines) + "\n"


def plot_curves(recs, path, title=""):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for kind in KINDS:
        rs = [r for r in recs if r.kind == kind and r.curve]
        if not rs:
            continue
        n = min(len(r.curve) for r in rs)
        steps = np.array([c[0] for c in rs[0].curve[:n]])
        vals = np.array([[c[1] for c in r.curve[:n]] for r in rs])
        mu, sd = vals.mean(axis=0), vals.std(axis=0)
        ax.plot(steps, mu, label=COLUMNS[kind])
        ax.fill_between(steps, mu - sd, mu + sd, alpha=0.2)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean evaluation return")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
