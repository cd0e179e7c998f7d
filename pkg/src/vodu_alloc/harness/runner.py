"""Training runs, the load sweep, exact/greedy solves, the trade-off report and the width sweep.

Every run writes into ``config.out_dir``::

    metrics/<run_id>.csv       one MetricsRow per finished episode
    checkpoints/<run_id>.json  final actor/critic and optimizer state
    eval.csv                   EvalRow per (load level, algo, seed)
    report.csv                 mean energy/latency per (algo, level) with ranks
    solve.csv, solve.json      exact and greedy on the full scenario
    manifest.json              status of every run
    timings.json               wall-clock seconds per run
"""

from __future__ import annotations

import dataclasses
import math
import time
from pathlib import Path

from ..agents import load_actor, make_agent, save_agent, train_agent
from ..agents.rollout import evaluate_policy
from ..env import AllocationEnv
from ..errors import ConfigError, DataIntegrityError, DomainError, NumericError, ResourceError
from ..greedy import greedy_solve
from ..model import UNASSIGNED, mean_vsc_latency_s, partial_pool_power_w
from ..solver import SolveStatus, solve_exact
from .config import DRL_ALGOS, ExperimentConfig, level_instance
from .metrics import (
    EVAL_HEADER,
    METRICS_HEADER,
    EvalRow,
    Manifest,
    MetricsRow,
    read_rows,
    record_timing,
    write_rows,
)

TRAINING_FAILURES = (NumericError, DataIntegrityError, DomainError)


def training_env(config: ExperimentConfig) -> AllocationEnv:
    return AllocationEnv(config.scenario.instance(), config.mdp, pending_slot=config.pending_slot)


def _train_one(config, algo, seed, run_id, hidden=None):
    """Train one agent; returns ``(rows, agent)``."""
    env = training_env(config)
    agent = make_agent(algo, env.obs_size, env.n_actions, config=config.agent_config(algo, hidden), seed=seed)
    rows = []
    start = time.perf_counter()

    def log(step, summary):
        rows.append(
            MetricsRow(
                run_id, algo, seed, len(rows), step, summary.total_reward, summary.energy_w,
                summary.mean_latency_s, summary.violations,
            )
        )

    cap = config.budget.wall_clock_s
    stop = (lambda: time.perf_counter() - start > cap) if cap else None
    train_agent(agent, env, config.budget.steps, seed=seed, on_episode=log, should_stop=stop)
    return rows, agent, env


def _run_training(config, algo, seed, run_id, manifest, kind, hidden=None, extra=None):
    out = Path(config.out_dir)
    metrics_path = out / "metrics" / f"{run_id}.csv"
    ckpt_path = out / "checkpoints" / f"{run_id}.json"
    start = time.perf_counter()
    info = {"algo": algo, "seed": seed, **(extra or {})}
    try:
        rows, agent, env = _train_one(config, algo, seed, run_id, hidden)
    except TRAINING_FAILURES as exc:
        manifest.record(run_id, kind, "failed", error=f"{type(exc).__name__}: {exc}", **info)
        return None
    write_rows(metrics_path, METRICS_HEADER, rows)
    meta = {
        "algo": algo, "seed": seed, "config": config.fingerprint(), "obs_size": env.obs_size,
        "n_actions": env.n_actions, "hidden": list(agent.config.hidden),
    }
    save_agent(ckpt_path, agent, meta=meta)
    manifest.record(
        run_id, kind, "ok", metrics=str(metrics_path.relative_to(out)),
        checkpoint=str(ckpt_path.relative_to(out)), episodes=len(rows), **info,
    )
    record_timing(out, run_id, time.perf_counter() - start)
    return metrics_path


def train_run_id(algo, seed):
    return f"train-{algo}-s{seed}"


def run_training(config: ExperimentConfig) -> Manifest:
    """Train every DRL algo in the config once per seed."""
    if not config.drl_algos:
        raise ConfigError("training needs ppo and/or acer in algos")
    manifest = Manifest(config.out_dir)
    for algo in config.drl_algos:
        for seed in config.seeds:
            _run_training(config, algo, seed, train_run_id(algo, seed), manifest, "train")
    return manifest


def run_arch_sweep(config: ExperimentConfig) -> Manifest:
    """One training curve per hidden width per DRL algo per seed (two layers of that width)."""
    if not config.drl_algos:
        raise ConfigError("the width sweep needs ppo and/or acer in algos")
    manifest = Manifest(config.out_dir)
    for width in config.sweep.hidden_widths:
        for algo in config.drl_algos:
            for seed in config.seeds:
                run_id = f"sweep-{algo}-w{width}-s{seed}"
                _run_training(
                    config, algo, seed, run_id, manifest, "sweep",
                    hidden=(int(width), int(width)), extra={"width": int(width)},
                )
    return manifest


def _summary_energy(model, demands, vec, windows):
    """Energy over ``windows`` identical windows, counting only placed users."""
    return windows * partial_pool_power_w(model, demands, vec)


def _baseline_row(level, algo, inst, vec):
    violations = sum(1 for m in vec.user_to_vdu if m == UNASSIGNED) * inst.window_count
    return EvalRow(
        level, algo, "", _summary_energy(inst.model, inst.demands, vec, inst.window_count),
        mean_vsc_latency_s(inst.model, inst.demands, vec), violations, len(inst.demands),
    )


def eval_sweep(config: ExperimentConfig) -> tuple:
    """Compare greedy, exact and trained argmax policies at every load level.

    Returns ``(eval_path, manifest)``. Raises :class:`ConfigError` naming the
    algo when a needed checkpoint is missing.
    """
    out = Path(config.out_dir)
    actors = {}
    for algo in config.drl_algos:
        for seed in config.seeds:
            path = out / "checkpoints" / f"{train_run_id(algo, seed)}.json"
            if not path.exists():
                raise ConfigError(f"missing checkpoint for {algo} seed {seed}: {path}")
            actors[algo, seed] = load_actor(path)[0]
    manifest = Manifest(out)
    full = config.scenario.instance()
    rows = []
    for level in config.sweep.load_levels:
        inst = level_instance(config, level)
        for algo in config.algos:
            run_id = f"eval-{algo}-l{level}"
            if algo == "greedy":
                vec, _ = greedy_solve(inst)
                rows.append(_baseline_row(level, algo, inst, vec))
            elif algo == "exact":
                try:
                    res = solve_exact(inst)
                except ResourceError as exc:
                    manifest.record(run_id, "eval", "failed", error=str(exc), algo=algo, load_level=level)
                    continue
                if res.status is SolveStatus.INFEASIBLE:
                    manifest.record(run_id, "eval", "infeasible", algo=algo, load_level=level)
                    continue
                rows.append(_baseline_row(level, algo, inst, res.assignment))
            else:
                # list the full scenario too so the observation layout matches training
                env = AllocationEnv([inst, full], config.mdp, pending_slot=config.pending_slot)
                for seed in config.seeds:
                    s = evaluate_policy(env, actors[algo, seed], seed=seed, instance_index=0)
                    rows.append(
                        EvalRow(level, algo, str(seed), s.energy_w, s.mean_latency_s, s.violations, len(inst.demands))
                    )
            manifest.runs = [r for r in manifest.runs if r["run_id"] != run_id or r["status"] == "ok"]
    path = out / "eval.csv"
    write_rows(path, EVAL_HEADER, rows)
    manifest.record("eval", "eval", "ok", rows=len(rows), file="eval.csv")
    return path, manifest


@dataclasses.dataclass(frozen=True)
class ReportRow:
    algo: str
    load_level: float
    energy_w: float
    mean_latency_s: float
    violations: float
    energy_rank: int
    latency_rank: int


REPORT_HEADER = tuple(f.name for f in dataclasses.fields(ReportRow))


def _ranks(values):
    """1-based dense ranks, NaN last."""
    keys = sorted({v for v in values if not math.isnan(v)})
    worst = len(keys) + 1
    return [keys.index(v) + 1 if not math.isnan(v) else worst for v in values]


def _mean(vals):
    vals = [v for v in vals if not math.isnan(v)]
    return math.fsum(vals) / len(vals) if vals else math.nan


def tradeoff_report(eval_paths, out_path=None) -> list:
    """Energy/latency pairs per algo and load level, ranked on each axis within a level."""
    eval_paths = list(eval_paths)
    if not eval_paths:
        raise ConfigError("the trade-off report needs at least one eval file")
    rows = []
    for p in eval_paths:
        if not Path(p).exists():
            raise ConfigError(f"eval file not found: {p}")
        rows.extend(read_rows(p, EvalRow))
    if not rows:
        raise ConfigError("eval files contain no rows")
    groups = {}
    for r in rows:
        groups.setdefault((r.load_level, r.algo), []).append(r)
    report = []
    for level in sorted({lv for lv, _ in groups}):
        keys = [k for k in groups if k[0] == level]
        keys.sort(key=lambda k: k[1])
        energy = [_mean([r.energy_w for r in groups[k]]) for k in keys]
        latency = [_mean([r.mean_latency_s for r in groups[k]]) for k in keys]
        viol = [math.fsum(r.violations for r in groups[k]) / len(groups[k]) for k in keys]
        for k, e, lat, v, er, lr in zip(keys, energy, latency, viol, _ranks(energy), _ranks(latency)):
            report.append(ReportRow(k[1], level, e, lat, v, er, lr))
    if out_path is not None:
        write_rows(out_path, REPORT_HEADER, report)
    return report


def run_solve(config: ExperimentConfig) -> dict:
    """Exact and greedy on the full scenario; writes solve.csv (MetricsRow schema) and solve.json."""
    import json

    out = Path(config.out_dir)
    inst = config.scenario.instance()
    manifest = Manifest(out)
    greedy_vec, trace = greedy_solve(inst)
    doc = {"greedy": {
        "assignment": list(greedy_vec.user_to_vdu),
        "energy_w": _summary_energy(inst.model, inst.demands, greedy_vec, inst.window_count),
        "violations": trace.violations * inst.window_count,
    }}
    start = time.perf_counter()
    try:
        res = solve_exact(inst)
        doc["exact"] = {
            "status": res.status.value, "assignment": list(res.assignment.user_to_vdu),
            "energy_w": res.total_objective_w, "nodes_explored": res.nodes_explored,
        }
        manifest.record("solve-exact", "solve", "ok" if res.status is SolveStatus.OPTIMAL else "infeasible")
    except ResourceError as exc:
        doc["exact"] = {"status": "budget_exhausted", "error": str(exc)}
        manifest.record("solve-exact", "solve", "failed", error=str(exc))
    record_timing(out, "solve-exact", time.perf_counter() - start)
    rows = []
    alpha = config.mdp.alpha
    for algo in ("exact", "greedy"):
        entry = doc[algo]
        if "assignment" not in entry or entry.get("status") == "infeasible":
            continue
        vec = greedy_vec if algo == "greedy" else res.assignment
        rows.append(MetricsRow(
            f"solve-{algo}", algo, 0, 0, len(inst.demands) * inst.window_count,
            -alpha * entry["energy_w"], entry["energy_w"],
            mean_vsc_latency_s(inst.model, inst.demands, vec), entry.get("violations", 0),
        ))
    write_rows(out / "solve.csv", METRICS_HEADER, rows)
    (out / "solve.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest.record("solve-greedy", "solve", "ok")
    return doc
