"""Experiment configuration: YAML documents mapped onto typed dataclasses.

Key names are normative; see ``docs/config.md``.  Unknown keys are errors so
typos never silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..agents import AcerConfig, PpoConfig
from ..env import MdpConfig
from ..errors import ConfigError, DomainError
from ..model import Demand, Instance, PoolModel
from ..workload import SyntheticConfig, generate_synthetic, load_demands

DRL_ALGOS = ("ppo", "acer")
ALL_ALGOS = ("ppo", "acer", "greedy", "exact")


@dataclass(frozen=True)
class PoolSpec:
    m_count: int = 4
    z_max: float = 10.0
    cpu_freq_hz: float = 2.0e9
    p_idle_w: float = 87.0
    p_full_w: float = 145.0
    cycles_per_packet: float = 1.0e6
    latency_threshold_s: float = 0.01
    o_ru_count: int = 1
    spacing_m: float = 1000.0
    base_distance_m: float = 1000.0
    propagation_speed_mps: float = 3.0e8

    def build(self) -> PoolModel:
        kw = dataclasses.asdict(self)
        m_count = kw.pop("m_count")
        return PoolModel.line_topology(m_count, **kw)


@dataclass(frozen=True)
class ScenarioSpec:
    pool: PoolSpec = field(default_factory=PoolSpec)
    synthetic: SyntheticConfig = field(
        default_factory=lambda: SyntheticConfig(vsc_cpu_range=(1, 4), tolerant_cpu_range=(1, 4), seed=8)
    )
    trace: str | None = None  # replaces the synthetic workload when set
    windows: int = 1

    def demands(self) -> list:
        return load_demands(self.trace) if self.trace else generate_synthetic(self.synthetic)

    def instance(self) -> Instance:
        return Instance(self.pool.build(), self.demands(), window_count=self.windows)


@dataclass(frozen=True)
class Budget:
    steps: int = 100_000
    wall_clock_s: float | None = None  # optional cap; makes runs timing-dependent

    def __post_init__(self):
        if self.steps < 1:
            raise DomainError("budget.steps must be >= 1")
        if self.wall_clock_s is not None and not self.wall_clock_s > 0:
            raise DomainError("budget.wall_clock_s must be > 0")


@dataclass(frozen=True)
class SweepSpec:
    hidden_widths: tuple = (16, 64, 256)
    load_levels: tuple = (0.25, 0.5, 0.75, 1.0)

    def __post_init__(self):
        if not self.hidden_widths or any(int(w) < 1 for w in self.hidden_widths):
            raise DomainError("sweep.hidden_widths must be positive")
        if not self.load_levels or any(not 0 < x <= 1 for x in self.load_levels):
            raise DomainError("sweep.load_levels must lie in (0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; defaults describe the desk scenario."""

    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    mdp: MdpConfig = field(default_factory=MdpConfig)
    pending_slot: bool = False
    algos: tuple = ALL_ALGOS
    seeds: tuple = (0,)
    budget: Budget = field(default_factory=Budget)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    acer: AcerConfig = field(default_factory=AcerConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    out_dir: str = "runs"

    def __post_init__(self):
        if not self.algos:
            raise DomainError("need at least one algo")
        bad = [a for a in self.algos if a not in ALL_ALGOS]
        if bad:
            raise DomainError(f"unknown algo(s) {bad}; choose from {list(ALL_ALGOS)}")
        if not self.seeds:
            raise DomainError("need at least one seed")
        if any(int(s) < 0 for s in self.seeds):
            raise DomainError("seeds must be non-negative")
        if self.mdp.windows_per_episode != self.scenario.windows:
            raise DomainError("mdp.windows_per_episode must equal scenario.windows")

    @property
    def drl_algos(self) -> tuple:
        return tuple(a for a in self.algos if a in DRL_ALGOS)

    def agent_config(self, algo: str, hidden=None):
        cfg = getattr(self, algo)
        cfg = dataclasses.replace(cfg, gamma=self.mdp.gamma)
        return dataclasses.replace(cfg, hidden=tuple(hidden)) if hidden is not None else cfg

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Apply command-line style overrides (seeds, algos, out_dir, budget_steps)."""
        updates = {}
        try:
            if kw.get("seeds") is not None:
                updates["seeds"] = tuple(int(s) for s in kw["seeds"])
            if kw.get("algos") is not None:
                updates["algos"] = tuple(kw["algos"])
            if kw.get("out_dir") is not None:
                updates["out_dir"] = str(kw["out_dir"])
            if kw.get("budget_steps") is not None:
                updates["budget"] = dataclasses.replace(self.budget, steps=int(kw["budget_steps"]))
            return dataclasses.replace(self, **updates)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def fingerprint(self) -> str:
        """Hash of the settings that shape a single run.

        The run list (seeds, algos) and the output location are left out; each
        checkpoint records its own algo and seed next to this hash.
        """
        doc = self.to_dict()
        for key in ("out_dir", "seeds", "algos"):
            doc.pop(key)
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, doc, where):
    """Instantiate a dataclass from a mapping, rejecting unknown keys."""
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(doc).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    kw = {}
    for key, value in doc.items():
        default = names[key].default
        if default is dataclasses.MISSING and names[key].default_factory is not dataclasses.MISSING:
            default = names[key].default_factory()
        if isinstance(value, list) and isinstance(default, tuple):
            value = tuple(
                _number(v, f"{where}.{key}") if isinstance(v, str) and any(isinstance(d, float) for d in default) else v
                for v in value
            )
        elif isinstance(default, float) and not isinstance(default, bool):
            value = _number(value, f"{where}.{key}")
        kw[key] = value
    try:
        return cls(**kw)
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _number(value, where):
    # YAML 1.1 reads exponent literals without a sign or dot (``1e6``) as strings
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {value!r}") from None


def _pairs(doc, key):
    return {k: tuple(v) if isinstance(v, list) else v for k, v in (doc.get(key) or {}).items()}


def config_from_dict(doc: dict) -> ExperimentConfig:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    allowed = {"scenario", "mdp", "pending_slot", "algos", "seeds", "budget", "agents", "sweep", "out_dir"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    sc = doc.get("scenario") or {}
    extra = sorted(set(sc) - {"pool", "workload", "windows"})
    if extra:
        raise ConfigError(f"scenario: unknown key(s) {extra}")
    wl = sc.get("workload") or {}
    extra = sorted(set(wl) - {"synthetic", "trace"})
    if extra:
        raise ConfigError(f"scenario.workload: unknown key(s) {extra}")
    defaults = ScenarioSpec()
    windows = int(sc.get("windows", 1))
    scenario = ScenarioSpec(
        pool=_build(PoolSpec, sc.get("pool"), "scenario.pool"),
        synthetic=_build(SyntheticConfig, wl["synthetic"], "scenario.workload.synthetic")
        if "synthetic" in wl else defaults.synthetic,
        trace=wl.get("trace"),
        windows=windows,
    )
    mdp_doc = dict(doc.get("mdp") or {})
    mdp_doc.setdefault("windows_per_episode", windows)
    agents = doc.get("agents") or {}
    extra = sorted(set(agents) - set(DRL_ALGOS))
    if extra:
        raise ConfigError(f"agents: unknown agent(s) {extra}")
    budget = doc.get("budget") or {}
    kw = dict(
        scenario=scenario,
        mdp=_build(MdpConfig, mdp_doc, "mdp"),
        ppo=_build(PpoConfig, _pairs(agents, "ppo"), "agents.ppo"),
        acer=_build(AcerConfig, _pairs(agents, "acer"), "agents.acer"),
        budget=_build(Budget, budget, "budget"),
        sweep=_build(SweepSpec, doc.get("sweep"), "sweep"),
    )
    for key in ("pending_slot", "out_dir"):
        if key in doc:
            kw[key] = doc[key]
    for key in ("algos", "seeds"):
        if key in doc:
            value = doc[key]
            kw[key] = tuple(value) if isinstance(value, (list, tuple)) else (value,)
    try:
        return ExperimentConfig(**kw)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    config = config_from_dict(doc)
    trace = config.scenario.trace
    if trace and not Path(trace).is_absolute():
        # trace paths in a file are relative to that file
        scenario = dataclasses.replace(config.scenario, trace=str(path.parent / trace))
        config = dataclasses.replace(config, scenario=scenario)
    return config


def level_instance(config: ExperimentConfig, level: float) -> Instance:
    """Scenario with the first ``round(level * W)`` cameras and ``round(level * V)`` tolerant users."""
    base = config.scenario.instance()
    cams = [d for d in base.demands if d.is_vsc]
    tol = [d for d in base.demands if not d.is_vsc]
    keep: list[Demand] = cams[: round(level * len(cams))] + tol[: round(level * len(tol))]
    if not keep:
        keep = (cams or tol)[:1]
    return Instance(base.model, keep, window_count=base.window_count)
