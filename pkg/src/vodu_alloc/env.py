"""Sequential allocation MDP: one step places one arriving user on a vO-DU.

Observation layout (length ``W + V + M``, plus 2 with ``pending_slot``)::

    [c_1 .. c_W, b_1 .. b_V, z_1 .. z_M (, pending_cpus, pending_is_vsc)]

Demands are divided by the pool's ``z_max``; loads are utilization fractions.
When the env cycles over several instances (e.g. load levels) the layout is
sized for the largest one and absent users read as zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, StateError
from .model import UNASSIGNED, Assignment, Instance, mean_vsc_latency_s, vdu_feasible, vdu_power_w
from .workload import build_arrivals


@dataclass(frozen=True)
class MdpConfig:
    gamma: float = 0.99
    alpha: float = 1e-4
    windows_per_episode: int = 1
    arrival_shuffle: bool = False
    infeasible_penalty: float = -1.0

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise DomainError("gamma must lie in [0, 1]")
        if not self.alpha > 0:
            raise DomainError("alpha must be > 0")
        if self.windows_per_episode < 1:
            raise DomainError("windows_per_episode must be >= 1")


@dataclass
class Transition:
    obs: np.ndarray
    action: int
    behavior_probs: np.ndarray
    reward: float
    next_obs: np.ndarray
    terminal: bool
    mask: np.ndarray = None
    next_mask: np.ndarray = None
    violation: bool = False


@dataclass
class WindowOutcome:
    energy_w: float
    mean_latency_s: float
    violations: int
    assignment: Assignment


@dataclass
class EpisodeSummary:
    windows: list = field(default_factory=list)
    total_reward: float = 0.0
    steps: int = 0

    @property
    def energy_w(self) -> float:
        """Pool power summed over the episode's windows."""
        return math.fsum(w.energy_w for w in self.windows)

    @property
    def mean_latency_s(self) -> float:
        vals = [w.mean_latency_s for w in self.windows if not math.isnan(w.mean_latency_s)]
        return math.fsum(vals) / len(vals) if vals else math.nan

    @property
    def violations(self) -> int:
        return sum(w.violations for w in self.windows)


class AllocationEnv:
    def __init__(self, instances, config: MdpConfig = MdpConfig(), pending_slot: bool = False):
        if isinstance(instances, Instance):
            instances = [instances]
        instances = list(instances)
        if not instances:
            raise DomainError("need at least one instance")
        model = instances[0].model
        for inst in instances:
            if inst.model != model:
                raise DomainError("all instances must share one pool model")
            if not inst.demands:
                raise DomainError("empty demand list")
        self.instances = instances
        self.model = model
        self.config = config
        self.pending_slot = pending_slot
        self.w_slots = max(sum(d.is_vsc for d in i.demands) for i in instances)
        self.v_slots = max(sum(not d.is_vsc for d in i.demands) for i in instances)
        self.n_actions = model.m_count
        self.obs_size = self.w_slots + self.v_slots + model.m_count + (2 if pending_slot else 0)
        self._z_max = [model.vdu(m).z_max for m in range(model.m_count)]
        self._rng = None
        self.instance = None

    # -- episode mechanics -------------------------------------------------

    def reset(self, seed=None, instance_index=None) -> np.ndarray:
        """Start an episode; the instance is drawn from the env's list unless given."""
        self._rng = np.random.default_rng(seed)
        if instance_index is None:
            instance_index = int(self._rng.integers(len(self.instances))) if len(self.instances) > 1 else 0
        self.instance = self.instances[instance_index]
        self.instance_index = instance_index
        demands = self.instance.demands
        self._static = np.zeros(self.w_slots + self.v_slots)
        w = v = 0
        for d in demands:
            if d.is_vsc:
                self._static[w] = d.cpus / self.model.z_max
                w += 1
            else:
                self._static[self.w_slots + v] = d.cpus / self.model.z_max
                v += 1
        self.summary = EpisodeSummary()
        self._window = 0
        self._start_window()
        return self.observe()

    def _start_window(self):
        n = len(self.instance.demands)
        self.arrivals = build_arrivals(self.instance.demands, self.config.arrival_shuffle, self._rng)
        self._pos = 0
        self._loads = [0.0] * self.model.m_count
        self._members = [[] for _ in range(self.model.m_count)]
        self._vec = [UNASSIGNED] * n
        self._window_violations = 0
        self._mask = None

    @property
    def done(self) -> bool:
        return self._window >= self.config.windows_per_episode

    @property
    def pending_user(self) -> int:
        if self.instance is None:
            raise StateError("env not reset")
        if self.done:
            raise StateError("episode is over")
        return self.arrivals[self._pos]

    def observe(self) -> np.ndarray:
        if self.instance is None:
            raise StateError("env not reset")
        loads = np.array([z / zm for z, zm in zip(self._loads, self._z_max)])
        parts = [self._static, loads]
        if self.pending_slot:
            if self.done:
                parts.append(np.zeros(2))
            else:
                d = self.instance.demands[self.pending_user]
                parts.append(np.array([d.cpus / self.model.z_max, 1.0 if d.is_vsc else 0.0]))
        return np.concatenate(parts)

    def action_mask(self) -> np.ndarray:
        """True where the pending user can join the vO-DU without breaking a constraint."""
        user = self.pending_user
        if self._mask is None:
            demands = self.instance.demands
            self._mask = np.array(
                [vdu_feasible(self.model, demands, self._members[m] + [user], m) for m in range(self.model.m_count)],
                dtype=bool,
            )
        return self._mask.copy()

    def pool_power_w(self) -> float:
        return math.fsum(vdu_power_w(self.model, z, m) for m, z in enumerate(self._loads))

    def assignment(self) -> Assignment:
        return Assignment(self._vec)

    def step(self, action: int, behavior_probs=None) -> Transition:
        if self.instance is None:
            raise StateError("env not reset")
        if self.done:
            raise StateError("step after terminal")
        obs = self.observe()
        mask = self.action_mask()
        user = self.pending_user
        violation = not mask.any()
        action = int(action)
        if violation:
            self._window_violations += 1
            reward = self.config.infeasible_penalty
        else:
            if not 0 <= action < self.n_actions:
                raise DomainError(f"action {action} out of range")
            if not mask[action]:
                raise DomainError(f"action {action} is masked for user {user}")
            self._members[action].append(user)
            self._loads[action] = math.fsum(self.instance.demands[u].cpus for u in self._members[action])
            self._vec[user] = action
            reward = -self.config.alpha * self.pool_power_w()
        self._pos += 1
        self._mask = None
        self.summary.total_reward += reward
        self.summary.steps += 1
        if self._pos == len(self.arrivals):
            a = self.assignment()
            self.summary.windows.append(
                WindowOutcome(
                    self.pool_power_w(),
                    mean_vsc_latency_s(self.model, self.instance.demands, a),
                    self._window_violations,
                    a,
                )
            )
            self._window += 1
            if not self.done:
                self._start_window()
        if behavior_probs is None:
            behavior_probs = np.where(mask, 1.0, 0.0) if mask.any() else np.full(self.n_actions, 1.0)
            behavior_probs = behavior_probs / behavior_probs.sum()
        next_mask = np.ones(self.n_actions, dtype=bool) if self.done else self.action_mask()
        return Transition(
            obs=obs,
            action=action,
            behavior_probs=np.asarray(behavior_probs, dtype=float),
            reward=reward,
            next_obs=self.observe(),
            terminal=self.done,
            mask=mask,
            next_mask=next_mask,
            violation=violation,
        )
