"""Exact single-window solver: depth-first branch-and-bound plus a brute-force oracle.

Capacity only grows with load, so it is checked on every partial placement.
Stability and latency can recover when a vO-DU gains CPUs, so they are only
pruned optimistically (assuming the best possible help from users still to be
placed) and checked exactly on complete assignments.
"""

from __future__ import annotations

import enum
import itertools
import math
import time
from dataclasses import dataclass

from .errors import DomainError, ResourceError
from .greedy import greedy_solve
from .model import (
    POWER_EXPONENT,
    UNASSIGNED,
    Assignment,
    Instance,
    check_constraints,
    pool_power_w,
    vdu_loads,
    vdu_power_w,
)

BRUTE_FORCE_LIMIT = 10**6
DEFAULT_NODE_BUDGET = 5_000_000


class SolveStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class SolveResult:
    status: SolveStatus
    assignment: Assignment
    objective_w: float  # single-window pool power; inf when infeasible
    nodes_explored: int
    wall_time_s: float
    window_count: int = 1

    @property
    def total_objective_w(self) -> float:
        """Objective summed over all windows (identical windows)."""
        return self.objective_w * self.window_count


def _g(u):
    return 2.0 * u - u**POWER_EXPONENT


def lower_bound(model, partial: Assignment, demands) -> float:
    """Admissible bound on the best completion of ``partial``.

    Assigned users contribute their current pool power. Each unassigned user
    adds the smallest load-dependent increase it could cause on any vO-DU,
    taking the increase at the highest load that vO-DU could reach given the
    demand still outstanding (the power curve is concave, so later increases
    are smaller). Idle floors of vO-DUs that must still be switched on are
    added separately. With one user left the bound is its cheapest actual
    increase. Returns ``inf`` when some user fits nowhere.
    """
    loads = vdu_loads(model, demands, partial)
    params = [model.vdu(m) for m in range(model.m_count)]
    current = math.fsum(vdu_power_w(model, z, m) for m, z in enumerate(loads))
    rest = [demands[u].cpus for u, m in enumerate(partial.user_to_vdu) if m == UNASSIGNED]
    if not rest:
        return current
    if len(rest) == 1:
        # a lone user's cheapest true increase is the exact completion cost
        c = rest[0]
        incs = [
            vdu_power_w(model, loads[m] + c, m) - vdu_power_w(model, loads[m], m)
            for m, p in enumerate(params)
            if loads[m] + c <= p.z_max
        ]
        return current + min(incs) if incs else math.inf
    remaining = math.fsum(rest)
    return current + _completion_bound(params, loads, rest, remaining)


def _completion_bound(params, loads, rest, remaining):
    active = [m for m, z in enumerate(loads) if z > 0]
    inactive = [m for m, z in enumerate(loads) if z == 0]
    total = 0.0
    for c in rest:
        best = math.inf
        for m, p in enumerate(params):
            room = p.z_max - loads[m]
            if c > room:
                continue
            top = min(p.z_max - c, loads[m] + remaining - c)
            inc = (p.p_full_w - p.p_idle_w) * (_g((top + c) / p.z_max) - _g(top / p.z_max))
            best = min(best, inc)
        if best == math.inf:
            return math.inf
        total += best
    free = sum(params[m].z_max - loads[m] for m in active)
    overflow = remaining - free
    if overflow > 0:
        if not inactive:
            return math.inf
        widest = max(params[m].z_max for m in inactive)
        need = math.ceil(overflow / widest - 1e-12)
        if need > len(inactive):
            return math.inf
        total += need * min(params[m].p_idle_w for m in inactive)
    return total


def _symmetry_classes(model):
    """Label vO-DUs that are interchangeable when empty."""
    keys = {}
    labels = []
    for m in range(model.m_count):
        key = (model.vdu(m), tuple(row[m] for row in model.distances_m))
        labels.append(keys.setdefault(key, len(keys)))
    return labels


def _validate(instance: Instance):
    if not isinstance(instance, Instance):
        raise DomainError("expected an Instance")


class _Search:
    def __init__(self, instance: Instance, budget: int):
        self.model = instance.model
        self.demands = instance.demands
        self.budget = budget
        self.nodes = 0
        n = len(self.demands)
        # largest demand first, index breaks ties
        self.order = sorted(range(n), key=lambda u: (-self.demands[u].cpus, u))
        self.params = [self.model.vdu(m) for m in range(self.model.m_count)]
        self.labels = _symmetry_classes(self.model)
        self.best_obj = math.inf
        self.best_vec = None

    def offer(self, vec):
        a = Assignment(vec)
        if not check_constraints(self.model, self.demands, a).ok:
            return
        obj = pool_power_w(self.model, self.demands, a)
        if obj < self.best_obj:
            self.best_obj, self.best_vec = obj, list(vec)

    def _hopeless(self, m, members, depth):
        """True if no completion can make vO-DU ``m`` stable and on time."""
        if not members:
            return False
        model, p = self.model, self.params[m]
        z = math.fsum(self.demands[u].cpus for u in members)
        arrivals = math.fsum(self.demands[u].arrival_rate_pps for u in members)
        rest = self.order[depth:]
        room = p.z_max - z
        extra_cpu = min(room, math.fsum(self.demands[u].cpus for u in rest))
        freq = p.cpu_freq_hz
        # the most a vO-DU's queue gap can grow is by the positive per-user slack
        help_gap = math.fsum(
            max(0.0, self.demands[u].cpus * freq / model.cycles_per_packet - self.demands[u].arrival_rate_pps)
            for u in rest
            if self.demands[u].cpus <= room
        )
        gap = z * freq / model.cycles_per_packet - arrivals + help_gap
        if not gap > 0:
            return True
        vscs = [u for u in members if self.demands[u].is_vsc]
        for w in vscs:
            d = self.demands[w]
            fastest = (
                model.distances_m[d.home_o_ru][m] / model.propagation_speed_mps
                + 1.0 / gap
                + d.packet_size_cycles / ((z + extra_cpu) * freq)
            )
            if not fastest < model.latency_threshold_s:
                return True
        return False

    def run(self, vec, loads, members, depth):
        self.nodes += 1
        if self.nodes > self.budget:
            incumbent = None if self.best_vec is None else Assignment(self.best_vec)
            raise ResourceError(f"node budget {self.budget} exhausted", incumbent=incumbent)
        if depth == len(self.order):
            self.offer(vec)
            return
        rest = [self.demands[u].cpus for u in self.order[depth:]]
        current = math.fsum(vdu_power_w(self.model, z, m) for m, z in enumerate(loads))
        bound = current + _completion_bound(self.params, loads, rest, math.fsum(rest))
        # explore ties with the incumbent; only strictly better leaves replace it
        if bound > self.best_obj * (1 + 1e-12):
            return
        user = self.order[depth]
        c = self.demands[user].cpus
        tried_empty = set()
        for m in range(self.model.m_count):
            if loads[m] == 0:
                if self.labels[m] in tried_empty:
                    continue
                tried_empty.add(self.labels[m])
            if loads[m] + c > self.params[m].z_max:
                continue
            vec[user] = m
            loads[m] += c
            members[m].append(user)
            if not self._hopeless(m, members[m], depth + 1):
                self.run(vec, loads, members, depth + 1)
            members[m].pop()
            loads[m] = math.fsum(self.demands[u].cpus for u in members[m])
            vec[user] = UNASSIGNED


def solve_exact(instance: Instance, budget: int = DEFAULT_NODE_BUDGET) -> SolveResult:
    """Minimum-power complete assignment satisfying all constraints.

    Raises :class:`ResourceError` (carrying the incumbent) when ``budget``
    search nodes are not enough to prove optimality.
    """
    _validate(instance)
    start = time.perf_counter()
    search = _Search(instance, budget)
    n = len(instance.demands)
    if n:
        seed, _ = greedy_solve(instance)
        if seed.complete:
            search.offer(list(seed.user_to_vdu))
    search.run(
        [UNASSIGNED] * n,
        [0.0] * instance.model.m_count,
        [[] for _ in range(instance.model.m_count)],
        0,
    )
    elapsed = time.perf_counter() - start
    if search.best_vec is None:
        return SolveResult(
            SolveStatus.INFEASIBLE, Assignment.empty(n), math.inf, search.nodes, elapsed,
            instance.window_count,
        )
    return SolveResult(
        SolveStatus.OPTIMAL, Assignment(search.best_vec), search.best_obj, search.nodes, elapsed,
        instance.window_count,
    )


def brute_force_oracle(instance: Instance) -> SolveResult:
    """Enumerate every complete assignment and keep the cheapest feasible one."""
    _validate(instance)
    model, demands = instance.model, instance.demands
    n = len(demands)
    if model.m_count**n > BRUTE_FORCE_LIMIT:
        raise ResourceError(f"{model.m_count}^{n} assignments exceed the enumeration limit")
    start = time.perf_counter()
    best_obj, best = math.inf, None
    count = 0
    for vec in itertools.product(range(model.m_count), repeat=n):
        count += 1
        a = Assignment(vec)
        if not check_constraints(model, demands, a).ok:
            continue
        obj = pool_power_w(model, demands, a)
        if obj < best_obj:
            best_obj, best = obj, a
    elapsed = time.perf_counter() - start
    if best is None:
        return SolveResult(
            SolveStatus.INFEASIBLE, Assignment.empty(n), math.inf, count, elapsed,
            instance.window_count,
        )
    return SolveResult(SolveStatus.OPTIMAL, best, best_obj, count, elapsed, instance.window_count)
