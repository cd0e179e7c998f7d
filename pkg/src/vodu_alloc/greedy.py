"""Greedy baseline: place each arriving user where pool power grows least.

Only vO-DUs that stay feasible after taking the user are candidates; ties go
to the lowest index.  Users are never moved once placed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import RejectionError
from .model import UNASSIGNED, Assignment, Instance, vdu_feasible, vdu_power_w


@dataclass
class PoolState:
    """Current placement of users on the pool during a fold over arrivals."""

    members: list
    loads: list

    @classmethod
    def empty(cls, m_count: int) -> "PoolState":
        return cls(members=[[] for _ in range(m_count)], loads=[0.0] * m_count)

    def add(self, user, cpus, m):
        self.members[m].append(user)
        self.loads[m] += cpus


@dataclass
class GreedyTrace:
    chosen: list = field(default_factory=list)
    marginal_w: list = field(default_factory=list)
    candidates: list = field(default_factory=list)

    @property
    def violations(self) -> int:
        return sum(1 for m in self.chosen if m == UNASSIGNED)


def feasible_vdus(model, demands, state: PoolState, user: int) -> list:
    """vO-DUs that keep capacity, latency and stability satisfied after adding ``user``."""
    return [
        m
        for m in range(model.m_count)
        if vdu_feasible(model, demands, state.members[m] + [user], m)
    ]


def marginal_power_w(model, state: PoolState, cpus: float, m: int) -> float:
    z = state.loads[m]
    return vdu_power_w(model, z + cpus, m) - vdu_power_w(model, z, m)


def _choose(model, demands, state, user):
    candidates = feasible_vdus(model, demands, state, user)
    if not candidates:
        raise RejectionError(f"no feasible vO-DU for user {user}")
    cpus = demands[user].cpus
    costs = [marginal_power_w(model, state, cpus, m) for m in candidates]
    best = min(range(len(candidates)), key=lambda i: (costs[i], candidates[i]))
    return candidates[best], costs[best], len(candidates)


def greedy_assign(model, state: PoolState, demands, user: int) -> int:
    """vO-DU index for ``user`` given the current pool state.

    Raises :class:`RejectionError` if no vO-DU can take the user.
    """
    return _choose(model, demands, state, user)[0]


def greedy_solve(instance: Instance, arrival_order=None):
    """Fold the greedy rule over the users in ``arrival_order``.

    Returns ``(assignment, trace)``. Rejected users stay unassigned and show
    up in the trace with vO-DU ``-1``.
    """
    model, demands = instance.model, instance.demands
    order = list(range(len(demands))) if arrival_order is None else list(arrival_order)
    if sorted(order) != list(range(len(demands))):
        raise ValueError("arrival_order must be a permutation of the demand indices")
    state = PoolState.empty(model.m_count)
    vec = [UNASSIGNED] * len(demands)
    trace = GreedyTrace()
    for user in order:
        try:
            m, cost, n_cand = _choose(model, demands, state, user)
        except RejectionError:
            trace.chosen.append(UNASSIGNED)
            trace.marginal_w.append(0.0)
            trace.candidates.append(0)
            continue
        state.add(user, demands[user].cpus, m)
        vec[user] = m
        trace.chosen.append(m)
        trace.marginal_w.append(cost)
        trace.candidates.append(n_cand)
    return Assignment(vec), trace
