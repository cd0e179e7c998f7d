"""Queueing, latency and power model of a vO-DU pool.

Every function here is pure. Users are referred to by their index in the
demand list; an :class:`Assignment` maps each user index to a vO-DU index
(or ``-1`` while the user is still unassigned).

Units: CPU usage ``z`` is in CPU units, rates in packets per second, packet
cost in CPU cycles, frequencies in cycles per second, delays in seconds and
power in watts.  The power curve is evaluated on utilization ``z / z_max`` and
an empty vO-DU is treated as switched off (0 W).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import DomainError, InstabilityError

POWER_EXPONENT = 1.4
UNASSIGNED = -1


class UserKind(str, enum.Enum):
    VSC = "vsc"
    TOLERANT = "tolerant"


@dataclass(frozen=True)
class Demand:
    """One end-user's request.

    ``arrival_rate_pps`` is the VSC service rate into the network for a
    camera, and the M/M/1 arrival rate for a latency-tolerant user.
    ``packet_size_cycles`` is the per-packet processing cost and must be zero
    for tolerant users.
    """

    kind: UserKind
    cpus: float
    arrival_rate_pps: float
    packet_size_cycles: float = 0.0
    home_o_ru: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", UserKind(self.kind))
        if not self.cpus > 0:
            raise DomainError(f"cpus must be > 0, got {self.cpus}")
        if not self.arrival_rate_pps > 0:
            raise DomainError(f"arrival_rate_pps must be > 0, got {self.arrival_rate_pps}")
        if self.kind is UserKind.VSC and not self.packet_size_cycles > 0:
            raise DomainError("a VSC demand needs packet_size_cycles > 0")
        if self.kind is UserKind.TOLERANT and self.packet_size_cycles != 0:
            raise DomainError("a tolerant demand must have packet_size_cycles == 0")
        if self.home_o_ru < 0:
            raise DomainError(f"home_o_ru must be >= 0, got {self.home_o_ru}")

    @property
    def is_vsc(self) -> bool:
        return self.kind is UserKind.VSC

    @classmethod
    def vsc(cls, cpus, rate_pps, packet_cycles, o_ru=0) -> "Demand":
        return cls(UserKind.VSC, cpus, rate_pps, packet_cycles, o_ru)

    @classmethod
    def tolerant(cls, cpus, rate_pps, o_ru=0) -> "Demand":
        return cls(UserKind.TOLERANT, cpus, rate_pps, 0.0, o_ru)


@dataclass(frozen=True)
class VduParams:
    z_max: float
    cpu_freq_hz: float
    p_idle_w: float
    p_full_w: float


_OVERRIDABLE = ("z_max", "cpu_freq_hz", "p_idle_w", "p_full_w")


@dataclass(frozen=True)
class PoolModel:
    """Static parameters of the vO-DU pool.

    The pool is homogeneous by default. ``overrides`` maps a vO-DU index to a
    dict overriding any of ``z_max``, ``cpu_freq_hz``, ``p_idle_w`` and
    ``p_full_w`` for that vO-DU only.
    """

    m_count: int
    z_max: float
    cpu_freq_hz: float
    p_idle_w: float
    p_full_w: float
    cycles_per_packet: float
    o_ru_count: int
    distances_m: tuple
    propagation_speed_mps: float = 3.0e8
    latency_threshold_s: float = 0.01
    overrides: Mapping[int, Mapping[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        dist = tuple(tuple(float(d) for d in row) for row in self.distances_m)
        object.__setattr__(self, "distances_m", dist)
        object.__setattr__(
            self, "overrides", {int(k): dict(v) for k, v in dict(self.overrides).items()}
        )
        if self.m_count < 1:
            raise DomainError("m_count must be >= 1")
        if self.o_ru_count < 1:
            raise DomainError("o_ru_count must be >= 1")
        if len(dist) != self.o_ru_count or any(len(r) != self.m_count for r in dist):
            raise DomainError("distances_m must be an o_ru_count x m_count matrix")
        if any(d < 0 for row in dist for d in row):
            raise DomainError("distances must be >= 0")
        if not self.propagation_speed_mps > 0:
            raise DomainError("propagation_speed_mps must be > 0")
        if not self.latency_threshold_s > 0:
            raise DomainError("latency_threshold_s must be > 0")
        if not self.cycles_per_packet > 0:
            raise DomainError("cycles_per_packet must be > 0")
        for m, over in self.overrides.items():
            if not 0 <= m < self.m_count:
                raise DomainError(f"override for unknown vO-DU {m}")
            unknown = set(over) - set(_OVERRIDABLE)
            if unknown:
                raise DomainError(f"cannot override {sorted(unknown)}")
        for m in range(self.m_count):
            p = self.vdu(m)
            if not p.z_max > 0:
                raise DomainError("z_max must be > 0")
            if not p.cpu_freq_hz > 0:
                raise DomainError("cpu_freq_hz must be > 0")
            if not p.p_full_w >= p.p_idle_w >= 0:
                raise DomainError("need p_full_w >= p_idle_w >= 0")

    def vdu(self, m: int) -> VduParams:
        if not 0 <= m < self.m_count:
            raise DomainError(f"vO-DU index {m} out of range [0, {self.m_count})")
        over = self.overrides.get(m, {})
        return VduParams(
            z_max=over.get("z_max", self.z_max),
            cpu_freq_hz=over.get("cpu_freq_hz", self.cpu_freq_hz),
            p_idle_w=over.get("p_idle_w", self.p_idle_w),
            p_full_w=over.get("p_full_w", self.p_full_w),
        )

    @classmethod
    def line_topology(
        cls,
        m_count: int,
        o_ru_count: int = 1,
        spacing_m: float = 1000.0,
        base_distance_m: float = 1000.0,
        **kwargs,
    ) -> "PoolModel":
        """Pool whose O-RU ``n`` sits ``base + n * spacing`` metres from every vO-DU."""
        dist = [[base_distance_m + n * spacing_m] * m_count for n in range(o_ru_count)]
        return cls(m_count=m_count, o_ru_count=o_ru_count, distances_m=dist, **kwargs)


@dataclass(frozen=True)
class Assignment:
    user_to_vdu: tuple

    def __post_init__(self):
        object.__setattr__(self, "user_to_vdu", tuple(int(m) for m in self.user_to_vdu))

    @classmethod
    def empty(cls, n_users: int) -> "Assignment":
        return cls((UNASSIGNED,) * n_users)

    def __len__(self):
        return len(self.user_to_vdu)

    def __getitem__(self, i):
        return self.user_to_vdu[i]

    @property
    def complete(self) -> bool:
        return UNASSIGNED not in self.user_to_vdu

    def assign(self, user: int, m: int) -> "Assignment":
        vec = list(self.user_to_vdu)
        vec[user] = m
        return Assignment(vec)

    def members(self, m: int) -> list:
        return [u for u, v in enumerate(self.user_to_vdu) if v == m]


@dataclass(frozen=True)
class DelayBreakdown:
    propagation_s: float
    queueing_s: float
    computing_s: float

    @property
    def total_s(self) -> float:
        return self.propagation_s + self.queueing_s + self.computing_s


@dataclass
class ConstraintReport:
    capacity_violations: list = field(default_factory=list)  # vO-DU indices
    latency_violations: list = field(default_factory=list)  # VSC user indices
    stability_violations: list = field(default_factory=list)  # vO-DU indices

    @property
    def ok(self) -> bool:
        return not (self.capacity_violations or self.latency_violations or self.stability_violations)

    @property
    def violation_count(self) -> int:
        return (
            len(self.capacity_violations)
            + len(self.latency_violations)
            + len(self.stability_violations)
        )


def _check_indices(model: PoolModel, demands: Sequence[Demand], assignment: Assignment):
    if len(assignment) != len(demands):
        raise DomainError(
            f"assignment covers {len(assignment)} users but there are {len(demands)} demands"
        )
    for u, m in enumerate(assignment.user_to_vdu):
        if m != UNASSIGNED and not 0 <= m < model.m_count:
            raise DomainError(f"user {u} assigned to invalid vO-DU {m}")


def cpu_usage(demands: Sequence[Demand], assignment: Assignment, m: int) -> float:
    """CPU units in use on vO-DU ``m``: the sum of demands assigned to it."""
    if len(assignment) != len(demands):
        raise DomainError("assignment and demand list differ in length")
    if m < 0:
        raise DomainError(f"vO-DU index {m} out of range")
    return math.fsum(d.cpus for d, v in zip(demands, assignment.user_to_vdu) if v == m)


def power_curve(p_idle_w: float, p_full_w: float, u: float) -> float:
    """Power of an active server at utilization ``u`` in (0, 1]."""
    return p_idle_w + (p_full_w - p_idle_w) * (2.0 * u - u**POWER_EXPONENT)


def vdu_power_w(model: PoolModel, z: float, m: int = 0) -> float:
    """Power drawn by vO-DU ``m`` carrying ``z`` CPU units; 0 W when empty."""
    p = model.vdu(m)
    if z < 0 or z > p.z_max:
        raise DomainError(f"CPU usage {z} outside [0, {p.z_max}]")
    if z == 0:
        return 0.0
    return power_curve(p.p_idle_w, p.p_full_w, z / p.z_max)


def vdu_loads(model: PoolModel, demands: Sequence[Demand], assignment: Assignment) -> list:
    # fsum keeps loads independent of user order
    per_vdu = [[] for _ in range(model.m_count)]
    for d, m in zip(demands, assignment.user_to_vdu):
        if m != UNASSIGNED:
            per_vdu[m].append(d.cpus)
    return [math.fsum(c) for c in per_vdu]


def pool_power_w(model: PoolModel, demands: Sequence[Demand], assignment: Assignment) -> float:
    _check_indices(model, demands, assignment)
    if not assignment.complete:
        raise DomainError("pool power needs a complete assignment")
    return partial_pool_power_w(model, demands, assignment)


def partial_pool_power_w(model, demands, assignment) -> float:
    """Pool power counting assigned users only."""
    loads = vdu_loads(model, demands, assignment)
    return math.fsum(vdu_power_w(model, z, m) for m, z in enumerate(loads))


def service_capacity_pps(model: PoolModel, z: float, m: int = 0) -> float:
    return z * model.vdu(m).cpu_freq_hz / model.cycles_per_packet


def total_arrivals_pps(demands: Sequence[Demand], members: Sequence[int]) -> float:
    """VSCs contribute their service rate, tolerant users their arrival rate."""
    return math.fsum(demands[u].arrival_rate_pps for u in members)


def _vdu_delay(model, m, z, arrivals, demand) -> DelayBreakdown:
    freq = model.vdu(m).cpu_freq_hz
    gap = z * freq / model.cycles_per_packet - arrivals
    if not gap > 0:
        raise InstabilityError(
            f"vO-DU {m}: service capacity does not exceed arrivals (gap {gap:g} pps)"
        )
    return DelayBreakdown(
        propagation_s=model.distances_m[demand.home_o_ru][m] / model.propagation_speed_mps,
        queueing_s=1.0 / gap,
        computing_s=demand.packet_size_cycles / (z * freq),
    )


def delay_breakdown(
    model: PoolModel, demands: Sequence[Demand], assignment: Assignment, w: int
) -> DelayBreakdown:
    """Propagation, queueing and computing delay of VSC user ``w``."""
    _check_indices(model, demands, assignment)
    demand = demands[w]
    if not demand.is_vsc:
        raise DomainError(f"user {w} is not a VSC")
    m = assignment[w]
    if m == UNASSIGNED:
        raise DomainError(f"VSC {w} is not assigned")
    members = assignment.members(m)
    z = math.fsum(demands[u].cpus for u in members)
    return _vdu_delay(model, m, z, total_arrivals_pps(demands, members), demand)


def vdu_violations(model: PoolModel, demands: Sequence[Demand], members: Sequence[int], m: int):
    """Constraint status of one vO-DU hosting ``members``.

    Returns ``(capacity_ok, stable, late_vscs)``. Latency is only evaluated
    when the queue is stable; an unstable vO-DU reports every hosted VSC late.
    """
    if not members:
        return True, True, []
    p = model.vdu(m)
    z = math.fsum(demands[u].cpus for u in members)
    arrivals = total_arrivals_pps(demands, members)
    capacity_ok = z <= p.z_max
    stable = z * p.cpu_freq_hz / model.cycles_per_packet - arrivals > 0
    vscs = [u for u in members if demands[u].is_vsc]
    if not stable:
        return capacity_ok, False, vscs
    late = [
        u
        for u in vscs
        if not _vdu_delay(model, m, z, arrivals, demands[u]).total_s < model.latency_threshold_s
    ]
    return capacity_ok, True, late


def vdu_feasible(model, demands, members, m) -> bool:
    capacity_ok, stable, late = vdu_violations(model, demands, members, m)
    return capacity_ok and stable and not late


def check_constraints(
    model: PoolModel, demands: Sequence[Demand], assignment: Assignment
) -> ConstraintReport:
    """Evaluate capacity, latency and stability constraints on assigned users."""
    _check_indices(model, demands, assignment)
    report = ConstraintReport()
    for m in range(model.m_count):
        capacity_ok, stable, late = vdu_violations(model, demands, assignment.members(m), m)
        if not capacity_ok:
            report.capacity_violations.append(m)
        if not stable:
            report.stability_violations.append(m)
        report.latency_violations.extend(late)
    report.latency_violations.sort()
    return report


def mean_vsc_latency_s(model, demands, assignment) -> float:
    """Mean end-to-end delay over assigned VSCs on stable vO-DUs (NaN if none)."""
    delays = []
    for w, d in enumerate(demands):
        if not d.is_vsc or assignment[w] == UNASSIGNED:
            continue
        try:
            delays.append(delay_breakdown(model, demands, assignment, w).total_s)
        except InstabilityError:
            continue
    return math.fsum(delays) / len(delays) if delays else math.nan


@dataclass(frozen=True)
class Instance:
    """One allocation problem: a pool, its demands and the number of windows.

    Traffic is stationary inside a window, so every window poses the same
    single-window problem.
    """

    model: PoolModel
    demands: tuple
    window_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "demands", tuple(self.demands))
        if self.window_count < 1:
            raise DomainError("window_count must be >= 1")
        for i, d in enumerate(self.demands):
            if d.home_o_ru >= self.model.o_ru_count:
                raise DomainError(
                    f"demand {i} attached to O-RU {d.home_o_ru}, pool has {self.model.o_ru_count}"
                )

    @property
    def n_users(self) -> int:
        return len(self.demands)
