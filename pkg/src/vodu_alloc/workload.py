"""Demand lists: a cluster-trace style CSV format and a seeded synthetic generator.

Trace files are UTF-8, comma separated, with this exact header::

    record_id,user_kind,cpu_request,rate_pps,packet_cycles,o_ru

``user_kind`` is ``vsc`` or ``tolerant``; ``packet_cycles`` must be 0 for
tolerant users.  See ``docs/trace_format.md`` for projecting real cluster
trace columns onto this schema.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError
from .model import Demand, Instance, PoolModel, UserKind

TRACE_HEADER = ("record_id", "user_kind", "cpu_request", "rate_pps", "packet_cycles", "o_ru")


@dataclass(frozen=True)
class TraceRecord:
    record_id: str
    user_kind: UserKind
    cpu_request: float
    rate_pps: float
    packet_cycles: float
    o_ru: int

    def __post_init__(self):
        object.__setattr__(self, "user_kind", UserKind(self.user_kind))
        if not self.cpu_request > 0:
            raise DomainError(f"cpu_request must be > 0, got {self.cpu_request}")
        if not self.rate_pps > 0:
            raise DomainError(f"rate_pps must be > 0, got {self.rate_pps}")
        if (self.packet_cycles > 0) != (self.user_kind is UserKind.VSC):
            raise DomainError("packet_cycles must be > 0 for vsc rows and 0 for tolerant rows")
        if self.o_ru < 0:
            raise DomainError(f"o_ru must be >= 0, got {self.o_ru}")

    def to_demand(self) -> Demand:
        return Demand(self.user_kind, self.cpu_request, self.rate_pps, self.packet_cycles, self.o_ru)

    @classmethod
    def from_demand(cls, record_id, demand: Demand) -> "TraceRecord":
        return cls(
            str(record_id), demand.kind, demand.cpus, demand.arrival_rate_pps,
            demand.packet_size_cycles, demand.home_o_ru,
        )


def _number(raw, name, line, integer=False):
    try:
        return int(raw) if integer else float(raw)
    except (TypeError, ValueError):
        raise ParseError(f"column {name!r}: not a number: {raw!r}", line) from None


def parse_trace_text(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing header row", 1) from None
    header = [h.strip() for h in header]
    if tuple(header) != TRACE_HEADER:
        missing = [c for c in TRACE_HEADER if c not in header]
        detail = f"missing column(s) {missing}" if missing else f"unexpected header {header}"
        raise ParseError(detail, 1)
    records = []
    for line, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(TRACE_HEADER):
            raise ParseError(f"expected {len(TRACE_HEADER)} fields, got {len(row)}", line)
        rid, kind, cpu, rate, cycles, o_ru = (cell.strip() for cell in row)
        if kind not in ("vsc", "tolerant"):
            raise ParseError(f"user_kind must be 'vsc' or 'tolerant', got {kind!r}", line)
        try:
            records.append(
                TraceRecord(
                    rid,
                    UserKind(kind),
                    _number(cpu, "cpu_request", line),
                    _number(rate, "rate_pps", line),
                    _number(cycles, "packet_cycles", line),
                    _number(o_ru, "o_ru", line, integer=True),
                )
            )
        except DomainError as exc:
            raise ParseError(str(exc), line) from None
    return records


def parse_trace(path) -> list:
    """Parse a trace file into :class:`TraceRecord` objects, preserving row order."""
    return parse_trace_text(Path(path).read_text(encoding="utf-8"))


def format_trace(demands) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for i, d in enumerate(demands):
        writer.writerow(
            [i, d.kind.value, repr(float(d.cpus)), repr(float(d.arrival_rate_pps)),
             repr(float(d.packet_size_cycles)), d.home_o_ru]
        )
    return buf.getvalue()


def write_trace(path, demands):
    Path(path).write_text(format_trace(demands), encoding="utf-8")


def load_demands(path) -> list:
    return [r.to_demand() for r in parse_trace(path)]


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the synthetic workload.

    CPU ranges are inclusive integer ranges. All cameras share one service
    rate ``vsc_rate_pps`` and one packet cost drawn once from
    ``packet_cycles_range``; ``capture_rate_pps`` must stay below the
    service rate.  Tolerant arrival rates are uniform on
    ``tolerant_rate_range``.
    """

    w_count: int = 6
    v_count: int = 6
    vsc_cpu_range: tuple = (1, 3)
    tolerant_cpu_range: tuple = (1, 3)
    vsc_rate_pps: float = 600.0
    capture_rate_pps: float = 500.0
    tolerant_rate_range: tuple = (200.0, 1200.0)
    packet_cycles_range: tuple = (1.0e6, 1.0e6)
    o_ru_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.w_count < 0 or self.v_count < 0:
            raise DomainError("user counts must be >= 0")
        for name in ("vsc_cpu_range", "tolerant_cpu_range", "tolerant_rate_range", "packet_cycles_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise DomainError(f"{name}: min {lo} > max {hi}")
            if not lo > 0:
                raise DomainError(f"{name}: values must be positive")
        if not self.vsc_rate_pps > self.capture_rate_pps > 0:
            raise DomainError("need vsc_rate_pps > capture_rate_pps > 0")
        if self.o_ru_count < 1:
            raise DomainError("o_ru_count must be >= 1")


def generate_synthetic(config: SyntheticConfig) -> list:
    """Cameras first, then tolerant users; deterministic per ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    beta = float(rng.uniform(*config.packet_cycles_range))
    demands = []
    lo, hi = config.vsc_cpu_range
    for c in rng.integers(lo, hi, endpoint=True, size=config.w_count):
        o_ru = int(rng.integers(config.o_ru_count))
        demands.append(Demand.vsc(float(c), config.vsc_rate_pps, beta, o_ru))
    lo, hi = config.tolerant_cpu_range
    cpus = rng.integers(lo, hi, endpoint=True, size=config.v_count)
    rates = rng.uniform(*config.tolerant_rate_range, size=config.v_count)
    o_rus = rng.integers(config.o_ru_count, size=config.v_count)
    for c, lam, o_ru in zip(cpus, rates, o_rus):
        demands.append(Demand.tolerant(float(c), float(lam), int(o_ru)))
    return demands


def build_arrivals(demands, shuffle: bool, seed=None) -> list:
    """Arrival order over demand indices: identity, or a seeded shuffle."""
    n = len(demands)
    if n == 0:
        raise DomainError("cannot order an empty demand list")
    if not shuffle:
        return list(range(n))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return [int(i) for i in rng.permutation(n)]


def random_small_instance(seed, m_range=(2, 3), max_users=7, min_users=2, heterogeneous=True) -> Instance:
    """A seeded small instance for solver cross-checks and baseline comparisons.

    Users draw 1-4 CPUs and are cameras or tolerant users with equal odds.
    With ``heterogeneous`` each vO-DU gets its own capacity (4, 6 or 8 CPUs)
    and idle draw (60-100 W), which is where myopic placement tends to lose.
    """
    rng = np.random.default_rng(seed)
    m_count = int(rng.integers(m_range[0], m_range[1], endpoint=True))
    n = int(rng.integers(min_users, max_users, endpoint=True))
    overrides = {}
    if heterogeneous:
        for m in range(m_count):
            overrides[m] = {"z_max": float(rng.choice([4.0, 6.0, 8.0])), "p_idle_w": float(rng.uniform(60, 100))}
    model = PoolModel.line_topology(
        m_count, z_max=8.0, cpu_freq_hz=2e9, p_idle_w=87.0, p_full_w=145.0,
        cycles_per_packet=1e6, latency_threshold_s=0.01, overrides=overrides,
    )
    demands = []
    for _ in range(n):
        c = float(rng.integers(1, 4, endpoint=True))
        if rng.random() < 0.5:
            demands.append(Demand.vsc(c, 600.0, 1e6))
        else:
            demands.append(Demand.tolerant(c, float(rng.uniform(200, 1200))))
    return Instance(model, demands)
