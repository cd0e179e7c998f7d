"""Plot-ready CSV outputs and the run manifest."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..errors import ConfigError


@dataclass(frozen=True)
class MetricsRow:
    run_id: str
    algo: str
    seed: int
    episode: int
    step: int
    reward: float
    energy_w: float
    mean_latency_s: float
    violations: int
    wall_clock_s: float = 0.0


METRICS_HEADER = tuple(f.name for f in fields(MetricsRow))


@dataclass(frozen=True)
class EvalRow:
    load_level: float
    algo: str
    seed: str  # empty for the deterministic baselines
    energy_w: float
    mean_latency_s: float
    violations: int
    n_users: int


EVAL_HEADER = tuple(f.name for f in fields(EvalRow))


def _fmt(value):
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in asdict(row).values()])


def read_rows(path, cls):
    """Read a CSV written by :func:`write_rows` back into ``cls`` instances."""
    types = {f.name: f.type for f in fields(cls)}
    casts = {"int": int, "float": float, "str": str}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != tuple(types):
            raise ConfigError(f"{path}: header does not match {cls.__name__}")
        return [cls(**{k: casts[types[k]](v) for k, v in rec.items()}) for rec in reader]


class Manifest:
    """Status of every run in an output directory; the single writer of manifest.json."""

    def __init__(self, out_dir):
        self.path = Path(out_dir) / "manifest.json"
        self.runs = []
        if self.path.exists():
            self.runs = json.loads(self.path.read_text(encoding="utf-8"))["runs"]

    def record(self, run_id, kind, status, **info):
        self.runs = [r for r in self.runs if r["run_id"] != run_id]
        self.runs.append({"run_id": run_id, "kind": kind, "status": status, **info})
        self.runs.sort(key=lambda r: r["run_id"])
        self.save()

    def save(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps({"runs": self.runs}, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @property
    def failed(self) -> list:
        return [r for r in self.runs if r["status"] == "failed"]


def record_timing(out_dir, run_id, seconds):
    """Wall-clock times live apart from metrics so reruns stay byte-identical."""
    path = Path(out_dir) / "timings.json"
    doc = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    doc[run_id] = seconds
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
