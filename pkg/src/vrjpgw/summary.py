"""Replayable run records and their JSON/CSV serialization."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

from . import __version__

__all__ = ["Metric", "RunSummary", "config_hash", "write_csv", "csv_text"]


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    raise TypeError(f"not JSON-serializable: {type(obj).__name__}")


def config_hash(config: dict) -> str:
    return hashlib.sha256(_canonical(config).encode()).hexdigest()[:16]


@dataclass
class Metric:
    estimate: float
    replicas: int
    stderr: Optional[float] = None

    def as_dict(self) -> dict:
        out = {"estimate": _clean(self.estimate), "replicas": int(self.replicas)}
        if self.stderr is not None:
            out["stderr"] = _clean(self.stderr)
        return out


def _clean(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


@dataclass
class RunSummary:
    """Inputs, seed, estimates and warnings of one experiment.

    ``timestamp`` and ``wall_time_s`` are kept under a separate ``volatile``
    key: everything else is a deterministic function of the config and seed.
    """

    command: str
    config: dict
    seed: int
    metrics: dict[str, Metric] = field(default_factory=dict)
    data: dict[str, Any] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    wall_time_s: float = 0.0
    timestamp: str = ""

    def add(self, name: str, estimate: float, replicas: int, stderr: Optional[float] = None):
        self.metrics[name] = Metric(estimate, replicas, stderr)

    def merge(self, other: "RunSummary", prefix: str = "") -> None:
        for k, m in other.metrics.items():
            self.metrics[prefix + k] = m
        self.warnings.extend(prefix + w for w in other.warnings)

    def as_dict(self, volatile: bool = True) -> dict:
        out = {
            "command": self.command,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "seed": self.seed,
            "tool_version": __version__,
            "metrics": {k: m.as_dict() for k, m in self.metrics.items()},
            "data": self.data,
            "warnings": list(self.warnings),
        }
        if volatile:
            out["volatile"] = {"timestamp": self.timestamp, "wall_time_s": round(self.wall_time_s, 3)}
        return out

    def to_json(self, volatile: bool = True) -> str:
        return json.dumps(self.as_dict(volatile), sort_keys=True, indent=2, default=_jsonable) + "\n"


def csv_text(header: Sequence[str], rows: Iterable[Sequence], meta: Optional[dict] = None) -> str:
    """CSV with a mandatory header; ``meta`` goes into leading ``# key=value`` lines."""
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _fmt(x):
    if hasattr(x, "item"):
        x = x.item()
    if isinstance(x, float):
        return repr(x)
    return x


def write_csv(path, header, rows, meta=None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(header, rows, meta))
