"""Claims, run configurations and JSON/CSV report writing with provenance."""
from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import os
import platform
import subprocess
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

SUBCOMMANDS = ("eig", "positivity", "psh-verify", "heat", "construct", "sibony", "suite")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (exit code 2)."""


@dataclass
class Claim:
    """One numeric statement with its tolerance.

    ``required`` claims decide the exit code; the others are reported
    verdicts (for instance whether a queried matrix happens to be psh).
    """
    criterion: int
    name: str
    value: float
    tolerance: float
    passed: bool
    relation: str = "<="
    required: bool = True

    def to_json(self) -> dict:
        return {"criterion": self.criterion, "name": self.name, "value": self.value,
                "tolerance": self.tolerance, "relation": self.relation, "passed": bool(self.passed),
                "required": self.required}


def claim_le(k, name, value, tol, required=True) -> Claim:
    value = float(value)
    return Claim(k, name, value, float(tol), bool(value <= tol), "<=", required)


def claim_ge(k, name, value, tol, required=True) -> Claim:
    value = float(value)
    return Claim(k, name, value, float(tol), bool(value >= tol), ">=", required)


def claim_flag(k, name, ok, required=True) -> Claim:
    return Claim(k, name, 1.0 if ok else 0.0, 1.0, bool(ok), "==", required)


def all_passed(claims) -> bool:
    return all(c.passed for c in claims if c.required)


@dataclass
class RunConfig:
    subcommand: str
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    grid: dict | None = None
    paths: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        known = {"subcommand", "seed", "tolerances", "grid", "paths", "params"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**data)


def threads_setting() -> int | None:
    """The ``KPSH_THREADS`` cap, validated; ``None`` when unset."""
    raw = os.environ.get("KPSH_THREADS")
    if raw is None or raw == "":
        return None
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"KPSH_THREADS must be a positive integer, got {raw!r}") from None
    if val < 1:
        raise ConfigError(f"KPSH_THREADS must be a positive integer, got {raw!r}")
    return val


def git_describe() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def provenance() -> dict:
    from . import __version__
    return {
        "kpsh": __version__,
        "git_describe": git_describe(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": threads_setting(),
    }


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and dataclass-like objects for ``json``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": obj.real.tolist(), "im": obj.imag.tolist()}
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if hasattr(obj, "to_json"):
        return jsonable(obj.to_json())
    return obj


def build_report(config: RunConfig, claims, results: dict | None = None) -> dict:
    claims = list(claims)
    return {
        "subcommand": config.subcommand,
        "passed": all_passed(claims),
        "config": config.to_json(),
        "claims": [c.to_json() for c in claims],
        "results": jsonable(results or {}),
        "provenance": provenance(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def write_json(path, report: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=False, allow_nan=True) + "\n")


def write_csv(path, header, rows) -> None:
    """Plot-ready CSV; floats use ``repr`` so the bytes depend only on the values."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(buf.getvalue().encode())


def claims_rows(claims):
    for c in claims:
        yield [c.criterion, c.name, float(c.value), c.relation, float(c.tolerance), int(c.passed)]


CLAIM_HEADER = ["criterion", "claim", "value", "relation", "tolerance", "passed"]
