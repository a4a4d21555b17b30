"""Run configuration, artifact writers and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .certificate import Certificate, _plain
from .params import MapParams, ParamError

DEFAULTS = {
    "theta": 0.01,
    "delta": 0.004,
    "r": 1.0 / 32.0,
    "epsilon": 1e-3,
    "b": None,
    "beta": None,
    "a": 2.0,
    "eta": 2e-4,
    "eta.sweep": [4e-4, 2e-4, 1e-4],
    "seed": 0,
    "grid.certify": 512,
    "grid.distance": 512,
    "grid.critical": 512,
    "perturb.count": 5,
    "perturb.amplitude": 1e-3,
    "trap.iters": 10,
    "trap.samples": 10_000,
    "cover.balls": 10,
    "cover.radius": 1.0 / 128.0,  # sup radius: a box of side 1/64
    "cover.bins": 256,
    "cover.m_max": 20,
    "cover.points": 1_000_000,
    "growth.length": 1e-3,
    "ball.iters": 100,
}

GRID_KEYS = ("grid.certify", "grid.distance", "grid.critical")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key or invariant."""

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        super().__init__(f"config violation: {field}" + (f" ({detail})" if detail else ""))


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key):
        return self.values[key]

    def params(self) -> MapParams:
        v = self.values
        return MapParams(
            theta=float(v["theta"]),
            delta=float(v["delta"]),
            r=float(v["r"]),
            epsilon=float(v["epsilon"]),
            b=None if v["b"] is None else float(v["b"]),
            beta=None if v["beta"] is None else float(v["beta"]),
            eta=float(v["eta"]),
            a=float(v["a"]),
        )

    def canonical(self) -> str:
        return json.dumps(_plain(self.values), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def validate(self) -> "RunConfig":
        for key in GRID_KEYS:
            n = self.values[key]
            if not (isinstance(n, int) and 128 <= n <= 2048 and n & (n - 1) == 0):
                raise ConfigError(key, "grid sizes must be powers of two in [128, 2048]")
        etas = self.values["eta.sweep"]
        if not (isinstance(etas, list) and etas and all(isinstance(e, (int, float)) and e > 0 for e in etas)):
            raise ConfigError("eta.sweep", "must be a nonempty list of positive numbers")
        for key in ("perturb.count", "trap.iters", "trap.samples", "cover.balls", "cover.bins", "cover.m_max", "cover.points", "ball.iters", "seed"):
            if not isinstance(self.values[key], int) or self.values[key] < 0:
                raise ConfigError(key, "must be a nonnegative integer")
        try:
            self.params()
        except ParamError as exc:
            raise ConfigError(exc.invariant, str(exc)) from exc
        return self


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the flat JSON file, then explicit overrides; unknown keys are rejected."""
    values = dict(DEFAULTS)
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from exc
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        for key, val in data.items():
            if key not in DEFAULTS:
                raise ConfigError(key, "unknown key")
            values[key] = val
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    return RunConfig(values).validate()


# ---------------------------------------------------------------- writers


def dumps(obj) -> str:
    """Deterministic JSON; floats use the shortest round-trip repr."""
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def _cell(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    if hasattr(v, "item"):
        return _cell(v.item())
    return "" if v is None else str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(h) for h in header]
            w.writerow([_cell(v) for v in row])
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# ---------------------------------------------------------------- manifest


def resolve_out(out, default: str = "endolab_out") -> Path:
    env = os.environ.get("ENDOLAB_OUT")
    return Path(env or out or default)


@dataclass
class Manifest:
    out: Path
    command: str
    config: RunConfig
    certificates: list = field(default_factory=list)
    wall_clock: float = 0.0
    reported: dict = field(default_factory=dict)

    def add(self, *certs: Certificate):
        self.certificates.extend(certs)

    @property
    def failed(self):
        return [c for c in self.certificates if not c.passed]

    def artifacts(self):
        """Every file under the output directory except the manifest itself."""
        out = []
        for p in sorted(self.out.rglob("*")):
            if p.is_file() and p.name != "manifest.json":
                out.append({"path": p.relative_to(self.out).as_posix(), "sha256": sha256_file(p), "bytes": p.stat().st_size})
        return out

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_sha256": self.config.digest(),
            "config": self.config.values,
            "artifacts": self.artifacts(),
            "certificates": [{"lemma": c.lemma, "passed": c.passed, "margin": c.margin} for c in self.certificates],
            "summary": {
                "total": len(self.certificates),
                "passed": len(self.certificates) - len(self.failed),
                "failed": [c.lemma for c in self.failed],
            },
            "reported": self.reported,
            "wall_clock_seconds": self.wall_clock,
        }

    def write(self) -> Path:
        return write_json(self.out / "manifest.json", self.to_dict())
