"""Run configuration, CSV/JSON outputs and binary checkpoints."""
from __future__ import annotations

import csv
import json
import math
import struct
import subprocess
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .solver import AcState
from .spectral import Field, Grid3, fwd, inv


class ConfigError(ValueError):
    """Invalid configuration document; ``line`` is 1-based or None."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None) -> None:
        self.line = line
        self.key = key
        self.detail = message
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


KINDS = ("well_prepared", "ill_prepared")


@dataclass(frozen=True)
class RunConfig:
    n: int
    epsilon: float
    T: float
    box: float = 2 * math.pi
    mu: float = 1.0
    dt: float | None = None
    cfl: float = 0.5
    kind: str = "well_prepared"
    seed: int = 0
    cadence: int = 1
    out: str = "out"
    name: str = "run"
    nonlinear: bool = True
    diffusion: bool = True

    def __post_init__(self) -> None:
        try:
            Grid3(self.n, self.box)
        except ValueError as exc:
            raise ConfigError(str(exc), key="n") from None
        for key in ("epsilon", "T", "box", "mu", "cfl"):
            v = getattr(self, key)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{key} must be a positive number, got {v!r}", key=key)
        if self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"dt must be a positive number, got {self.dt!r}", key="dt")
        if self.cadence < 1:
            raise ConfigError("cadence must be >= 1", key="cadence")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative", key="seed")
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {', '.join(KINDS)}", key="kind")

    @property
    def grid(self) -> Grid3:
        return Grid3(self.n, self.box)

    def steps(self) -> tuple[float, int]:
        """``(dt, n_steps)``; without an explicit dt the CFL number sets dt/dx."""
        dt = self.dt if self.dt is not None else self.cfl * self.grid.dx
        n = max(1, int(math.ceil(self.T / dt - 1e-9)))
        return self.T / n, n


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_REQUIRED = ("n", "epsilon", "T")


def _convert(key: str, raw: str, line: int):
    kind = _TYPES[key]
    try:
        if kind == "int":
            if not raw.lstrip("-").isdigit():
                raise ValueError
            return int(raw)
        if kind in ("float", "float | None"):
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}", line) from None


def parse_config(text: str) -> RunConfig:
    """Parse a flat ``key = value`` document; ``#`` starts a comment."""
    values: dict = {}
    lines: dict[str, int] = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"malformed line {raw!r}", no)
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}", no)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", no)
        values[key] = _convert(key, value, no)
        lines[key] = no
        if key == "n":
            try:
                Grid3(values["n"])
            except ValueError as exc:
                raise ConfigError(str(exc), no, "n") from None
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    try:
        return RunConfig(**values)
    except ConfigError as exc:
        if exc.key in lines:
            raise ConfigError(exc.detail, lines[exc.key], exc.key) from None
        raise


def format_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config`."""
    out = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# CSV series.

CSV_COLUMNS = ("time", "energy", "enstrophy_u", "enstrophy_B", "div_u", "div_B", "q_u_L4", "q_B_L4")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def record_row(rec) -> tuple[float, ...]:
    q = rec.q_norms
    return (
        rec.time,
        rec.energy,
        rec.enstrophy_u,
        rec.enstrophy_B,
        rec.div_u_norm,
        rec.div_B_norm,
        q.get(("Qu", 4, 0.0), float("nan")),
        q.get(("QB", 4, 0.0), float("nan")),
    )


def write_csv(records: Iterable, path: str | Path) -> None:
    """One row per record; missing L4 norms are written as ``nan``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in records:
            fh.write(",".join(_fmt(v) for v in record_row(rec)) + "\n")


def read_csv(path: str | Path) -> list[dict[str, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header!r}")
        return [dict(zip(CSV_COLUMNS, map(float, row))) for row in reader]


def write_table(rows: Sequence[dict], path: str | Path) -> None:
    """Generic CSV for harness tables; columns follow the first row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        cols = list(rows[0])
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")


# JSON reports.

def build_id() -> str:
    """``<version>+g<short hash>[.dirty]`` when run from a git checkout."""
    here = Path(__file__).resolve().parent
    try:
        sha = subprocess.run(
            ["git", "rev-parse", "--short=12", "HEAD"],
            cwd=here, capture_output=True, text=True, timeout=5, check=True,
        ).stdout.strip()
        dirty = subprocess.run(
            ["git", "status", "--porcelain", "--untracked-files=no"],
            cwd=here, capture_output=True, text=True, timeout=5, check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        return f"{__version__}+unknown"
    return f"{__version__}+g{sha}" + (".dirty" if dirty else "")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_report(document: dict, path: str | Path, config: RunConfig | None = None) -> dict:
    """Write a JSON report with config echo, build id and rate fits."""
    doc = {"build": build_id()}
    if config is not None:
        doc["config"] = format_config(config)
    doc.update(document)
    doc.setdefault("fits", {})
    doc = _jsonable(doc)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False, allow_nan=False)
        fh.write("\n")
    return doc


# Checkpoints.

MAGIC = b"ACMHD001"
_HEADER = struct.Struct("<8sIdddd")


class CheckpointError(ValueError):
    """Malformed checkpoint file; ``kind`` is magic, truncated or grid."""

    def __init__(self, kind: str, message: str) -> None:
        super().__init__(message)
        self.kind = kind


@dataclass(frozen=True)
class Checkpoint:
    """Raw checkpoint contents: header values and the eight physical blocks."""

    n: int
    length: float
    epsilon: float
    mu: float
    time: float
    blocks: np.ndarray  # (8, n, n, n), indexed [block, i1, i2, i3]

    @classmethod
    def from_state(cls, s: AcState) -> "Checkpoint":
        g = s.grid
        spec = np.concatenate([s.u.data, s.B.data, s.p.data[None], s.phi.data[None]])
        return cls(g.n, g.length, s.epsilon, s.mu, s.time, inv(spec, g.n))

    def to_state(self) -> AcState:
        g = Grid3(self.n, self.length)
        spec = fwd(self.blocks)
        return AcState(
            Field(g, spec[0:3], True),
            Field(g, spec[3:6], True),
            Field(g, spec[6], True),
            Field(g, spec[7], True),
            self.epsilon,
            self.time,
            self.mu,
        )

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, self.n, self.length, self.epsilon, self.mu, self.time)
        # x-fastest: the first grid index varies fastest within a block
        body = b"".join(np.asarray(b, "<f8").ravel(order="F").tobytes() for b in self.blocks)
        return head + body

    @classmethod
    def from_bytes(cls, raw: bytes, expect_n: int | None = None) -> "Checkpoint":
        if len(raw) < 8 or raw[:8] != MAGIC:
            raise CheckpointError("magic", "not a checkpoint file (magic mismatch)")
        if len(raw) < _HEADER.size:
            raise CheckpointError("truncated", "checkpoint header is truncated")
        _, n, length, eps, mu, t = _HEADER.unpack_from(raw)
        expected = _HEADER.size + 8 * n**3 * 8
        if len(raw) != expected:
            raise CheckpointError(
                "truncated", f"checkpoint holds {len(raw)} bytes, header implies {expected}"
            )
        if expect_n is not None and n != expect_n:
            raise CheckpointError("grid", f"checkpoint grid N={n}, expected N={expect_n}")
        flat = np.frombuffer(raw, "<f8", offset=_HEADER.size).reshape(8, n**3)
        blocks = np.stack([b.reshape((n, n, n), order="F") for b in flat]).astype(float)
        return cls(n, length, eps, mu, t, blocks)


def write_checkpoint(s: AcState | Checkpoint, path: str | Path) -> None:
    ck = s if isinstance(s, Checkpoint) else Checkpoint.from_state(s)
    Path(path).write_bytes(ck.to_bytes())


def load_checkpoint(path: str | Path, expect_n: int | None = None) -> Checkpoint:
    return Checkpoint.from_bytes(Path(path).read_bytes(), expect_n)


def read_checkpoint(path: str | Path, expect_n: int | None = None) -> AcState:
    return load_checkpoint(path, expect_n).to_state()
