"""Flat key = value scenario files.

Example::

    # binary point-mass
    model.a = 0.0
    model.sigma = 0.0
    model.nu.kind = finite_atomic
    model.nu.atoms = 1.0: 0.5 0.5
    model.ladder = 0, 1, 2, 3
    run.omega = auto
    run.t_grid = 0.5, 1, 2
    run.replicas = 10000
    run.seed = 20260809

Atoms are semicolon-separated ``weight: p1 p2 ...`` groups.  Everything is
validated at load time; any problem raises ConfigError.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .dislocation import (
    BinaryConservative,
    DislocationModel,
    FiniteAtomic,
    MassPartition,
    TruncationLadder,
)
from .errors import ConfigError, GrowfragError, NoCriticalPoint

_DEFAULTS = {
    "model.a": "0.0",
    "model.sigma": "0.0",
    "model.ladder": "0, 1, 2, 3",
    "run.omega": "auto",
    "run.t_grid": "0.5, 1, 2",
    "run.replicas": "10000",
    "run.cap": "1000000",
    "run.barrier_a": "2.0",
    "run.mesh": "0.04",
    "run.seed": "20260809",
}

_KNOWN = set(_DEFAULTS) | {
    "model.nu.kind",
    "model.nu.atoms",
    "model.nu.beta",
    "model.nu.c",
    "run.level",
    "scenario.name",
}


@dataclass
class Scenario:
    name: str
    model: DislocationModel
    omega_setting: str
    omega: float
    t_grid: tuple
    replicas: int
    level: int
    cap: int
    barrier_a: float
    mesh: float
    seed: int

    @property
    def horizon(self) -> float:
        return max(self.t_grid)


def _parse_pairs(text: str) -> dict:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        pairs[key] = value.strip()
    return pairs


def _floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _parse_atoms(text: str):
    atoms = []
    for group in text.split(";"):
        group = group.strip()
        if not group:
            continue
        if ":" not in group:
            raise ConfigError(f"atom group {group!r} must be 'weight: p1 p2 ...'")
        w_text, p_text = group.split(":", 1)
        atoms.append((float(w_text), MassPartition(_floats(p_text))))
    return FiniteAtomic(tuple(atoms))


def loads(text: str, name: str = "scenario") -> Scenario:
    pairs = _parse_pairs(text)
    unknown = set(pairs) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    cfg = dict(_DEFAULTS)
    cfg.update(pairs)

    try:
        kind = cfg.get("model.nu.kind")
        if kind == "finite_atomic":
            nu = _parse_atoms(cfg.get("model.nu.atoms", ""))
        elif kind == "binary_conservative":
            nu = BinaryConservative(beta=float(cfg["model.nu.beta"]), c=float(cfg["model.nu.c"]))
        elif kind is None:
            raise ConfigError("model.nu.kind is required")
        else:
            raise ConfigError(f"unknown model.nu.kind {kind!r}")
        ladder = TruncationLadder(_floats(cfg["model.ladder"]))
        model = DislocationModel(
            a=float(cfg["model.a"]), sigma=float(cfg["model.sigma"]), nu=nu, ladder=ladder
        )
    except ConfigError:
        raise
    except (GrowfragError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid model: {exc}") from exc

    try:
        level = int(cfg.get("run.level", ladder.max_index))
        if not 0 <= level <= ladder.max_index:
            raise ConfigError(f"run.level {level} outside the ladder")
        omega_setting = cfg["run.omega"]
        if omega_setting == "auto":
            try:
                omega = model.omega_bar()
            except NoCriticalPoint as exc:
                raise ConfigError(f"run.omega = auto but {exc}") from exc
        else:
            omega = float(omega_setting)
            if not math.isfinite(model.cumulant(omega)):
                raise ConfigError(f"run.omega = {omega} outside dom kappa")
        t_grid = tuple(sorted(_floats(cfg["run.t_grid"])))
        if not t_grid or t_grid[0] <= 0.0:
            raise ConfigError("run.t_grid must be positive times")
        replicas = int(cfg["run.replicas"])
        if replicas < 2:
            raise ConfigError("run.replicas must be at least 2")
        scn = Scenario(
            name=cfg.get("scenario.name", name),
            model=model,
            omega_setting=omega_setting,
            omega=omega,
            t_grid=t_grid,
            replicas=replicas,
            level=level,
            cap=int(cfg["run.cap"]),
            barrier_a=float(cfg["run.barrier_a"]),
            mesh=float(cfg["run.mesh"]),
            seed=int(cfg["run.seed"]),
        )
    except ConfigError:
        raise
    except (GrowfragError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid run settings: {exc}") from exc
    if scn.mesh <= 0:
        raise ConfigError("run.mesh must be positive")
    if scn.barrier_a <= 0:
        raise ConfigError("run.barrier_a must be positive")
    return scn


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return loads(text, name=path.stem)
