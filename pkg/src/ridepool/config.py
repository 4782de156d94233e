"""Run configuration: one JSON file drives build, solve and simulate runs.

Unknown keys are rejected so typos fail loudly. Command-line flags override
a handful of fields (seed, output directory).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import InputError
from .solver import SolverConfig


@dataclass
class SolverSettings:
    gap_threshold: float = 1e-3
    max_iterations: int = 2000
    step_scale: float | None = None
    persist_lambda: bool = False

    def to_solver_config(self) -> SolverConfig:
        return SolverConfig(
            gap_threshold=self.gap_threshold,
            max_iterations=self.max_iterations,
            step_scale=self.step_scale,
        )


@dataclass
class InstanceSettings:
    scenario: str | None = None  # "integrality-gap" or "two-corridor"
    sources: list[int] | None = None
    destinations: list[int] | None = None
    start_slot: int = 0


@dataclass
class RunConfig:
    nodes_csv: str | None = None
    edges_csv: str | None = None
    trips_csv: str | None = None
    artifacts_dir: str | None = None
    out_dir: str = "out"

    cell_width_km: float = 0.7
    cell_height_km: float = 0.6
    slot_minutes: int = 5
    speed_kmh: float = 15.0
    eta_detour: float = 0.8
    alpha: float = 1.3
    K: int = 1
    horizon: int = 288
    num_days: int | None = None

    fleet_size: int = 10
    instance_count: int = 1
    start_hours: list[int] = field(default_factory=lambda: [17])
    schemes: list[str] = field(default_factory=lambda: ["joint", "independent", "fastest"])
    fleet_sweep: list[int] | None = None
    min_path_edges: int = 4
    allow_waiting: bool = False
    per_slot_log: bool = False

    hotspot_window: int = 12
    hotspot_deadline_factor: float = 2.0

    seed_base: int = 0
    seed_count: int = 1
    seeds: list[int] | None = None

    solver: SolverSettings = field(default_factory=SolverSettings)
    instance: InstanceSettings = field(default_factory=InstanceSettings)

    def __post_init__(self):
        if not 0 < self.eta_detour <= 1:
            raise InputError("eta_detour must lie in (0, 1]")
        if self.alpha < 1:
            raise InputError("alpha must be at least 1")
        if self.slot_minutes < 1 or self.speed_kmh <= 0:
            raise InputError("slot_minutes and speed_kmh must be positive")
        if self.K < 1 or self.horizon < 1 or self.fleet_size < 1:
            raise InputError("K, horizon and fleet_size must be positive")
        for s in self.schemes:
            if s not in ("joint", "independent", "fastest"):
                raise InputError(f"unknown scheme {s!r}")

    def seed_list(self) -> list[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return list(range(self.seed_base, self.seed_base + self.seed_count))


def _from_dict(cls, data: dict):
    allowed = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(allowed)
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        if name == "solver":
            value = _from_dict(SolverSettings, value)
        elif name == "instance":
            value = _from_dict(InstanceSettings, value)
        kwargs[name] = value
    return cls(**kwargs)


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return _from_dict(RunConfig, data)


def config_to_dict(config: RunConfig) -> dict:
    return asdict(config)
