"""Scenario files: human-readable JSON with explicit units and canonical order.

A scenario bundles the static world (boundary, obstacles, slots), the
vehicle parameters, and the grid resolution. Field order in saved files
is fixed so ``save(load(x))`` is canonical and stable. Loading validates
both the schema (with field-precise error locations) and the geometry
(with polygon-precise names).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..env import ParkingScene, ParkingSlot
from ..errors import GeometryError, SchemaError
from ..geometry import Polygon
from ..vehicle import VehicleParams

SCHEMA_VERSION = "1.0"
_SUPPORTED_MAJOR = 1

BUILTIN_SCENARIOS = ("open-lot", "corridor", "cul-de-sac")


@dataclass(frozen=True)
class Scenario:
    name: str
    boundary: Polygon
    obstacles: tuple  # of (name, Polygon)
    slots: tuple      # of ParkingSlot
    vehicle: VehicleParams
    grid_resolution: float = 0.1
    seed: int = 0

    def build_scene(self) -> ParkingScene:
        return ParkingScene(self.boundary, [p for _, p in self.obstacles],
                            self.slots, resolution=self.grid_resolution)


def _require(mapping, key, kind, location):
    if key not in mapping:
        raise SchemaError(f"missing required field", f"{location}.{key}" if location else key)
    value = mapping[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SchemaError(f"expected a number, got {type(value).__name__}",
                              f"{location}.{key}" if location else key)
        return float(value)
    if not isinstance(value, kind):
        raise SchemaError(f"expected {kind.__name__}, got {type(value).__name__}",
                          f"{location}.{key}" if location else key)
    return value


def _vertices(raw, location) -> list:
    if not isinstance(raw, list) or len(raw) < 3:
        raise SchemaError("expected a list of at least 3 [x, y] pairs", location)
    out = []
    for i, pair in enumerate(raw):
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in pair)):
            raise SchemaError("expected an [x, y] number pair", f"{location}[{i}]")
        out.append((float(pair[0]), float(pair[1])))
    return out


def _polygon(raw, location) -> Polygon:
    verts = _vertices(raw, location)
    try:
        return Polygon(verts)
    except GeometryError as e:
        raise SchemaError(str(e), location) from e


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file; errors carry field locations."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise SchemaError("scenario root must be an object")
    version = _require(data, "schema_version", str, "")
    try:
        major = int(version.split(".")[0])
    except ValueError:
        raise SchemaError(f"unparseable schema_version {version!r}", "schema_version")
    if major > _SUPPORTED_MAJOR:
        raise SchemaError(f"schema_version {version} is newer than supported "
                          f"{SCHEMA_VERSION}", "schema_version")
    name = _require(data, "name", str, "")
    boundary = _polygon(_require(data, "boundary", list, ""), "boundary")

    obstacles = []
    for i, entry in enumerate(_require(data, "obstacles", list, "")):
        if not isinstance(entry, dict):
            raise SchemaError("expected an object", f"obstacles[{i}]")
        obs_name = _require(entry, "name", str, f"obstacles[{i}]")
        poly = _polygon(_require(entry, "vertices", list, f"obstacles[{i}]"),
                        f"obstacles[{i}] ({obs_name})")
        obstacles.append((obs_name, poly))

    slots = []
    raw_slots = _require(data, "slots", list, "")
    if not raw_slots:
        raise SchemaError("at least one parking slot is required", "slots")
    for i, entry in enumerate(raw_slots):
        if not isinstance(entry, dict):
            raise SchemaError("expected an object", f"slots[{i}]")
        heading = _require(entry, "heading", float, f"slots[{i}]")
        poly = _polygon(_require(entry, "vertices", list, f"slots[{i}]"), f"slots[{i}]")
        slots.append(ParkingSlot(poly, heading))

    vraw = _require(data, "vehicle", dict, "")
    kwargs = {}
    for key in ("wheelbase", "length", "width", "rear_overhang", "max_steer", "max_speed"):
        kwargs[key] = _require(vraw, key, float, "vehicle")
    try:
        vehicle = VehicleParams(**kwargs)
    except GeometryError as e:
        raise SchemaError(str(e), "vehicle") from e

    resolution = _require(data, "grid_resolution", float, "")
    if resolution <= 0:
        raise SchemaError("grid_resolution must be positive", "grid_resolution")
    seed = _require(data, "seed", float, "")

    scenario = Scenario(name=name, boundary=boundary, obstacles=tuple(obstacles),
                        slots=tuple(slots), vehicle=vehicle,
                        grid_resolution=resolution, seed=int(seed))
    # geometry cross-checks (slot/obstacle overlap) surface at scene build
    try:
        scenario.build_scene()
    except GeometryError as e:
        raise SchemaError(str(e), "slots") from e
    return scenario


def scenario_to_dict(s: Scenario) -> dict:
    # canonical field order
    return {
        "schema_version": SCHEMA_VERSION,
        "name": s.name,
        "units": {"angle": "radians", "length": "meters"},
        "boundary": [[float(x), float(y)] for x, y in s.boundary.vertices],
        "obstacles": [
            {"name": name, "vertices": [[float(x), float(y)] for x, y in poly.vertices]}
            for name, poly in s.obstacles
        ],
        "slots": [
            {"heading": float(slot.heading),
             "vertices": [[float(x), float(y)] for x, y in slot.polygon.vertices]}
            for slot in s.slots
        ],
        "vehicle": {
            "wheelbase": s.vehicle.wheelbase,
            "length": s.vehicle.length,
            "width": s.vehicle.width,
            "rear_overhang": s.vehicle.rear_overhang,
            "max_steer": s.vehicle.max_steer,
            "max_speed": s.vehicle.max_speed,
        },
        "grid_resolution": s.grid_resolution,
        "seed": s.seed,
    }


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")


def builtin_scenario(name: str) -> Scenario:
    """Load one of the shipped scenarios by name."""
    if name not in BUILTIN_SCENARIOS:
        raise SchemaError(f"unknown scenario {name!r}; available: {', '.join(BUILTIN_SCENARIOS)}")
    ref = resources.files("parkbench.harness") / "scenarios" / f"{name}.json"
    with resources.as_file(ref) as path:
        return load_scenario(path)


def resolve_scenario(name_or_path: str) -> Scenario:
    """Builtin name first, then filesystem path."""
    if name_or_path in BUILTIN_SCENARIOS:
        return builtin_scenario(name_or_path)
    return load_scenario(name_or_path)
