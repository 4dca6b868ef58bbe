"""Scenario configuration: YAML loading, validation, placement generators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .trajectory import Limits
from .voxel_grid import Box


class ConfigError(Exception):
    """Invalid scenario configuration; message names the offending field."""


@dataclass
class PlannerParams:
    horizon_steps: int = 9
    step: float = 0.1
    ref_speed: float = 4.5
    max_polyhedra: int = 3
    ref_gate_dist: float = 0.4
    ref_end_decel: float = 5.0
    ref_end_rate: float = 4.0
    agent_radius: float = 0.125
    tilt: float = 0.3
    plane_margin_extra: float = 0.02
    tilt_wave_amp: float = 0.05
    tilt_wave_steps: int = 20
    v_max: float = 10.0
    a_max: float = 20.0
    j_max: float = 30.0
    q_ref: float = 1.0
    r_jerk: float = 0.01
    grid_extent: tuple[float, float, float] = (15.0, 15.0, 3.3)
    voxel_size: float = 0.3
    inflate_radius: float = 0.0
    dmp_influence: float | None = None  # defaults to 3 * voxel_size
    dmp_gain: float = 0.3
    dmp_sweeps: int = 5

    def validate(self) -> None:
        positive = ["step", "ref_speed", "ref_gate_dist", "agent_radius",
                    "v_max", "a_max", "j_max", "q_ref", "voxel_size"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"planner.{name} must be > 0")
        if self.horizon_steps < 1:
            raise ConfigError("planner.horizon_steps must be >= 1")
        if self.max_polyhedra < 1:
            raise ConfigError("planner.max_polyhedra must be >= 1")
        if self.r_jerk <= 0:
            raise ConfigError("planner.r_jerk must be > 0")
        if self.inflate_radius < 0:
            raise ConfigError("planner.inflate_radius must be >= 0")
        if any(e <= 0 for e in self.grid_extent):
            raise ConfigError("planner.grid_extent components must be > 0")

    def limits(self) -> Limits:
        return Limits(self.v_max, self.a_max, self.j_max)


@dataclass
class NetworkParams:
    latency: float = 0.0  # uniform symmetric pair latency, seconds
    comm_range: float = math.inf

    def validate(self) -> None:
        if self.latency < 0:
            raise ConfigError("network.latency must be >= 0")
        if self.comm_range <= 0:
            raise ConfigError("network.comm_range must be > 0")

    def pair_latency(self, i: int, j: int) -> float:
        return self.latency


@dataclass
class ComputeParams:
    mode: str = "synthetic"  # "synthetic" | "measured"
    duration: float = 0.01  # synthetic per-agent compute time, seconds
    durations: list[float] | None = None  # optional per-agent override

    def validate(self, n_agents: int) -> None:
        if self.mode not in ("synthetic", "measured"):
            raise ConfigError("compute.mode must be 'synthetic' or 'measured'")
        if self.duration < 0:
            raise ConfigError("compute.duration must be >= 0")
        if self.durations is not None:
            if len(self.durations) != n_agents:
                raise ConfigError("compute.durations length must equal agent count")
            if any(d < 0 for d in self.durations):
                raise ConfigError("compute.durations must be >= 0")

    def duration_for(self, agent: int) -> float:
        if self.durations is not None:
            return self.durations[agent]
        return self.duration


@dataclass
class ObstacleParams:
    count: int = 0
    size: tuple[float, float, float] = (0.2, 0.2, 1.5)
    clearance: float = 0.8  # keep-out radius around starts and goals
    region: tuple[float, float] | None = None  # xy half-extents; bounds if None

    def validate(self) -> None:
        if self.count < 0:
            raise ConfigError("obstacles.count must be >= 0")
        if any(s <= 0 for s in self.size):
            raise ConfigError("obstacles.size components must be > 0")
        if self.clearance < 0:
            raise ConfigError("obstacles.clearance must be >= 0")


@dataclass
class SimParams:
    goal_tol: float = 0.15
    v_stop: float = 0.05
    stop_dwell: int = 3
    timeout: float = 60.0
    substeps: int = 10

    def validate(self) -> None:
        if self.goal_tol <= 0:
            raise ConfigError("sim.goal_tol must be > 0")
        if self.v_stop <= 0:
            raise ConfigError("sim.v_stop must be > 0")
        if self.stop_dwell < 1:
            raise ConfigError("sim.stop_dwell must be >= 1")
        if self.timeout <= 0:
            raise ConfigError("sim.timeout must be > 0")
        if self.substeps < 1:
            raise ConfigError("sim.substeps must be >= 1")


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    starts: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))
    goals: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))
    bounds_lo: tuple[float, float, float] = (-15.0, -15.0, 0.0)
    bounds_hi: tuple[float, float, float] = (15.0, 15.0, 3.0)
    obstacles: ObstacleParams = field(default_factory=ObstacleParams)
    network: NetworkParams = field(default_factory=NetworkParams)
    compute: ComputeParams = field(default_factory=ComputeParams)
    planner: PlannerParams = field(default_factory=PlannerParams)
    sim: SimParams = field(default_factory=SimParams)
    runs: int = 1
    seed: int = 1

    @property
    def n_agents(self) -> int:
        return len(self.starts)

    def validate(self) -> None:
        self.starts = np.asarray(self.starts, dtype=float).reshape(-1, 3)
        self.goals = np.asarray(self.goals, dtype=float).reshape(-1, 3)
        if len(self.starts) != len(self.goals):
            raise ConfigError("agents: starts and goals must have equal length")
        if len(self.starts) < 1:
            raise ConfigError("agents: at least one agent required")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        lo, hi = np.asarray(self.bounds_lo), np.asarray(self.bounds_hi)
        if np.any(hi <= lo):
            raise ConfigError("world.bounds: max must exceed min per axis")
        self.planner.validate()
        self.network.validate()
        self.compute.validate(self.n_agents)
        self.obstacles.validate()
        self.sim.validate()
        d_min = 2.0 * self.planner.agent_radius
        for i in range(self.n_agents):
            for j in range(i + 1, self.n_agents):
                if np.linalg.norm(self.starts[i] - self.starts[j]) < d_min:
                    raise ConfigError(f"agents {i} and {j} start closer than "
                                      f"the safety distance {d_min}")

    def world_bounds(self) -> Box:
        return Box(np.asarray(self.bounds_lo), np.asarray(self.bounds_hi))


def circle_placement(count: int, radius: float, altitude: float) -> tuple[np.ndarray, np.ndarray]:
    """Evenly spaced starts on a circle, goals at the antipodal points."""
    angles = 2.0 * np.pi * np.arange(count) / count
    starts = np.stack([radius * np.cos(angles), radius * np.sin(angles),
                       np.full(count, altitude)], axis=1)
    goals = np.stack([-radius * np.cos(angles), -radius * np.sin(angles),
                      np.full(count, altitude)], axis=1)
    return starts, goals


def generate_obstacles(cfg: ScenarioConfig, rng: np.random.Generator) -> list[Box]:
    """Uniformly placed obstacle boxes clear of every start and goal.

    Placement draws box centers in the configured region (xy) with the box
    resting on the arena floor; a draw is rejected while any start/goal lies
    within `clearance` of the box in the horizontal plane.
    """
    ob = cfg.obstacles
    if ob.count == 0:
        return []
    sx, sy, sz = ob.size
    lo = np.asarray(cfg.bounds_lo)
    hi = np.asarray(cfg.bounds_hi)
    if ob.region is not None:
        rx, ry = ob.region
        xy_lo = np.array([-rx, -ry])
        xy_hi = np.array([rx, ry])
    else:
        xy_lo = lo[:2] + np.array([sx, sy]) / 2
        xy_hi = hi[:2] - np.array([sx, sy]) / 2
    keep_out = np.vstack([cfg.starts[:, :2], cfg.goals[:, :2]])
    boxes = []
    attempts = 0
    while len(boxes) < ob.count:
        attempts += 1
        if attempts > 10_000 * ob.count:
            raise ConfigError("obstacles: placement failed; region too crowded")
        c = rng.uniform(xy_lo, xy_hi)
        half = np.array([sx, sy]) / 2
        # horizontal clearance from box boundary to every start/goal
        closest = np.min(np.linalg.norm(np.maximum(np.abs(keep_out - c) - half, 0.0),
                                        axis=1))
        if closest < ob.clearance:
            continue
        box_lo = np.array([c[0] - half[0], c[1] - half[1], lo[2]])
        box_hi = np.array([c[0] + half[0], c[1] + half[1], lo[2] + sz])
        boxes.append(Box(box_lo, box_hi))
    return boxes


def _get(d: dict, key: str, default):
    return d.get(key, default) if isinstance(d, dict) else default


def load_scenario(path: str) -> ScenarioConfig:
    """Parse and validate a scenario YAML file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: YAML parse error: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return scenario_from_dict(raw, source=path)


def scenario_from_dict(raw: dict, source: str = "<dict>") -> ScenarioConfig:
    cfg = ScenarioConfig()
    cfg.name = raw.get("name", "scenario")

    agents = raw.get("agents")
    if not isinstance(agents, dict):
        raise ConfigError(f"{source}: missing 'agents' section")
    placement = agents.get("placement", "explicit")
    if placement == "circle":
        for key in ("count", "radius"):
            if key not in agents:
                raise ConfigError(f"{source}: agents.{key} required for circle placement")
        cfg.starts, cfg.goals = circle_placement(
            int(agents["count"]), float(agents["radius"]),
            float(agents.get("altitude", 1.0)))
    elif placement == "explicit":
        try:
            cfg.starts = np.asarray(agents["starts"], dtype=float)
            cfg.goals = np.asarray(agents["goals"], dtype=float)
        except KeyError as e:
            raise ConfigError(f"{source}: agents.{e.args[0]} required") from e
    else:
        raise ConfigError(f"{source}: unknown agents.placement '{placement}'")

    world = raw.get("world", {})
    bounds = _get(world, "bounds", {})
    cfg.bounds_lo = tuple(_get(bounds, "min", cfg.bounds_lo))
    cfg.bounds_hi = tuple(_get(bounds, "max", cfg.bounds_hi))
    obs = _get(world, "obstacles", None)
    if obs:
        cfg.obstacles = ObstacleParams(
            count=int(_get(obs, "count", 0)),
            size=tuple(_get(obs, "size", (0.2, 0.2, 1.5))),
            clearance=float(_get(obs, "clearance", 0.8)),
            region=tuple(obs["region"]) if _get(obs, "region", None) else None)

    net = raw.get("network", {})
    cfg.network = NetworkParams(
        latency=float(_get(net, "latency", 0.0)),
        comm_range=float(_get(net, "comm_range", math.inf)))

    comp = raw.get("compute", {})
    durations = _get(comp, "durations", None)
    cfg.compute = ComputeParams(
        mode=str(_get(comp, "mode", "synthetic")),
        duration=float(_get(comp, "duration", 0.01)),
        durations=[float(d) for d in durations] if durations else None)

    planner = raw.get("planner", {})
    p = PlannerParams()
    for fname in vars(p):
        if fname in planner:
            val = planner[fname]
            if fname == "grid_extent":
                val = tuple(float(v) for v in val)
            elif fname in ("horizon_steps", "max_polyhedra", "tilt_wave_steps",
                           "dmp_sweeps"):
                val = int(val)
            elif val is not None:
                val = float(val)
            setattr(p, fname, val)
    unknown = set(planner) - set(vars(p))
    if unknown:
        raise ConfigError(f"{source}: unknown planner keys {sorted(unknown)}")
    cfg.planner = p

    simsec = raw.get("sim", {})
    s = SimParams()
    for fname in vars(s):
        if fname in simsec:
            val = simsec[fname]
            setattr(s, fname, int(val) if fname in ("stop_dwell", "substeps") else float(val))
    cfg.sim = s

    cfg.runs = int(raw.get("runs", 1))
    cfg.seed = int(raw.get("seed", 1))
    cfg.validate()
    return cfg
