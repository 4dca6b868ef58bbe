"""Decentralized, latency-robust multi-agent trajectory planning."""

from .config import ScenarioConfig, load_scenario
from .global_path import Path, find_path, push_away, stitch
from .hyperplanes import (TimeAwareCorridor, align, build_tasc, perturb_normal,
                          separating_hyperplane)
from .mpc import LocalReference, TrajectoryOptimizer, sample_reference
from .safe_corridor import (Halfspace, Polyhedron, SafeCorridor, gen_polyhedron,
                            update_corridor)
from .scheduler import PlanningGate, TrajectoryMessage, estimate_delay
from .sim import MetricsReport, run_scenario
from .trajectory import AgentState, DiscreteTrajectory, Limits, propagate
from .voxel_grid import (Box, VoxelGrid, WorldModel, clear_borders, inflate,
                         intermediate_goal, rasterize)

__version__ = "0.1.0"

__all__ = [
    "AgentState", "Box", "DiscreteTrajectory", "Halfspace", "Limits",
    "LocalReference", "MetricsReport", "Path", "PlanningGate", "Polyhedron",
    "SafeCorridor", "ScenarioConfig", "TimeAwareCorridor",
    "TrajectoryMessage", "TrajectoryOptimizer", "VoxelGrid", "WorldModel",
    "align", "build_tasc", "clear_borders", "estimate_delay", "find_path",
    "gen_polyhedron", "inflate", "intermediate_goal", "load_scenario",
    "perturb_normal", "propagate", "push_away", "rasterize", "run_scenario",
    "sample_reference", "separating_hyperplane", "stitch", "update_corridor",
]
