"""Per-agent planning pipeline run at every authorized period boundary.

One iteration recenters the local grid, searches a global path from the end
of the previous local reference to the (possibly projected) goal, rolls the
Safe Corridor forward, builds the time-aware corridor against the consumed
peer trajectories, samples the local reference and solves the trajectory
MIQP. When the solve fails the agent recommits the rest-extended tail of its
previous trajectory, which is always safe thanks to the terminal rest
constraint, and retries at the next authorized boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import global_path as gp
from .config import ScenarioConfig
from .hyperplanes import build_tasc, tilt_wave
from .mpc import Infeasible, LocalReference, TrajectoryOptimizer, sample_reference
from .safe_corridor import SafeCorridor, update_corridor
from .scheduler import PlanningGate, TrajectoryMessage
from .trajectory import DiscreteTrajectory
from .voxel_grid import (WorldModel, clear_borders, inflate, intermediate_goal,
                         rasterize)


@dataclass
class PlanOutcome:
    trajectory: DiscreteTrajectory
    solved: bool  # False when the previous trajectory was recommitted
    qp_solves: int = 0
    nodes: int = 0


class AgentPlanner:
    """Planning state of one agent: grid, corridor, reference, optimizer."""

    def __init__(self, agent_id: int, start, goal, cfg: ScenarioConfig,
                 world: WorldModel, peers: list[int]):
        self.id = agent_id
        self.goal = np.asarray(goal, dtype=float)
        self.cfg = cfg
        self.world = world
        p = cfg.planner
        self.optimizer = TrajectoryOptimizer(
            p.horizon_steps, p.step, p.limits(), p.q_ref, p.r_jerk)
        self.gate = PlanningGate(agent_id, list(peers))
        self.committed = DiscreteTrajectory.at_rest(
            start, p.horizon_steps, p.step, iteration=0)
        self.corridor = SafeCorridor([])
        self.prev_ref: LocalReference | None = None
        self.last_broadcast: DiscreteTrajectory | None = None
        self.last_plan_iteration: int | None = None
        # consecutive plans spent parked at rest behind a stale reference
        self.stall_count = 0
        self.stall_reset_after = 10
        # consecutive stall resets without progress in between; from the
        # second one on, peers are routed around as temporary obstacles
        self.reset_count = 0

    # -- pipeline -------------------------------------------------------------

    def current_view(self, k: int) -> DiscreteTrajectory:
        return self.committed.view_from(k)

    def plan(self, k: int, t_cur: float,
             consumed: dict[int, TrajectoryMessage]) -> PlanOutcome:
        p = self.cfg.planner
        own_view = self.committed.view_from(k, gen_start=t_cur, gen_end=t_cur)
        x0 = own_view.states[0]

        grid = rasterize(self.world, x0.position, p.grid_extent, p.voxel_size)
        if p.inflate_radius > 0:
            grid = inflate(grid, p.inflate_radius)
        search_grid = clear_borders(grid)

        local_goal = intermediate_goal(search_grid, x0.position, self.goal)
        prev_ref = self.prev_ref
        if self._stalled(x0):
            # parked at rest behind an unreachable reference (e.g. the
            # corridor lost the passage the reference threaded, or stale
            # overlapping polyhedra saturate it): start over from the
            # current position with a fresh corridor
            prev_ref = None
            self.corridor = SafeCorridor([])
            self.stall_count = 0
            self.reset_count += 1
            if self.reset_count >= 2:
                # a plain restart did not help: the blockage is another
                # agent, so route around everyone for this search
                self._mark_peers(search_grid, x0, k, consumed)
        prev_pts = prev_ref.points if prev_ref is not None else None
        start_pt = prev_pts[-1] if prev_pts is not None else x0.position
        if not search_grid.is_free_point(start_pt):
            # stale reference end caught in an occupied sliver: replan fresh
            prev_ref = None
            prev_pts = None
            start_pt = x0.position
        try:
            path = gp.find_path(search_grid, start_pt, local_goal)
        except (gp.NoPathError, ValueError):
            return self._recommit(k, t_cur, own_view)
        path = gp.push_away(search_grid, path, p.dmp_influence, p.dmp_gain,
                            p.dmp_sweeps)
        try:
            stitched = gp.stitch(prev_pts, path)
        except ValueError:
            stitched = path

        self.corridor = update_corridor(self.corridor, own_view.positions(),
                                        stitched, grid, p.max_polyhedra)
        advance = 1 if self.last_plan_iteration is None \
            else max(k - self.last_plan_iteration, 1)
        self.last_plan_iteration = k
        ref = sample_reference(stitched, p.ref_speed, p.horizon_steps, p.step,
                               prev_ref, self.committed, p.ref_gate_dist,
                               end_decel=p.ref_end_decel, end_rate=p.ref_end_rate,
                               advance_steps=advance)

        peers = [(m.payload.iteration, m.payload)
                 for _, m in sorted(consumed.items())]
        tasc = build_tasc(self.corridor, own_view, peers, p.horizon_steps,
                          p.agent_radius, p.tilt,
                          tilt_wave(k, p.tilt_wave_amp, p.tilt_wave_steps),
                          margin_extra=p.plane_margin_extra)
        try:
            sol = self.optimizer.solve(tasc, x0, ref, iteration=k,
                                       gen_start=t_cur,
                                       warm_positions=own_view.positions())
        except Infeasible:
            self.prev_ref = ref
            return self._recommit(k, t_cur, own_view)

        self.prev_ref = ref
        self.committed = sol.trajectory
        return PlanOutcome(sol.trajectory, True, self.optimizer._qp_solves,
                           sol.nodes)

    def _mark_peers(self, grid, x0, k: int, consumed) -> None:
        """Occupy voxels around current peer positions (routing only)."""
        original = grid.occupancy.copy()
        r = 2.0 * self.cfg.planner.agent_radius + 0.5 * grid.voxel_size
        reach = int(np.ceil(r / grid.voxel_size))
        for _, m in sorted(consumed.items()):
            p = m.payload.state_at_iteration(k).position
            if not grid.contains_point(p):
                continue
            ci = np.array(grid.world_to_index(p))
            lo = np.maximum(ci - reach, 0)
            hi = np.minimum(ci + reach, grid.counts - 1)
            for i in range(lo[0], hi[0] + 1):
                for j in range(lo[1], hi[1] + 1):
                    for l in range(lo[2], hi[2] + 1):
                        if np.linalg.norm(grid.index_to_center((i, j, l)) - p) <= r:
                            grid.occupancy[i, j, l] = True
        # never wall in the searcher itself: undo peer markings (but not
        # real obstacles) in the voxels around the current position
        own = np.array(grid.world_to_index(x0.position))
        lo = np.maximum(own - 1, 0)
        hi = np.minimum(own + 1, grid.counts - 1)
        block = (slice(lo[0], hi[0] + 1), slice(lo[1], hi[1] + 1),
                 slice(lo[2], hi[2] + 1))
        grid.occupancy[block] = original[block]

    def _stalled(self, x0) -> bool:
        if self.prev_ref is None:
            return False
        if np.linalg.norm(x0.velocity) > self.cfg.sim.v_stop:
            self.stall_count = 0
            self.reset_count = 0
            return False
        lag = np.linalg.norm(self.committed.states[-1].position
                             - self.prev_ref.end)
        far_from_goal = np.linalg.norm(x0.position - self.goal) \
            > self.cfg.sim.goal_tol
        if lag > self.cfg.planner.ref_gate_dist and far_from_goal:
            self.stall_count += 1
        else:
            self.stall_count = 0
        return self.stall_count >= self.stall_reset_after

    def _recommit(self, k: int, t_cur: float,
                  own_view: DiscreteTrajectory) -> PlanOutcome:
        self.committed = own_view
        return PlanOutcome(own_view, False)

    def stamp_and_broadcast(self, outcome: PlanOutcome, gen_end: float) -> TrajectoryMessage:
        outcome.trajectory.gen_end = gen_end
        self.last_broadcast = outcome.trajectory
        return TrajectoryMessage(self.id, outcome.trajectory)
