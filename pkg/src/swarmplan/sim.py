"""Deterministic discrete-event simulation of a planning swarm.

Time advances by nominal period boundaries. At each boundary every agent
first ingests the messages that have arrived, then evaluates its planning
gate and, when authorized, runs one planning iteration and broadcasts the
committed trajectory with a symmetric pair latency. Agents execute committed
trajectories exactly (perfect control); motion is sampled at a fixed
sub-step for logging, collision checking and metrics. With synthetic compute
durations the whole run is a pure function of the configuration and seed.
"""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentPlanner
from .config import ScenarioConfig, generate_obstacles
from .scheduler import decision_log_line
from .trajectory import propagate
from .voxel_grid import WorldModel

_DELIVER_EPS = 1e-12


@dataclass
class Violation:
    t: float
    kind: str  # "pair" | "obstacle"
    a: int
    b: int  # peer agent or obstacle index
    value: float  # distance (pair) or penetration depth (obstacle)


@dataclass
class MetricsReport:
    collision_occurred: bool = False
    violations: list[Violation] = field(default_factory=list)
    min_separation: float = np.inf
    num_stops: int = 0
    accel_cost: float = 0.0
    jerk_cost: float = 0.0
    flight_times: list[float] = field(default_factory=list)
    distances: list[float] = field(default_factory=list)
    mean_speeds: list[float] = field(default_factory=list)
    compute_times: list[float] = field(default_factory=list)
    arrivals: list[bool] = field(default_factory=list)
    timeout: bool = False

    @property
    def all_arrived(self) -> bool:
        return bool(self.arrivals) and all(self.arrivals)

    @property
    def mean_flight_time(self) -> float:
        return float(np.mean(self.flight_times)) if self.flight_times else 0.0

    @property
    def max_flight_time(self) -> float:
        return float(np.max(self.flight_times)) if self.flight_times else 0.0

    def to_dict(self) -> dict:
        return {
            "collision_occurred": self.collision_occurred,
            "num_violations": len(self.violations),
            "min_separation": float(self.min_separation),
            "num_stops": self.num_stops,
            "accel_cost": self.accel_cost,
            "jerk_cost": self.jerk_cost,
            "flight_times": [float(x) for x in self.flight_times],
            "mean_flight_time": self.mean_flight_time,
            "max_flight_time": self.max_flight_time,
            "distances": [float(x) for x in self.distances],
            "mean_speeds": [float(x) for x in self.mean_speeds],
            "compute_times": [float(x) for x in self.compute_times],
            "arrivals": [bool(a) for a in self.arrivals],
            "timeout": self.timeout,
        }


@dataclass
class RunResult:
    metrics: MetricsReport
    decision_lines: list[str]
    trajectory_rows: list[str]
    world: WorldModel
    times: np.ndarray  # (n_samples,)
    positions: np.ndarray  # (n_samples, n_agents, 3)
    velocities: np.ndarray
    accelerations: np.ndarray
    jerks: np.ndarray


TRAJECTORY_HEADER = "time,agent,px,py,pz,vx,vy,vz,ax,ay,az,jx,jy,jz"


def check_collisions(positions, world: WorldModel, agent_radius: float) -> list[tuple]:
    """Violations at one instant: agent pairs closer than the safety distance
    and agent centers strictly inside an obstacle box."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    n = len(pos)
    out = []
    d_min = 2.0 * agent_radius
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.linalg.norm(pos[i] - pos[j]))
            if d < d_min - 1e-12:
                out.append(("pair", i, j, d))
    for i in range(n):
        for b, ob in enumerate(world.obstacles):
            if np.all(pos[i] > ob.lo + 1e-12) and np.all(pos[i] < ob.hi - 1e-12):
                depth = float(np.min(np.minimum(pos[i] - ob.lo, ob.hi - pos[i])))
                out.append(("obstacle", i, b, depth))
    return out


def accumulate_costs(jerks, step: float, a0=None) -> tuple[float, float]:
    """Exact acceleration and jerk cost integrals for piecewise-constant jerk.

    Acceleration is piecewise linear: over one step,
    integral of |a0 + j t|^2 dt = |a0|^2 h + a0.j h^2 + |j|^2 h^3 / 3.
    """
    jerks = np.asarray(jerks, dtype=float).reshape(-1, 3)
    a = np.zeros(3) if a0 is None else np.asarray(a0, dtype=float).copy()
    h = step
    accel_cost = 0.0
    jerk_cost = 0.0
    for j in jerks:
        accel_cost += float(a @ a) * h + float(a @ j) * h * h + float(j @ j) * h ** 3 / 3.0
        jerk_cost += float(j @ j) * h
        a = a + j * h
    return accel_cost, jerk_cost


def count_stops(speeds, v_stop: float, min_dwell: int,
                arrival_idx: int | None = None) -> int:
    """Mid-flight stops in a speed trace.

    A stop is a maximal run of at least min_dwell consecutive samples below
    v_stop that begins after the agent first exceeded v_stop, is followed by
    motion again, and ends before goal arrival (arrival_idx, when known);
    the initial rest and the terminal arrival braking are not stops.
    """
    speeds = np.asarray(speeds, dtype=float)
    above = speeds > v_stop
    if not above.any():
        return 0
    first_motion = int(np.argmax(above))
    last_motion = len(speeds) - 1 - int(np.argmax(above[::-1]))
    horizon_end = last_motion if arrival_idx is None else min(last_motion,
                                                              arrival_idx)
    below = ~above
    stops = 0
    i = first_motion
    while i <= last_motion:
        if below[i]:
            run_start = i
            while i <= last_motion and below[i]:
                i += 1
            run_len = i - run_start
            # resumed motion strictly before arrival counts as a stop
            if run_len >= min_dwell and i <= horizon_end:
                stops += 1
        else:
            i += 1
    return stops


class Simulation:
    def __init__(self, cfg: ScenarioConfig, seed: int | None = None):
        self.cfg = cfg
        seed = cfg.seed if seed is None else seed
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        obstacles = generate_obstacles(cfg, rng)
        self.world = WorldModel(obstacles, cfg.world_bounds())
        n = cfg.n_agents
        ids = list(range(n))
        self.agents = [
            AgentPlanner(i, cfg.starts[i], cfg.goals[i], cfg, self.world,
                         [j for j in ids if j != i])
            for i in ids
        ]

    # -- helpers ---------------------------------------------------------------

    def _positions_at_boundary(self, k: int) -> np.ndarray:
        return np.asarray([a.committed.state_at_iteration(k).position
                           for a in self.agents])

    def _in_range(self, i: int, positions: np.ndarray) -> list[int]:
        r = self.cfg.network.comm_range
        if not np.isfinite(r):
            return [j for j in range(len(self.agents)) if j != i]
        d = np.linalg.norm(positions - positions[i], axis=1)
        return [j for j in range(len(self.agents)) if j != i and d[j] <= r]

    def _arrived(self, agent: AgentPlanner, k: int) -> bool:
        """Confined to the goal ball at near-rest over the whole committed
        horizon (the terminal rest state pins everything beyond it)."""
        view = agent.committed.view_from(k)
        tol = self.cfg.sim.goal_tol
        v_rest = self.cfg.sim.v_stop
        for s in view.states:
            if np.linalg.norm(s.position - agent.goal) > tol:
                return False
            if np.linalg.norm(s.velocity) > v_rest:
                return False
        return True

    # -- main loop ---------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        h = cfg.planner.step
        sub = cfg.sim.substeps
        n = cfg.n_agents
        synthetic = cfg.compute.mode == "synthetic"

        pending: list[tuple[float, int, int, object]] = []  # (t, seq, dest, msg)
        seq = 0
        decision_lines: list[str] = []
        times: list[float] = []
        samples: list[np.ndarray] = []  # per sample: (n, 4, 3) p/v/a/j
        executed_jerks = [[] for _ in range(n)]  # one per boundary per agent
        compute_times: list[float] = []
        timeout = False

        k = 0
        while True:
            t_cur = k * h
            if t_cur > cfg.sim.timeout:
                timeout = True
                break

            while pending and pending[0][0] <= t_cur + _DELIVER_EPS:
                t_rec, _, dest, msg = heapq.heappop(pending)
                self.agents[dest].gate.receive(msg, t_rec)

            positions = self._positions_at_boundary(k)
            for i, agent in enumerate(self.agents):
                in_range = self._in_range(i, positions)
                decision = agent.gate.decide(agent.last_broadcast, t_cur, in_range)
                decision_lines.append(decision_log_line(t_cur, k, i, decision))
                if not decision.plan:
                    continue
                wall0 = time.perf_counter()
                outcome = agent.plan(k, t_cur, decision.consumed)
                wall = time.perf_counter() - wall0
                compute_times.append(wall)
                duration = cfg.compute.duration_for(i) if synthetic else wall
                msg = agent.stamp_and_broadcast(outcome, t_cur + duration)
                for j in in_range:
                    lat = cfg.network.pair_latency(i, j)
                    heapq.heappush(pending, (msg.payload.gen_end + lat, seq, j, msg))
                    seq += 1

            done = all(self._arrived(a, k) for a in self.agents)
            if done and k > 0:
                times.append(t_cur)
                samples.append(self._sample_all(k, 0.0))
                break

            for i, agent in enumerate(self.agents):
                idx = k - agent.committed.iteration
                if 0 <= idx < len(agent.committed.jerks):
                    executed_jerks[i].append(agent.committed.jerks[idx].copy())
                else:
                    executed_jerks[i].append(np.zeros(3))
            for m in range(sub):
                times.append(t_cur + m * h / sub)
                samples.append(self._sample_all(k, m * h / sub))
            k += 1

        return self._collect(np.asarray(times), np.asarray(samples),
                             decision_lines, executed_jerks, compute_times,
                             timeout)

    def _sample_all(self, k: int, dt: float) -> np.ndarray:
        out = np.empty((len(self.agents), 4, 3))
        for i, agent in enumerate(self.agents):
            traj = agent.committed
            idx = k - traj.iteration
            if idx < len(traj.jerks):
                jerk = traj.jerks[idx]
            else:
                jerk = np.zeros(3)
            base = traj.state_at_iteration(k)
            s = propagate(base, jerk, dt) if dt > 0 else base
            out[i, 0] = s.position
            out[i, 1] = s.velocity
            out[i, 2] = s.acceleration
            out[i, 3] = jerk
        return out

    # -- metrics -------------------------------------------------------------------

    def _collect(self, times, samples, decision_lines, executed_jerks,
                 compute_times, timeout) -> RunResult:
        cfg = self.cfg
        n = cfg.n_agents
        pos = samples[:, :, 0, :]
        vel = samples[:, :, 1, :]
        acc = samples[:, :, 2, :]
        jrk = samples[:, :, 3, :]

        metrics = MetricsReport(timeout=timeout, compute_times=compute_times)

        # pairwise separation over all samples
        if n > 1:
            iu, ju = np.triu_indices(n, k=1)
            diffs = pos[:, iu, :] - pos[:, ju, :]
            dists = np.linalg.norm(diffs, axis=2)
            metrics.min_separation = float(dists.min())
            d_min = 2.0 * cfg.planner.agent_radius
            bad = np.argwhere(dists < d_min - 1e-12)
            for t_i, p_i in bad:
                metrics.violations.append(Violation(
                    float(times[t_i]), "pair", int(iu[p_i]), int(ju[p_i]),
                    float(dists[t_i, p_i])))
        for b, ob in enumerate(self.world.obstacles):
            inside = np.all((pos > ob.lo + 1e-12) & (pos < ob.hi - 1e-12), axis=2)
            for t_i, a_i in np.argwhere(inside):
                metrics.violations.append(Violation(
                    float(times[t_i]), "obstacle", int(a_i), b, 0.0))
        metrics.collision_occurred = bool(metrics.violations)

        speeds = np.linalg.norm(vel, axis=2)
        goal_dist = np.linalg.norm(pos - cfg.goals[None, :, :], axis=2)
        for i in range(n):
            # arrival = final entry into the goal ball, never leaving it;
            # settling jitter inside the ball is not flight
            in_ball = goal_dist[:, i] <= cfg.sim.goal_tol
            arrived = bool(in_ball[-1]) and speeds[-1, i] <= cfg.sim.v_stop \
                and not timeout
            metrics.arrivals.append(arrived)
            arr_idx = None
            if arrived:
                outside = np.nonzero(~in_ball)[0]
                arr_idx = int(outside[-1]) + 1 if len(outside) else 0
                metrics.flight_times.append(float(times[arr_idx]))
            else:
                metrics.flight_times.append(float(times[-1]))
            metrics.num_stops += count_stops(speeds[:, i], cfg.sim.v_stop,
                                             cfg.sim.stop_dwell, arr_idx)
            dist = float(np.sum(np.linalg.norm(np.diff(pos[:, i, :], axis=0), axis=1)))
            metrics.distances.append(dist)
            ft = metrics.flight_times[-1]
            metrics.mean_speeds.append(dist / ft if ft > 0 else 0.0)

            a_cost, j_cost = accumulate_costs(np.asarray(executed_jerks[i]),
                                              cfg.planner.step)
            metrics.accel_cost += a_cost / n
            metrics.jerk_cost += j_cost / n

        rows = []
        for t_i, t in enumerate(times):
            for i in range(n):
                p, v, a, j = pos[t_i, i], vel[t_i, i], acc[t_i, i], jrk[t_i, i]
                rows.append(
                    f"{t:.4f},{i},"
                    f"{p[0]:.9f},{p[1]:.9f},{p[2]:.9f},"
                    f"{v[0]:.9f},{v[1]:.9f},{v[2]:.9f},"
                    f"{a[0]:.9f},{a[1]:.9f},{a[2]:.9f},"
                    f"{j[0]:.9f},{j[1]:.9f},{j[2]:.9f}")

        return RunResult(metrics, decision_lines, rows, self.world,
                         times, pos, vel, acc, jrk)


def run_scenario(cfg: ScenarioConfig, seed: int | None = None) -> RunResult:
    """One seeded simulation run (identical seed and config reproduce the
    trajectory and decision logs byte for byte in synthetic compute mode)."""
    return Simulation(cfg, seed).run()
