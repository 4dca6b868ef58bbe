"""Local reference sampling and the corridor-constrained trajectory MIQP.

The optimizer plans N+1 triple-integrator states at step h. States are
condensed onto the N piecewise-constant jerk inputs, giving a dense strictly
convex QP per choice of corridor polyhedron for each trajectory segment. The
combinatorial layer picks one polyhedron per segment ("in at least one" is
realized as "the best single choice"), searched best-first with QP
relaxations as bounds; exhaustive enumeration is kept as a reference mode.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .hyperplanes import TimeAwareCorridor
from .qp import DenseQP
from .safe_corridor import Polyhedron
from .trajectory import AgentState, DiscreteTrajectory, Limits, propagate


@dataclass
class LocalReference:
    """N waypoints the optimizer tracks, one per future step."""

    points: np.ndarray  # (N, 3)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]


def sample_reference(path, ref_speed: float, horizon: int, step: float,
                     prev_ref: LocalReference | None,
                     last_traj: DiscreteTrajectory | None,
                     gate_dist: float, end_decel: float | None = 5.0,
                     end_rate: float = 4.0, advance_steps: int = 1) -> LocalReference:
    """Sample the global path at constant speed into a local reference.

    The i-th point sits at arc length (advance_steps + i) * ref_speed * step
    from the path start (the path begins at the previous reference, so
    advance_steps is the number of periods executed since that reference was
    made: under latency-induced skips the reference keeps advancing with
    time, not with planning events). Points clamp to the path end, and near
    the end the commanded speed follows a braking envelope min(sqrt(2 *
    end_decel * d), end_rate * d) over the remaining distance d, so the
    tracked approach is brakeable and settles into the goal without
    overshoot (end_decel None disables the envelope).

    When the last committed trajectory has not caught up with the previous
    reference (their final points are more than gate_dist apart), the
    reference is kept instead of advanced: points are resampled along the
    same path but capped at the previous reference's end, so the reference
    stops advancing while still following the path shape (important when the
    path bends around an obstacle: collapsing the points onto the stale end
    point would pull the tracker into the obstacle's local minimum).
    """
    if ref_speed <= 0 or step <= 0 or gate_dist <= 0:
        raise ValueError("ref_speed, step and gate_dist must be positive")
    if advance_steps < 1:
        raise ValueError("advance_steps must be >= 1")

    pts = path.waypoints
    if len(pts) == 1:
        return LocalReference(np.tile(pts[0], (horizon, 1)))
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]

    cap = total
    if prev_ref is not None and last_traj is not None:
        lag = np.linalg.norm(last_traj.states[-1].position - prev_ref.end)
        if lag > gate_dist:
            # the path starts at the previous reference, so the arc position
            # of its end is the length of its own polyline; clamping there
            # pins the reference end until the tracker catches up
            prev_pts = prev_ref.points
            cap = float(np.sum(np.linalg.norm(np.diff(prev_pts, axis=0),
                                              axis=1)))

    if end_decel is None:
        s = np.minimum((advance_steps + np.arange(horizon)) * ref_speed * step,
                       total)
    else:
        # walk the speed envelope; reference point j sits after
        # advance_steps + j envelope steps
        s = np.empty(horizon)
        cur = 0.0
        for stepno in range(1, advance_steps + horizon):
            remaining = max(total - cur, 0.0)
            v = min(ref_speed, np.sqrt(2.0 * end_decel * remaining),
                    end_rate * remaining)
            cur = min(cur + v * step, total)
            if stepno >= advance_steps:
                s[stepno - advance_steps] = cur
    s = np.minimum(s, cap)
    out = np.empty((horizon, 3))
    for ax in range(3):
        out[:, ax] = np.interp(s, arc, pts[:, ax])
    return LocalReference(out)


@dataclass
class QpSolution:
    states: list[AgentState]
    jerks: np.ndarray
    cost: float
    result: object  # QpResult with KKT residuals


@dataclass
class MiqpSolution:
    trajectory: DiscreteTrajectory
    cost: float
    assignment: tuple[int, ...]
    nodes: int
    qp_solves: int


class Infeasible(Exception):
    """No polyhedron assignment admits a trajectory."""


def _prediction_matrices(horizon: int, step: float):
    """Condensing matrices: stacked positions/velocities/accelerations at
    steps 1..N as affine functions of the stacked jerk vector."""
    n = horizon
    h = step
    d = np.arange(n)
    cp = h ** 3 * (3 * d ** 2 + 3 * d + 1) / 6.0
    cv = h ** 2 * (2 * d + 1) / 2.0
    Tp = np.zeros((n, n))
    Tv = np.zeros((n, n))
    Ta = np.zeros((n, n))
    for i in range(1, n + 1):
        for m in range(i):
            Tp[i - 1, m] = cp[i - 1 - m]
            Tv[i - 1, m] = cv[i - 1 - m]
            Ta[i - 1, m] = h
    eye3 = np.eye(3)
    return np.kron(Tp, eye3), np.kron(Tv, eye3), np.kron(Ta, eye3)


def _free_response(x0: AgentState, horizon: int, step: float):
    i = np.arange(1, horizon + 1)[:, None] * step
    fp = x0.position + i * x0.velocity + i ** 2 / 2.0 * x0.acceleration
    fv = x0.velocity + i * x0.acceleration
    fa = np.tile(x0.acceleration, (horizon, 1))
    return fp.ravel(), fv.ravel(), fa.ravel()


class TrajectoryOptimizer:
    """Per-agent MIQP solver; holds precomputed matrices and a QP workspace.

    Instances are not safe for concurrent use.
    """

    def __init__(self, horizon: int, step: float, limits: Limits,
                 q_ref: float = 1.0, r_jerk: float = 0.01,
                 feas_tol: float = 1e-9, max_nodes: int = 50_000):
        if horizon < 1 or step <= 0:
            raise ValueError("horizon must be >= 1 and step > 0")
        self.horizon = horizon
        self.step = step
        self.limits = limits
        self.q_ref = q_ref
        self.r_jerk = r_jerk
        self.feas_tol = feas_tol
        self.max_nodes = max_nodes
        self.Gp, self.Gv, self.Ga = _prediction_matrices(horizon, step)
        # tracking weight grows quadratically toward the horizon end: the
        # final reference point is tracked tightly (that is what pulls the
        # trajectory forward against the terminal rest constraint), earlier
        # points mainly shape the path
        w = q_ref * (np.arange(horizon) + 1.0) ** 2
        self.track_weights = np.repeat(w, 3)
        H = 2.0 * (self.Gp.T @ (self.track_weights[:, None] * self.Gp)
                   + r_jerk * np.eye(3 * horizon))
        self._qp = DenseQP(H, feas_tol=feas_tol, max_iter=2000)
        self._limit_rows = self._build_limit_rows()
        self._qp_solves = 0

    # -- row assembly -------------------------------------------------------

    def _pos_block(self, i: int) -> np.ndarray:
        """Rows of Gp producing position p_i (i in 1..N)."""
        return self.Gp[3 * (i - 1):3 * i]

    def _build_limit_rows(self):
        """Velocity/acceleration bounds at steps 1..N-1 plus jerk bounds."""
        n = self.horizon
        rows, rhs = [], []
        for i in range(1, n):
            blk_v = self.Gv[3 * (i - 1):3 * i]
            blk_a = self.Ga[3 * (i - 1):3 * i]
            rows.extend([blk_v, -blk_v, blk_a, -blk_a])
        rows.append(np.eye(3 * n))
        rows.append(-np.eye(3 * n))
        return np.vstack(rows) if rows else np.zeros((0, 3 * n))

    def _limit_rhs(self, fv: np.ndarray, fa: np.ndarray) -> np.ndarray:
        n = self.horizon
        lim = self.limits
        rhs = []
        for i in range(1, n):
            fvi = fv[3 * (i - 1):3 * i]
            fai = fa[3 * (i - 1):3 * i]
            rhs.extend([lim.v_max - fvi, lim.v_max + fvi,
                        lim.a_max - fai, lim.a_max + fai])
        rhs.append(np.full(3 * n, lim.j_max))
        rhs.append(np.full(3 * n, lim.j_max))
        return np.concatenate(rhs)

    def _plane_rows(self, normals: np.ndarray, offsets: np.ndarray, seg: int,
                    fp: np.ndarray):
        """Constraint rows putting both endpoints of segment `seg` behind the
        given halfspaces; the fixed endpoint p_0 contributes no row."""
        rows, rhs = [], []
        for i in (seg, seg + 1):
            if i == 0:
                continue
            blk = self._pos_block(i)
            rows.append(normals @ blk)
            rhs.append(offsets - normals @ fp[3 * (i - 1):3 * i])
        return rows, rhs

    def _x0_violates(self, normals: np.ndarray, offsets: np.ndarray,
                     x0: AgentState) -> bool:
        return bool(np.any(normals @ x0.position > offsets + 1e-6))

    # -- QP per assignment --------------------------------------------------

    def _base_data(self, tasc: TimeAwareCorridor, x0: AgentState,
                   ref: LocalReference) -> tuple | None:
        """Assignment-independent QP data, built once per MIQP solve.

        Separating-plane offsets arrive pre-relaxed against the committed
        trajectory, so the fixed initial state never renders them infeasible;
        only polyhedron choices can rule a node out.
        """
        n = self.horizon
        fp, fv, fa = _free_response(x0, n, self.step)
        g = 2.0 * self.Gp.T @ (self.track_weights * (fp - ref.points.ravel()))

        rows = [self._limit_rows]
        rhs = [self._limit_rhs(fv, fa)]
        for s in range(n):
            planes = tasc.slice_planes(s)
            if not planes:
                continue
            normals = np.asarray([pl.plane.normal for pl in planes])
            offsets = np.asarray([pl.plane.offset for pl in planes])
            r, b = self._plane_rows(normals, offsets, s, fp)
            rows.extend(r)
            rhs.extend(b)
        A_base = np.vstack(rows)
        b_base = np.concatenate(rhs)

        A_eq = np.vstack([self.Gv[3 * (n - 1):3 * n], self.Ga[3 * (n - 1):3 * n]])
        b_eq = np.concatenate([-fv[3 * (n - 1):3 * n], -fa[3 * (n - 1):3 * n]])
        eq_scale = np.linalg.norm(A_eq, axis=1)
        A_eq /= eq_scale[:, None]
        b_eq /= eq_scale

        # polyhedron rows cached lazily per (segment, polyhedron index)
        poly_rows: dict[tuple[int, int], tuple | None] = {}
        return g, A_base, b_base, A_eq, b_eq, fp, poly_rows

    def _poly_rows(self, base, tasc, x0, seg: int, c: int):
        """Rows constraining segment `seg` to polyhedron `c` (cached)."""
        cache = base[6]
        key = (seg, c)
        if key not in cache:
            poly = tasc.corridor.polyhedra[c]
            if seg == 0 and self._x0_violates(poly.normals, poly.offsets, x0):
                cache[key] = None
            else:
                r, b = self._plane_rows(poly.normals, poly.offsets, seg, base[5])
                cache[key] = (np.vstack(r), np.concatenate(b))
        return cache[key]

    def _solve_node(self, base, tasc, x0, ref, assignment):
        """QP for a partial assignment (None = unconstrained segment).

        Returns (J, cost, QpResult) or None when infeasible.
        """
        g, A_base, b_base, A_eq, b_eq = base[:5]
        rows = [A_base]
        rhs = [b_base]
        for s, c in enumerate(assignment):
            if c is None:
                continue
            pr = self._poly_rows(base, tasc, x0, s, c)
            if pr is None:
                return None
            rows.append(pr[0])
            rhs.append(pr[1])
        A_in = np.vstack(rows)
        b_in = np.concatenate(rhs)
        scale = np.linalg.norm(A_in, axis=1)
        scale[scale < 1e-12] = 1.0
        A_in = A_in / scale[:, None]
        b_in = b_in / scale
        self._qp_solves += 1
        res = self._qp.solve(g, A_in, b_in, A_eq, b_eq)
        if not res.ok:
            return None
        return res.x, self._true_cost(res.x, x0, ref), res

    def _true_cost(self, J: np.ndarray, x0: AgentState, ref: LocalReference) -> float:
        """Objective recomputed from the trajectory itself (mode-independent)."""
        pos = self.Gp @ J + _free_response(x0, self.horizon, self.step)[0]
        err = pos - ref.points.ravel()
        return float(err @ (self.track_weights * err) + self.r_jerk * J @ J)

    def _materialize(self, J: np.ndarray, x0: AgentState) -> tuple[list[AgentState], np.ndarray]:
        jerks = J.reshape(self.horizon, 3)
        states = [AgentState(x0.position.copy(), x0.velocity.copy(),
                             x0.acceleration.copy())]
        for i in range(self.horizon):
            states.append(propagate(states[-1], jerks[i], self.step))
        return states, jerks

    def solve_qp(self, assignment, tasc: TimeAwareCorridor, x0: AgentState,
                 ref: LocalReference) -> QpSolution | None:
        """Convex subproblem for one full per-segment polyhedron choice."""
        if len(assignment) != self.horizon:
            raise ValueError("assignment must fix every segment")
        base = self._base_data(tasc, x0, ref)
        if base is None:
            return None
        out = self._solve_node(base, tasc, x0, ref, tuple(assignment))
        if out is None:
            return None
        J, cost, res = out
        states, jerks = self._materialize(J, x0)
        return QpSolution(states, jerks, cost, res)

    # -- combinatorial layer -------------------------------------------------

    def _segment_fits(self, poly: Polyhedron, positions: np.ndarray, seg: int,
                      tol: float = 1e-7) -> bool:
        for i in (seg, seg + 1):
            if not poly.contains(positions[i], tol=tol):
                return False
        return True

    def _positions_of(self, J: np.ndarray, x0: AgentState) -> np.ndarray:
        fp = _free_response(x0, self.horizon, self.step)[0]
        return np.vstack([x0.position, (self.Gp @ J + fp).reshape(self.horizon, 3)])

    def _complete_greedy(self, tasc, positions, assignment) -> tuple | None:
        """Fill every unassigned segment with a polyhedron containing the
        relaxed solution; None when some segment fits no polyhedron."""
        full = list(assignment)
        for s in range(self.horizon):
            if full[s] is not None:
                continue
            found = None
            for c, poly in enumerate(tasc.corridor.polyhedra):
                if self._segment_fits(poly, positions, s):
                    found = c
                    break
            if found is None:
                return None
            full[s] = found
        return tuple(full)

    def _first_violated(self, tasc, positions, assignment) -> int:
        for s in range(self.horizon):
            if assignment[s] is not None:
                continue
            if not any(self._segment_fits(p, positions, s)
                       for p in tasc.corridor.polyhedra):
                return s
        return -1

    def _containment_assignment(self, tasc, positions) -> tuple[int, ...] | None:
        """Per-segment choice of a polyhedron containing both endpoints."""
        return self._complete_greedy(tasc, positions, (None,) * self.horizon)

    def solve(self, tasc: TimeAwareCorridor, x0: AgentState, ref: LocalReference,
              iteration: int = 0, gen_start: float = 0.0,
              warm_positions: np.ndarray | None = None) -> MiqpSolution:
        """Minimum-cost trajectory over all per-segment polyhedron choices.

        Best-first branch and bound. A node fixes polyhedra for a subset of
        segments; its bound is the QP with only those polyhedron constraints
        (plus all limits, separating planes and the terminal rest). Nodes
        branch on the first segment whose relaxed solution fits no
        polyhedron; when every free segment fits one, the node completes
        into a leaf at its own bound, which certifies optimality as soon as
        the cheapest node completes. warm_positions (the rest-extended
        previous trajectory) seeds the incumbent when the root relaxation
        cannot complete. Raises Infeasible when no assignment admits a
        solution.
        """
        n_poly = len(tasc.corridor.polyhedra)
        if n_poly == 0:
            raise Infeasible("empty corridor")
        self._qp_solves = 0
        n = self.horizon
        base = self._base_data(tasc, x0, ref)
        if base is None:
            raise Infeasible("initial state violates a separating plane")

        empty = (None,) * n
        root = self._solve_node(base, tasc, x0, ref, empty)
        nodes = 1
        if root is None:
            raise Infeasible("relaxation without polyhedra is infeasible")
        J_root, cost_root, _ = root

        incumbent_cost = np.inf
        incumbent = None
        positions = self._positions_of(J_root, x0)
        direct = self._complete_greedy(tasc, positions, empty)
        if direct is not None:
            return self._finish(J_root, x0, direct, nodes, cost_root,
                                iteration, gen_start)

        if warm_positions is not None:
            warm = self._containment_assignment(tasc, warm_positions)
            if warm is not None:
                out = self._solve_node(base, tasc, x0, ref, warm)
                if out is not None:
                    incumbent_cost = out[1]
                    incumbent = (warm, out[0])

        def prune_tol(c):
            return 1e-12 * (1.0 + abs(c))

        heap = [(cost_root, 0, empty, J_root)]
        counter = 1
        while heap:
            bound, _, partial, J_par = heapq.heappop(heap)
            if bound >= incumbent_cost - prune_tol(incumbent_cost):
                continue
            nodes += 1
            if nodes > self.max_nodes:
                break
            par_positions = self._positions_of(J_par, x0)
            seg = self._first_violated(tasc, par_positions, partial)
            if seg < 0:
                full = self._complete_greedy(tasc, par_positions, partial)
                if full is not None and bound < incumbent_cost:
                    incumbent_cost = bound
                    incumbent = (full, J_par)
                continue
            for c in range(n_poly):
                child = partial[:seg] + (c,) + partial[seg + 1:]
                out = self._solve_node(base, tasc, x0, ref, child)
                if out is None:
                    continue
                J_c, cost_c = out[0], out[1]
                if cost_c >= incumbent_cost - prune_tol(incumbent_cost):
                    continue
                heapq.heappush(heap, (cost_c, counter, child, J_c))
                counter += 1

        if incumbent is None:
            raise Infeasible("all polyhedron assignments infeasible")
        assignment, J = incumbent
        return self._finish(J, x0, assignment, nodes, incumbent_cost,
                            iteration, gen_start)

    def solve_enumerate(self, tasc: TimeAwareCorridor, x0: AgentState,
                        ref: LocalReference, iteration: int = 0,
                        gen_start: float = 0.0) -> MiqpSolution:
        """Reference mode: try every assignment, keep the cheapest."""
        n_poly = len(tasc.corridor.polyhedra)
        if n_poly == 0:
            raise Infeasible("empty corridor")
        if n_poly ** self.horizon > 200_000:
            raise ValueError("assignment space too large to enumerate")
        self._qp_solves = 0
        base = self._base_data(tasc, x0, ref)
        if base is None:
            raise Infeasible("initial state violates a separating plane")
        best = None
        best_cost = np.inf
        nodes = 0
        for assignment in itertools.product(range(n_poly), repeat=self.horizon):
            nodes += 1
            out = self._solve_node(base, tasc, x0, ref, assignment)
            if out is None:
                continue
            if out[1] < best_cost:
                best_cost = out[1]
                best = (assignment, out[0])
        if best is None:
            raise Infeasible("all polyhedron assignments infeasible")
        assignment, J = best
        return self._finish(J, x0, assignment, nodes, best_cost, iteration, gen_start)

    def _finish(self, J, x0, assignment, nodes, cost, iteration, gen_start) -> MiqpSolution:
        states, jerks = self._materialize(J, x0)
        traj = DiscreteTrajectory(states, self.step, iteration,
                                  gen_start, gen_start, jerks)
        return MiqpSolution(traj, cost, tuple(assignment), nodes, self._qp_solves)

    # -- diagnostics ---------------------------------------------------------

    def dump_qp(self, path: str, tasc: TimeAwareCorridor, x0: AgentState,
                ref: LocalReference, assignment) -> None:
        """Write the assembled QP of one node as plain text: one section per
        matrix (H, g, A_in, b_in, A_eq, b_eq), rows space-separated."""
        base = self._base_data(tasc, x0, ref)
        with open(path, "w", encoding="utf-8") as fh:
            if base is None:
                fh.write("# infeasible at fixed initial state\n")
                return
            g, A_base, b_base, A_eq, b_eq = base[:5]
            rows, rhs = [A_base], [b_base]
            for s, c in enumerate(assignment):
                if c is None:
                    continue
                pr = self._poly_rows(base, tasc, x0, s, c)
                if pr is None:
                    fh.write("# infeasible at fixed initial state\n")
                    return
                rows.append(pr[0])
                rhs.append(pr[1])
            A_in = np.vstack(rows)
            b_in = np.concatenate(rhs)
            for name, arr in [("H", self._qp.H), ("g", g), ("A_in", A_in),
                              ("b_in", b_in), ("A_eq", A_eq), ("b_eq", b_eq)]:
                fh.write(f"# {name} shape={np.shape(arr)}\n")
                np.savetxt(fh, np.atleast_2d(arr), fmt="%.17g")
