import numpy as np
import pytest

from swarmplan.global_path import Path
from swarmplan.hyperplanes import TimeAwareCorridor, separating_hyperplane
from swarmplan.mpc import (Infeasible, LocalReference, TrajectoryOptimizer,
                           sample_reference)
from swarmplan.safe_corridor import SafeCorridor
from swarmplan.trajectory import (AgentState, DiscreteTrajectory, Limits,
                                  dynamics_residual, propagate)

from miqp_instances import box_polyhedron, gen_instance, trajectory_checks
from oracles import kkt_equality_solve

LIMITS = Limits(10.0, 20.0, 30.0)


def free_tasc(n, span=100.0):
    box = box_polyhedron([-span] * 3, [span] * 3)
    return TimeAwareCorridor(SafeCorridor([box]), [[] for _ in range(n)])


def straight_path(length, n=50):
    x = np.linspace(0.0, length, n)
    return Path(np.stack([x, np.zeros(n), np.zeros(n)], axis=1))


# -- propagate -------------------------------------------------------------------

def test_propagate_constant_velocity():
    s = AgentState([0, 0, 0], [1.0, 0, 0], [0, 0, 0])
    out = propagate(s, [0, 0, 0], 0.1)
    assert np.allclose(out.position, [0.1, 0, 0])


def test_propagate_pure_jerk():
    s = AgentState.rest([0, 0, 0])
    out = propagate(s, [6.0, 0, 0], 1.0)
    assert np.allclose(out.position, [1.0, 0, 0])
    assert np.allclose(out.velocity, [3.0, 0, 0])
    assert np.allclose(out.acceleration, [6.0, 0, 0])


def test_propagate_half_steps_compose(rng):
    for _ in range(50):
        s = AgentState(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3))
        j = rng.normal(size=3)
        h = float(rng.uniform(0.01, 1.0))
        full = propagate(s, j, h)
        halves = propagate(propagate(s, j, h / 2), j, h / 2)
        assert np.allclose(full.position, halves.position, atol=1e-12)
        assert np.allclose(full.velocity, halves.velocity, atol=1e-12)
        assert np.allclose(full.acceleration, halves.acceleration, atol=1e-12)


# -- reference sampling ------------------------------------------------------------

def test_reference_paper_spacing():
    ref = sample_reference(straight_path(10.0), 4.5, 9, 0.1, None, None, 0.4)
    d = np.diff(ref.points[:, 0])
    assert ref.points[0, 0] == pytest.approx(0.45, abs=1e-9)
    assert np.allclose(d, 0.45, atol=1e-9)


def test_reference_clamps_at_goal():
    path = Path(np.zeros((1, 3)))
    ref = sample_reference(path, 4.5, 9, 0.1, None, None, 0.4)
    assert np.allclose(ref.points, 0.0)
    assert len(ref.points) == 9


def test_reference_braking_envelope_slows_near_end():
    ref = sample_reference(straight_path(1.0), 4.5, 9, 0.1, None, None, 0.4)
    d = np.diff(np.concatenate([[0.0], ref.points[:, 0]]))
    assert (np.diff(d) <= 1e-9).all()  # monotonically slowing
    assert ref.points[-1, 0] <= 1.0 + 1e-9


def test_reference_gate_keeps_previous_when_lagging():
    # the stitched path always starts at the previous reference's first point
    prev = LocalReference(np.stack([np.linspace(0.45, 4.05, 9),
                                    np.zeros(9), np.zeros(9)], axis=1))
    path = Path(np.stack([np.linspace(0.45, 20.0, 60), np.zeros(60),
                          np.zeros(60)], axis=1))
    behind = DiscreteTrajectory.at_rest([3.0, 0, 0], 9, 0.1)
    ref = sample_reference(path, 4.5, 9, 0.1, prev, behind, 0.4)
    # kept: end pinned at the previous end, points still on the path
    assert np.allclose(ref.end, prev.end, atol=1e-9)
    # a second lagging iteration (path restitched from the reference start)
    # does not let the end creep either way
    path2 = Path(np.stack([np.linspace(ref.points[0, 0], 20.0, 60),
                           np.zeros(60), np.zeros(60)], axis=1))
    ref2 = sample_reference(path2, 4.5, 9, 0.1, ref, behind, 0.4)
    assert np.allclose(ref2.end, prev.end, atol=1e-9)


def test_reference_gate_passes_when_caught_up():
    prev = LocalReference(np.stack([np.linspace(0.45, 4.05, 9),
                                    np.zeros(9), np.zeros(9)], axis=1))
    path = Path(np.stack([np.linspace(0.45, 20.0, 60), np.zeros(60),
                          np.zeros(60)], axis=1))
    near = DiscreteTrajectory.at_rest([4.0, 0, 0], 9, 0.1)
    ref = sample_reference(path, 4.5, 9, 0.1, prev, near, 0.4)
    assert ref.points[-1, 0] > prev.points[-1, 0] + 0.3


def test_reference_advance_steps_scale():
    one = sample_reference(straight_path(20.0), 4.5, 9, 0.1, None, None, 0.4,
                           advance_steps=1)
    two = sample_reference(straight_path(20.0), 4.5, 9, 0.1, None, None, 0.4,
                           advance_steps=2)
    assert np.allclose(two.points[:-1], one.points[1:], atol=1e-9)


# -- convex subproblem -------------------------------------------------------------

def test_qp_at_rest_on_reference_stays():
    n = 9
    opt = TrajectoryOptimizer(n, 0.1, LIMITS)
    x0 = AgentState.rest([1.0, 2.0, 0.5])
    ref = LocalReference(np.tile(x0.position, (n, 1)))
    sol = opt.solve_qp((0,) * n, free_tasc(n), x0, ref)
    assert sol is not None
    assert sol.cost == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(sol.jerks, 0.0, atol=1e-9)


def test_qp_terminal_rest_always():
    n = 6
    opt = TrajectoryOptimizer(n, 0.1, LIMITS)
    x0 = AgentState([0, 0, 0], [2.0, -1.0, 0.5], [1.0, 0, 0])
    ref = LocalReference(np.tile([1.5, 0.5, 0.2], (n, 1)))
    sol = opt.solve_qp((0,) * n, free_tasc(n), x0, ref)
    assert sol is not None
    assert np.linalg.norm(sol.states[-1].velocity) <= 1e-6
    assert np.linalg.norm(sol.states[-1].acceleration) <= 1e-6


def test_qp_matches_direct_kkt_solve():
    # no active inequalities: the solution is the equality-constrained
    # optimum, reproducible by one dense KKT linear solve
    n = 3
    opt = TrajectoryOptimizer(n, 0.1, LIMITS)
    x0 = AgentState.rest([0.0, 0, 0])
    ref = LocalReference(np.tile([0.02, 0.0, 0.0], (n, 1)))
    sol = opt.solve_qp((0,) * n, free_tasc(n), x0, ref)
    assert sol is not None

    base = opt._base_data(free_tasc(n), x0, ref)
    g, _, _, A_eq, b_eq = base[:5]
    expect = kkt_equality_solve(opt._qp.H, g, A_eq, b_eq)
    assert np.allclose(sol.jerks.ravel(), expect, atol=1e-7)


def test_qp_dynamics_consistency(rng):
    # gentle start states: terminal rest within 0.5 s stays feasible
    n = 5
    opt = TrajectoryOptimizer(n, 0.1, LIMITS)
    for _ in range(20):
        x0 = AgentState(rng.uniform(-1, 1, 3), rng.uniform(-0.5, 0.5, 3),
                        rng.uniform(-0.5, 0.5, 3))
        ref = LocalReference(rng.uniform(-1, 1, size=(n, 3)))
        sol = opt.solve_qp((0,) * n, free_tasc(n), x0, ref)
        assert sol is not None
        traj = DiscreteTrajectory(sol.states, 0.1, 0, jerks=sol.jerks)
        assert dynamics_residual(traj) <= 1e-9


def test_qp_respects_limits():
    n = 9
    opt = TrajectoryOptimizer(n, 0.1, LIMITS)
    x0 = AgentState.rest([0, 0, 0])
    ref = LocalReference(np.tile([50.0, 0, 0], (n, 1)))  # unreachable
    sol = opt.solve_qp((0,) * n, free_tasc(n), x0, ref)
    assert sol is not None
    for s in sol.states:
        assert np.all(np.abs(s.velocity) <= 10.0 + 1e-7)
        assert np.all(np.abs(s.acceleration) <= 20.0 + 1e-7)
    assert np.all(np.abs(sol.jerks) <= 30.0 + 1e-7)


def test_qp_infeasible_when_box_too_tight():
    n = 4
    opt = TrajectoryOptimizer(n, 0.1, LIMITS)
    tiny = box_polyhedron([-0.05, -0.05, -0.05], [0.05, 0.05, 0.05])
    tasc = TimeAwareCorridor(SafeCorridor([tiny]), [[] for _ in range(n)])
    x0 = AgentState([0, 0, 0], [8.0, 0, 0], [0, 0, 0])  # way too fast to stay
    ref = LocalReference(np.zeros((n, 3)))
    assert opt.solve_qp((0,) * n, tasc, x0, ref) is None


def test_cost_monotone_in_added_plane(rng):
    # adding a separating plane to a slice never decreases the optimal cost
    for _ in range(20):
        opt, tasc, x0, ref = gen_instance(rng, n_peers=0)
        n = opt.horizon
        try:
            base = opt.solve(tasc, x0, ref)
        except Infeasible:
            continue
        peer_pos = x0.position + np.array([0.8, 0.1, 0.0])
        plane = separating_hyperplane(x0.position, peer_pos, 0.125, 0.0, 0.0)
        tasc2 = TimeAwareCorridor(tasc.corridor,
                                  [[plane] for _ in range(n)])
        try:
            constrained = opt.solve(tasc2, x0, ref)
        except Infeasible:
            continue
        assert constrained.cost >= base.cost - 1e-9 * (1 + abs(base.cost))


# -- combinatorial layer ------------------------------------------------------------

def test_single_polyhedron_equals_plain_qp():
    n = 5
    opt = TrajectoryOptimizer(n, 0.1, LIMITS)
    tasc = free_tasc(n)
    x0 = AgentState.rest([0, 0, 0])
    ref = LocalReference(np.tile([1.0, 0.5, 0.0], (n, 1)))
    direct = opt.solve_qp((0,) * n, tasc, x0, ref)
    combin = opt.solve(tasc, x0, ref)
    assert combin.assignment == (0,) * n
    assert combin.cost == pytest.approx(direct.cost, rel=1e-9)


def test_two_boxes_forced_transition():
    # two boxes overlapping in a thin slab: the trajectory must switch
    n = 4
    opt = TrajectoryOptimizer(n, 0.1, Limits(10.0, 40.0, 400.0))
    a = box_polyhedron([-1.0, -1, -1], [0.25, 1, 1])
    b = box_polyhedron([0.05, -1, -1], [2.0, 1, 1])
    tasc = TimeAwareCorridor(SafeCorridor([a, b]), [[] for _ in range(n)])
    x0 = AgentState([0.0, 0, 0], [1.5, 0, 0], [0, 0, 0])
    ref = LocalReference(np.tile([1.2, 0.0, 0.0], (n, 1)))
    sol = opt.solve(tasc, x0, ref)
    enum = opt.solve_enumerate(tasc, x0, ref)
    assert sol.cost == pytest.approx(enum.cost, rel=1e-6)
    assert sol.assignment[0] in (0, 1) and sol.assignment[-1] == 1


def test_branch_and_bound_equals_enumeration(rng):
    agree = 0
    for _ in range(60):
        opt, tasc, x0, ref = gen_instance(rng)
        try:
            bb = opt.solve(tasc, x0, ref)
            bb_cost = bb.cost
        except Infeasible:
            bb = None
            bb_cost = None
        try:
            enum = opt.solve_enumerate(tasc, x0, ref)
            enum_cost = enum.cost
        except Infeasible:
            enum = None
            enum_cost = None
        assert (bb is None) == (enum is None)
        if bb is None:
            continue
        assert bb_cost == pytest.approx(enum_cost, rel=1e-6, abs=1e-9)
        trajectory_checks(bb, tasc, opt)
        agree += 1
    assert agree >= 30  # the generator must produce mostly feasible cases


def test_infeasible_when_every_assignment_fails():
    n = 3
    opt = TrajectoryOptimizer(n, 0.1, LIMITS)
    tiny = box_polyhedron([-0.03] * 3, [0.03] * 3)
    tasc = TimeAwareCorridor(SafeCorridor([tiny]), [[] for _ in range(n)])
    x0 = AgentState([0, 0, 0], [9.0, 0, 0], [0, 0, 0])
    ref = LocalReference(np.zeros((n, 3)))
    with pytest.raises(Infeasible):
        opt.solve(tasc, x0, ref)
    with pytest.raises(Infeasible):
        opt.solve_enumerate(tasc, x0, ref)


def test_warm_start_used_as_incumbent():
    n = 4
    opt = TrajectoryOptimizer(n, 0.1, LIMITS)
    tasc = free_tasc(n)
    x0 = AgentState.rest([0, 0, 0])
    ref = LocalReference(np.tile([0.5, 0, 0], (n, 1)))
    warm = np.tile(x0.position, (n + 1, 1))
    sol = opt.solve(tasc, x0, ref, warm_positions=warm)
    assert sol.cost < np.inf


def test_qp_dump_writes_matrices(tmp_path):
    n = 3
    opt = TrajectoryOptimizer(n, 0.1, LIMITS)
    tasc = free_tasc(n)
    x0 = AgentState.rest([0, 0, 0])
    ref = LocalReference(np.zeros((n, 3)))
    out = tmp_path / "qp.txt"
    opt.dump_qp(str(out), tasc, x0, ref, (0,) * n)
    text = out.read_text()
    for name in ("# H", "# g", "# A_in", "# b_in", "# A_eq", "# b_eq"):
        assert name in text
