import numpy as np
import pytest

from swarmplan.global_path import (NoPathError, Path, find_path, min_clearance,
                                   path_cost, push_away, stitch)
from swarmplan.voxel_grid import Box, VoxelGrid, WorldModel, rasterize

from oracles import astar_grid_cost


def make_grid(shape, voxel=0.3):
    return VoxelGrid(np.zeros(3), np.array(shape), voxel)


def test_same_voxel_single_waypoint():
    grid = make_grid((4, 4, 1))
    p = np.array([0.31, 0.32, 0.1])
    path = find_path(grid, p, p)
    assert len(path) == 1
    assert np.allclose(path.waypoints[0], p)


def test_same_voxel_distinct_points_keeps_both():
    grid = make_grid((4, 4, 1))
    path = find_path(grid, [0.31, 0.32, 0.1], [0.40, 0.35, 0.1])
    assert len(path) == 2


def test_empty_grid_diagonal_cost():
    grid = make_grid((10, 10, 1))
    start = grid.index_to_center((0, 0, 0))
    goal = grid.index_to_center((9, 9, 0))
    cost = path_cost(grid, start, goal)
    assert cost == pytest.approx(9 * np.sqrt(2.0) * 0.3, abs=1e-9)


def test_wall_with_gap():
    grid = make_grid((9, 9, 1))
    grid.occupancy[4, :, 0] = True
    grid.occupancy[4, 6, 0] = False  # the gap
    start = grid.index_to_center((0, 0, 0))
    goal = grid.index_to_center((8, 0, 0))
    path = find_path(grid, start, goal)
    cols = {grid.world_to_index(w) for w in path.waypoints}
    assert (4, 6, 0) in cols
    oracle = astar_grid_cost(grid.occupancy, (0, 0, 0), (8, 0, 0), 0.3)
    assert path_cost(grid, start, goal) == pytest.approx(oracle, abs=1e-9)


def test_no_path_raises():
    grid = make_grid((9, 9, 1))
    grid.occupancy[4, :, 0] = True
    with pytest.raises(NoPathError):
        find_path(grid, grid.index_to_center((0, 0, 0)),
                  grid.index_to_center((8, 0, 0)))


def test_endpoints_substituted_exactly():
    grid = make_grid((10, 10, 2))
    start = np.array([0.07, 0.12, 0.19])
    goal = np.array([2.83, 2.71, 0.44])
    path = find_path(grid, start, goal)
    assert np.array_equal(path.waypoints[0], start)
    assert np.array_equal(path.waypoints[-1], goal)
    for w in path.waypoints:
        assert grid.is_free(grid.world_to_index(w))


def test_cost_equality_random_grids(rng):
    # production search equals a plain A* oracle on randomized grids
    for trial in range(100):
        shape = rng.integers(4, 11, size=3)
        grid = make_grid(shape)
        grid.occupancy = rng.random(tuple(shape)) < 0.25
        free = np.argwhere(~grid.occupancy)
        if len(free) < 2:
            continue
        s, g = free[rng.integers(len(free))], free[rng.integers(len(free))]
        oracle = astar_grid_cost(grid.occupancy, tuple(s), tuple(g), 0.3)
        try:
            cost = path_cost(grid, grid.index_to_center(s),
                             grid.index_to_center(g))
        except NoPathError:
            cost = None
        if oracle is None:
            assert cost is None
        else:
            assert cost == pytest.approx(oracle, abs=1e-9)


def _wall_world_grid():
    world = WorldModel([Box([0.9, -3.0, -3.0], [1.2, 3.0, 3.0])],
                       Box([-50] * 3, [50] * 3))
    return rasterize(world, (0, 0, 0), (6.0, 6.0, 2.4), 0.3)


def test_push_away_noop_far_from_obstacles():
    grid = make_grid((20, 20, 4))
    pts = np.stack([np.linspace(0.5, 5.5, 12), np.full(12, 3.0),
                    np.full(12, 0.5)], axis=1)
    out = push_away(grid, Path(pts))
    assert np.allclose(out.waypoints, pts)


def test_push_away_increases_clearance_and_keeps_free():
    grid = _wall_world_grid()
    # path bowing toward the wall; the graze is away from the endpoints
    y = np.linspace(-2.0, 2.0, 14)
    x = 0.75 - 0.55 * (np.abs(y) / 2.0) ** 2
    pts = np.stack([x, y, np.zeros_like(y)], axis=1)
    path = Path(pts)
    before = min_clearance(grid, path)
    out = push_away(grid, path)
    after = min_clearance(grid, out)
    assert after > before
    assert np.allclose(out.waypoints[0], pts[0])
    assert np.allclose(out.waypoints[-1], pts[-1])
    for w in out.waypoints:
        assert grid.is_free(grid.world_to_index(w))


def test_push_away_never_decreases_clearance(rng):
    grid = _wall_world_grid()
    for _ in range(20):
        a = rng.uniform(-2.5, 2.5, size=3) * np.array([1, 1, 0.3])
        b = rng.uniform(-2.5, 2.5, size=3) * np.array([1, 1, 0.3])
        pts = np.linspace(a, b, 10)
        keep = [p for p in pts if grid.is_free(grid.world_to_index(p))]
        if len(keep) < 3:
            continue
        path = Path(np.asarray(keep))
        out = push_away(grid, path)
        assert min_clearance(grid, out) >= min_clearance(grid, path) - 1e-9


def test_stitch_first_iteration_passthrough():
    path = Path(np.array([[0, 0, 0], [1, 0, 0]], dtype=float))
    out = stitch(None, path)
    assert np.allclose(out.waypoints, path.waypoints)


def test_stitch_counts():
    ref = np.stack([np.linspace(0, 1, 10), np.zeros(10), np.zeros(10)], axis=1)
    tail = np.stack([np.linspace(1, 2, 5), np.zeros(5), np.zeros(5)], axis=1)
    out = stitch(ref, Path(tail))
    # N+1 reference points plus M path points sharing the junction
    assert len(out) == 10 + 5 - 1


def test_stitch_junction_mismatch_raises():
    ref = np.array([[0, 0, 0], [1.0, 0, 0]])
    bad = Path(np.array([[1.0 + 1e-6, 0, 0], [2.0, 0, 0]]))
    with pytest.raises(ValueError):
        stitch(ref, bad)


def test_stitch_collapses_clamped_duplicates():
    ref = np.array([[0, 0, 0], [1, 0, 0], [1, 0, 0], [1, 0, 0]], dtype=float)
    tail = Path(np.array([[1, 0, 0], [2, 0, 0]], dtype=float))
    out = stitch(ref, tail)
    assert len(out) == 3
    d = np.linalg.norm(np.diff(out.waypoints, axis=0), axis=1)
    assert (d > 0).all()
