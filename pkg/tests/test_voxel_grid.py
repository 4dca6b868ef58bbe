import numpy as np
import pytest

from swarmplan.voxel_grid import (Box, WorldModel, clear_borders, grid_counts,
                                  inflate, intermediate_goal, rasterize)

from conftest import random_world
from oracles import brute_force_inflate, ray_march_exit_voxel


def test_counts_exact_multiples():
    assert np.array_equal(grid_counts((15.0, 15.0, 3.3), 0.3), [50, 50, 11])
    assert np.array_equal(grid_counts((1.0, 0.9, 0.31), 0.3), [4, 3, 2])


def test_rasterize_empty_world_all_free(empty_world):
    grid = rasterize(empty_world, (1.0, 2.0, 3.0), (6.0, 6.0, 3.0), 0.3)
    assert not grid.occupancy.any()


def test_rasterize_paper_grid_dimensions(empty_world):
    grid = rasterize(empty_world, (0, 0, 1), (15.0, 15.0, 3.3), 0.3)
    assert tuple(grid.counts) == (50, 50, 11)


def test_rasterize_box_covering_one_voxel_marks_exactly_one():
    # obstacle aligned exactly with one voxel of the lattice
    world = WorldModel([Box([0.3, 0.6, 0.0], [0.6, 0.9, 0.3])],
                      Box([-50, -50, -50], [50, 50, 50]))
    grid = rasterize(world, (0.45, 0.45, 0.45), (3.0, 3.0, 3.0), 0.3)
    assert int(grid.occupancy.sum()) == 1
    # oracle: point-in-box test over all voxel centers
    occ = grid.occupied_centers()
    assert len(occ) == 1 and world.obstacles[0].contains(occ[0])


def test_rasterize_center_in_center_voxel(empty_world, rng):
    for _ in range(25):
        center = rng.uniform(-5, 5, size=3)
        grid = rasterize(empty_world, center, (4.2, 3.0, 2.1), 0.3)
        c_idx = tuple(grid.counts // 2)
        assert grid.world_to_index(center) == c_idx
        assert np.all(np.abs(center - grid.index_to_center(c_idx))
                      <= 0.15 + 1e-12)


def test_rasterize_lattice_alignment(rng):
    # two overlapping grids agree about occupancy at shared voxel centers
    world = random_world(rng)
    g1 = rasterize(world, (0.0, 0.0, 0.0), (8.0, 8.0, 4.0), 0.4)
    g2 = rasterize(world, (1.7, -0.9, 0.6), (8.0, 8.0, 4.0), 0.4)
    assert np.allclose((g1.origin - g2.origin) / 0.4,
                       np.round((g1.origin - g2.origin) / 0.4))
    for _ in range(200):
        idx = tuple(rng.integers(0, g1.counts))
        p = g1.index_to_center(idx)
        if not g2.contains_point(p):
            continue
        assert g1.occupancy[idx] == g2.occupancy[g2.world_to_index(p)]


def test_inflate_zero_radius_identity(rng):
    grid = rasterize(random_world(rng), (0, 0, 0), (6, 6, 3), 0.3)
    out = inflate(grid, 0.0)
    assert np.array_equal(out.occupancy, grid.occupancy)


def test_inflate_single_voxel_euclidean_neighborhood(empty_world):
    grid = rasterize(empty_world, (0, 0, 0), (3, 3, 3), 0.3)
    grid.occupancy[5, 5, 5] = True
    out = inflate(grid, 0.3)
    # 6-neighborhood plus center under the Euclidean metric
    assert int(out.occupancy.sum()) == 7
    expect = brute_force_inflate(grid.occupancy, 0.3, 0.3)
    assert np.array_equal(out.occupancy, expect)


def test_inflate_matches_brute_force(rng):
    for radius in (0.3, 0.45, 0.75):
        occ = rng.random((7, 6, 5)) < 0.1
        grid = rasterize(WorldModel([], Box([-9]*3, [9]*3)), (0, 0, 0),
                         (2.1, 1.8, 1.5), 0.3)
        grid.occupancy = occ.copy()
        out = inflate(grid, radius)
        assert np.array_equal(out.occupancy,
                              brute_force_inflate(occ, 0.3, radius))


def test_inflate_saturates_at_grid_diagonal(empty_world):
    grid = rasterize(empty_world, (0, 0, 0), (1.5, 1.5, 1.5), 0.3)
    grid.occupancy[2, 2, 2] = True
    out = inflate(grid, 10.0)
    assert out.occupancy.all()


def test_inflate_monotone_in_radius(rng):
    occ = rng.random((8, 8, 4)) < 0.08
    grid = rasterize(WorldModel([], Box([-9]*3, [9]*3)), (0, 0, 0),
                     (2.4, 2.4, 1.2), 0.3)
    grid.occupancy = occ
    prev = None
    for radius in (0.0, 0.3, 0.6, 0.9):
        cur = inflate(grid, radius).occupancy
        if prev is not None:
            assert np.all(prev <= cur)
        prev = cur


def test_clear_borders_all_free_unchanged(empty_world):
    grid = rasterize(empty_world, (0, 0, 0), (3, 3, 3), 0.3)
    assert not clear_borders(grid).occupancy.any()


def test_clear_borders_3x3x3_keeps_single_interior():
    grid = rasterize(WorldModel([], Box([-9]*3, [9]*3)), (0, 0, 0),
                     (0.9, 0.9, 0.9), 0.3)
    grid.occupancy[:] = True
    out = clear_borders(grid)
    assert int(out.occupancy.sum()) == 1
    assert out.occupancy[1, 1, 1]


def test_clear_borders_counts_on_paper_grid(empty_world):
    grid = rasterize(empty_world, (0, 0, 1), (15.0, 15.0, 3.3), 0.3)
    grid.occupancy[:] = True
    out = clear_borders(grid)
    # oracle: index predicate count
    interior = (50 - 2) * (50 - 2) * (11 - 2)
    assert int(out.occupancy.sum()) == interior
    assert 50 * 50 * 11 - interior == 6764


def test_intermediate_goal_inside_returns_goal(empty_world):
    grid = rasterize(empty_world, (0, 0, 0), (6, 6, 3), 0.3)
    goal = np.array([1.0, -0.7, 0.4])
    out = intermediate_goal(grid, np.zeros(3), goal)
    assert np.allclose(out, goal)


def test_intermediate_goal_axis_exit(empty_world):
    grid = rasterize(empty_world, (0, 0, 0), (6, 6, 3), 0.3)
    agent = np.zeros(3)
    goal = np.array([100.0, 0.0, 0.0])
    out = intermediate_goal(grid, agent, goal)
    exit_idx = ray_march_exit_voxel(grid, agent, goal)
    assert np.allclose(out, grid.index_to_center(exit_idx))
    # on the +x border, same row as the agent
    assert grid.world_to_index(out)[0] == grid.counts[0] - 1
    assert grid.world_to_index(out)[1:] == grid.world_to_index(agent)[1:]


def test_intermediate_goal_diagonal_matches_ray_march(empty_world, rng):
    grid = rasterize(empty_world, (0, 0, 0), (6, 6, 3), 0.3)
    for _ in range(40):
        agent = rng.uniform(-2.0, 2.0, size=3) * np.array([1, 1, 0.4])
        goal = rng.uniform(-40, 40, size=3)
        if grid.contains_point(goal):
            continue
        out = intermediate_goal(grid, agent, goal)
        assert grid.contains_point(out)
        assert grid.is_border(grid.world_to_index(out))
        # fine-stepped march so the sampled exit voxel is unambiguous
        exit_idx = ray_march_exit_voxel(grid, agent, goal, step_frac=0.002)
        assert grid.world_to_index(out) == exit_idx


def test_world_model_rejects_out_of_bounds_obstacle():
    with pytest.raises(ValueError):
        WorldModel([Box([0, 0, 0], [100, 1, 1])], Box([-5]*3, [5]*3))
