"""Online global path search and post-processing.

The search runs on the agent's local (inflated, border-cleared) grid with
26-connectivity and Euclidean edge costs. The heuristic is the exact
obstacle-free grid distance, which makes the search expand very few nodes in
open space while staying admissible and consistent, so returned costs are
optimal. A potential-field pass then pushes interior waypoints away from
obstacles, and the path is stitched onto the previous local reference so the
reference trajectory stays continuous across iterations.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .voxel_grid import VoxelGrid

_SQRT2 = np.sqrt(2.0)
_SQRT3 = np.sqrt(3.0)

# 26-connected neighborhood: (di, dj, dk, move length in voxels)
_MOVES = [
    (di, dj, dk, float(np.sqrt(di * di + dj * dj + dk * dk)))
    for di in (-1, 0, 1)
    for dj in (-1, 0, 1)
    for dk in (-1, 0, 1)
    if (di, dj, dk) != (0, 0, 0)
]


class NoPathError(Exception):
    """Goal voxel unreachable in the search grid."""


@dataclass
class Path:
    """Ordered waypoints in world coordinates; consecutive points distinct."""

    waypoints: np.ndarray  # (n, 3)

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
        if len(self.waypoints) == 0:
            raise ValueError("path needs at least one waypoint")

    def __len__(self) -> int:
        return len(self.waypoints)

    def length(self) -> float:
        if len(self.waypoints) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)))


def _grid_heuristic(da: int, db: int, dc: int) -> float:
    """Exact 26-connected free-space distance for an index offset, in voxels."""
    a, b, c = sorted((abs(da), abs(db), abs(dc)), reverse=True)
    return (a - b) + (b - c) * _SQRT2 + c * _SQRT3


def find_path(grid: VoxelGrid, start, goal) -> Path:
    """Shortest 26-connected grid path from start's voxel to goal's voxel.

    Waypoints are voxel centers with the exact start and goal points
    substituted at the ends. Raises NoPathError when the goal cannot be
    reached. The start voxel (and, after border clearing, the goal voxel)
    must be free.
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    s_idx = grid.world_to_index(start)
    g_idx = grid.world_to_index(goal)
    if not grid.is_free(s_idx):
        raise ValueError(f"start voxel {s_idx} is occupied")
    if not grid.is_free(g_idx):
        raise NoPathError(f"goal voxel {g_idx} is occupied")

    if s_idx == g_idx:
        if np.allclose(start, goal, atol=1e-12):
            return Path(start.reshape(1, 3))
        return Path(np.vstack([start, goal]))

    occ = grid.occupancy
    nx, ny, nz = (int(c) for c in grid.counts)
    vs = grid.voxel_size

    g_cost = {s_idx: 0.0}
    parent: dict[tuple[int, int, int], tuple[int, int, int]] = {}
    h0 = _grid_heuristic(g_idx[0] - s_idx[0], g_idx[1] - s_idx[1], g_idx[2] - s_idx[2]) * vs
    # tie-break on larger g so the frontier stays goal-directed
    open_heap = [(h0, 0.0, s_idx)]
    closed: set[tuple[int, int, int]] = set()

    while open_heap:
        f, neg_g, cur = heapq.heappop(open_heap)
        if cur in closed:
            continue
        if cur == g_idx:
            break
        closed.add(cur)
        ci, cj, ck = cur
        gc = g_cost[cur]
        for di, dj, dk, step in _MOVES:
            ni, nj, nk = ci + di, cj + dj, ck + dk
            if not (0 <= ni < nx and 0 <= nj < ny and 0 <= nk < nz):
                continue
            if occ[ni, nj, nk]:
                continue
            nxt = (ni, nj, nk)
            ng = gc + step * vs
            if ng < g_cost.get(nxt, np.inf) - 1e-15:
                g_cost[nxt] = ng
                parent[nxt] = cur
                h = _grid_heuristic(g_idx[0] - ni, g_idx[1] - nj, g_idx[2] - nk) * vs
                heapq.heappush(open_heap, (ng + h, -ng, nxt))
    else:
        raise NoPathError(f"no path from voxel {s_idx} to {g_idx}")

    chain = [g_idx]
    while chain[-1] != s_idx:
        chain.append(parent[chain[-1]])
    chain.reverse()

    pts = [start]
    for idx in chain[1:-1]:
        pts.append(grid.index_to_center(idx))
    pts.append(goal)
    return Path(_dedupe(np.asarray(pts)))


def path_cost(grid: VoxelGrid, start, goal) -> float:
    """Optimal grid-path cost (same search, waypoints discarded)."""
    p = find_path(grid, start, goal)
    s_idx = grid.world_to_index(start)
    # measure in voxel-chain space: endpoints back to their voxel centers
    pts = p.waypoints.copy()
    pts[0] = grid.index_to_center(s_idx)
    pts[-1] = grid.index_to_center(grid.world_to_index(goal))
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def _dedupe(points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    if len(points) < 2:
        return points
    keep = [points[0]]
    for p in points[1:]:
        if np.linalg.norm(p - keep[-1]) > tol:
            keep.append(p)
    return np.asarray(keep)


def clearance_field(grid: VoxelGrid) -> np.ndarray:
    """Distance (m) from each voxel center to the nearest occupied center."""
    if not grid.occupancy.any():
        return np.full(tuple(grid.counts), np.inf)
    return ndimage.distance_transform_edt(~grid.occupancy, sampling=grid.voxel_size)


def _sample_field(field: np.ndarray, grid: VoxelGrid, point: np.ndarray) -> float:
    coords = (np.asarray(point) - grid.origin) / grid.voxel_size - 0.5
    coords = np.clip(coords, 0.0, np.asarray(field.shape) - 1.0)
    return float(ndimage.map_coordinates(field, coords.reshape(3, 1), order=1,
                                         mode="nearest")[0])


def push_away(grid: VoxelGrid, path: Path, influence_radius: float | None = None,
              step_gain: float = 0.3, sweeps: int = 5) -> Path:
    """Push interior waypoints away from obstacles along the clearance gradient.

    Each sweep displaces every interior waypoint by step_gain * voxel_size in
    the direction of increasing clearance, but only while the waypoint stays
    closer than influence_radius to an obstacle. Moves that would land in an
    occupied voxel, leave the grid, or reduce the waypoint's clearance are
    rejected, so the path's minimum clearance never decreases and endpoints
    never move.
    """
    if influence_radius is None:
        influence_radius = 3.0 * grid.voxel_size
    if not grid.occupancy.any() or len(path) <= 2:
        return Path(path.waypoints.copy())

    field = clearance_field(grid)
    pts = path.waypoints.copy()
    step = step_gain * grid.voxel_size
    fd = 0.5 * grid.voxel_size  # finite-difference half step
    for _ in range(sweeps):
        for w in range(1, len(pts) - 1):
            d = _sample_field(field, grid, pts[w])
            if d >= influence_radius:
                continue
            grad = np.zeros(3)
            for ax in range(3):
                e = np.zeros(3)
                e[ax] = fd
                grad[ax] = _sample_field(field, grid, pts[w] + e) - _sample_field(
                    field, grid, pts[w] - e)
            norm = np.linalg.norm(grad)
            if norm < 1e-12:
                continue
            cand = pts[w] + step * grad / norm
            if not grid.contains_point(cand):
                continue
            if not grid.is_free(grid.world_to_index(cand)):
                continue
            if _sample_field(field, grid, cand) < d:
                continue
            pts[w] = cand
    return Path(_dedupe(pts))


def min_clearance(grid: VoxelGrid, path: Path) -> float:
    field = clearance_field(grid)
    return min(_sample_field(field, grid, p) for p in path.waypoints)


def stitch(prev_ref_points: np.ndarray | None, new_path: Path,
           junction_tol: float = 1e-9) -> Path:
    """Concatenate the previous local reference with a freshly searched path.

    The search starts at the reference's final point, so that point is the
    junction and appears once in the output. Exact consecutive duplicates
    (e.g. a reference clamped at the path end) are collapsed.
    """
    if prev_ref_points is None:
        return Path(_dedupe(new_path.waypoints.copy()))
    prev = np.asarray(prev_ref_points, dtype=float).reshape(-1, 3)
    gap = np.linalg.norm(new_path.waypoints[0] - prev[-1])
    if gap > junction_tol:
        raise ValueError(f"stitch junction mismatch: {gap:.3e} m")
    merged = np.vstack([prev, new_path.waypoints[1:]])
    return Path(_dedupe(merged))
