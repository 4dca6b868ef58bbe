"""Agent-centered occupancy grids.

Each agent carries a fixed-size voxel grid that is re-rasterized around its
current position every planning iteration. Grid origins are snapped to the
voxel-size lattice so grids of different agents (or of the same agent at
different times) agree about occupancy wherever they overlap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

FREE = False
OCCUPIED = True

# epsilon used when deciding whether a box/point touches a voxel
_GEOM_EPS = 1e-9


@dataclass
class Box:
    """Axis-aligned box given by min/max corners (meters)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if np.any(self.hi < self.lo):
            raise ValueError(f"box has hi < lo: {self.lo} .. {self.hi}")

    def contains(self, point: np.ndarray) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))


@dataclass
class WorldModel:
    """Ground-truth static world: obstacle boxes inside an arena box.

    The bounds are used for validation and plotting; they are not rasterized
    as occupied space (the simulated arena is open).
    """

    obstacles: list[Box]
    bounds: Box

    def __post_init__(self):
        for i, ob in enumerate(self.obstacles):
            inside = np.all(ob.lo >= self.bounds.lo - _GEOM_EPS) and np.all(
                ob.hi <= self.bounds.hi + _GEOM_EPS
            )
            if not inside:
                raise ValueError(f"obstacle {i} outside world bounds")


class VoxelGrid:
    """Dense binary occupancy grid.

    occupancy[i, j, k] is True when the voxel is occupied. origin is the
    world-space min corner; voxel (i, j, k) covers
    origin + [i, i+1) * voxel_size per axis.
    """

    def __init__(self, origin, counts, voxel_size: float, occupancy: np.ndarray | None = None):
        self.origin = np.asarray(origin, dtype=float)
        self.counts = np.asarray(counts, dtype=int)
        self.voxel_size = float(voxel_size)
        if np.any(self.counts < 1):
            raise ValueError(f"grid counts must be >= 1, got {self.counts}")
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be > 0")
        if occupancy is None:
            occupancy = np.zeros(tuple(self.counts), dtype=bool)
        if occupancy.shape != tuple(self.counts):
            raise ValueError("occupancy shape does not match counts")
        self.occupancy = occupancy

    # -- geometry helpers ---------------------------------------------------

    @property
    def extent(self) -> np.ndarray:
        return self.counts * self.voxel_size

    @property
    def max_corner(self) -> np.ndarray:
        return self.origin + self.extent

    def copy(self) -> "VoxelGrid":
        return VoxelGrid(self.origin.copy(), self.counts.copy(), self.voxel_size,
                         self.occupancy.copy())

    def contains_point(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.origin) and np.all(p < self.max_corner))

    def world_to_index(self, point) -> tuple[int, int, int]:
        """Voxel index of a world point (clamped to valid range)."""
        p = np.asarray(point, dtype=float)
        idx = np.floor((p - self.origin) / self.voxel_size).astype(int)
        idx = np.clip(idx, 0, self.counts - 1)
        return tuple(int(v) for v in idx)

    def index_to_center(self, index) -> np.ndarray:
        return self.origin + (np.asarray(index, dtype=float) + 0.5) * self.voxel_size

    def is_free(self, index) -> bool:
        return not self.occupancy[tuple(index)]

    def is_free_point(self, point) -> bool:
        if not self.contains_point(point):
            return False
        return self.is_free(self.world_to_index(point))

    def is_border(self, index) -> bool:
        idx = np.asarray(index)
        return bool(np.any(idx == 0) or np.any(idx == self.counts - 1))

    def occupied_centers(self) -> np.ndarray:
        """World-space centers of all occupied voxels, shape (n, 3)."""
        idx = np.argwhere(self.occupancy)
        if idx.size == 0:
            return np.zeros((0, 3))
        return self.origin + (idx + 0.5) * self.voxel_size


def grid_counts(extent, voxel_size: float) -> np.ndarray:
    """Number of voxels per axis covering the requested extent.

    Exact multiples of the voxel size are kept exact (15 m at 0.3 m is 50
    voxels, not 51 from float noise).
    """
    extent = np.asarray(extent, dtype=float)
    return np.ceil(extent / voxel_size - 1e-9).astype(int)


def rasterize(world: WorldModel, center, extent, voxel_size: float) -> VoxelGrid:
    """Rasterize the world into a grid centered (lattice-snapped) on `center`.

    A voxel is occupied when its box overlaps any obstacle box with positive
    volume; obstacles that merely touch a voxel face leave it free. After
    construction `center` lies inside the grid's center voxel (within half a
    voxel per axis: lattice snapping moves the origin by at most half a
    voxel).
    """
    extent = np.asarray(extent, dtype=float)
    if np.any(extent <= 0) or voxel_size <= 0:
        raise ValueError("extent and voxel_size must be positive")
    center = np.asarray(center, dtype=float)
    counts = grid_counts(extent, voxel_size)
    center_voxel = counts // 2
    # origin placing `center` exactly at the center voxel's midpoint, then
    # snapped to the voxel lattice (round half up for determinism)
    raw_origin = center - (center_voxel + 0.5) * voxel_size
    origin = np.floor(raw_origin / voxel_size + 0.5) * voxel_size

    grid = VoxelGrid(origin, counts, voxel_size)
    gmax = grid.max_corner
    for ob in world.obstacles:
        if np.any(ob.lo >= gmax - _GEOM_EPS) or np.any(ob.hi <= origin + _GEOM_EPS):
            continue
        lo_idx = np.floor((ob.lo - origin) / voxel_size + _GEOM_EPS).astype(int)
        hi_idx = np.ceil((ob.hi - origin) / voxel_size - _GEOM_EPS).astype(int)
        lo_idx = np.clip(lo_idx, 0, counts)
        hi_idx = np.clip(hi_idx, 0, counts)
        if np.any(hi_idx <= lo_idx):
            continue
        grid.occupancy[lo_idx[0]:hi_idx[0], lo_idx[1]:hi_idx[1], lo_idx[2]:hi_idx[2]] = OCCUPIED
    return grid


def inflate(grid: VoxelGrid, radius: float) -> VoxelGrid:
    """Dilate occupied voxels by a Euclidean ball over voxel centers.

    A free voxel becomes occupied when its center lies within `radius` of
    some occupied voxel's center. radius < voxel_size is a no-op by this
    metric.
    """
    if radius < 0:
        raise ValueError("inflate radius must be >= 0")
    reach = int(np.floor(radius / grid.voxel_size + 1e-9))
    if reach == 0 or not grid.occupancy.any():
        return grid.copy()
    rng = np.arange(-reach, reach + 1)
    di, dj, dk = np.meshgrid(rng, rng, rng, indexing="ij")
    ball = (di * di + dj * dj + dk * dk) * grid.voxel_size ** 2 <= radius ** 2 + 1e-12
    out = grid.copy()
    out.occupancy = ndimage.binary_dilation(grid.occupancy, structure=ball)
    return out


def clear_borders(grid: VoxelGrid) -> VoxelGrid:
    """Force every border voxel free (any index at 0 or counts-1)."""
    out = grid.copy()
    occ = out.occupancy
    occ[0, :, :] = FREE
    occ[-1, :, :] = FREE
    occ[:, 0, :] = FREE
    occ[:, -1, :] = FREE
    occ[:, :, 0] = FREE
    occ[:, :, -1] = FREE
    return out


def intermediate_goal(grid: VoxelGrid, agent_pos, goal) -> np.ndarray:
    """Project an out-of-grid goal onto the grid border.

    Returns the goal itself when it lies inside the grid; otherwise the
    center of the border voxel where the segment agent_pos -> goal exits the
    grid. Callers are expected to clear the grid borders before searching a
    path to the returned point.
    """
    agent_pos = np.asarray(agent_pos, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if not grid.contains_point(agent_pos):
        raise ValueError("agent position outside grid extent")
    if grid.contains_point(goal):
        return goal.copy()

    d = goal - agent_pos
    # parametric exit of the segment from the grid box
    t_exit = np.inf
    for ax in range(3):
        if d[ax] > _GEOM_EPS:
            t_exit = min(t_exit, (grid.max_corner[ax] - agent_pos[ax]) / d[ax])
        elif d[ax] < -_GEOM_EPS:
            t_exit = min(t_exit, (grid.origin[ax] - agent_pos[ax]) / d[ax])
    t_exit = min(max(t_exit, 0.0), 1.0)
    # step just inside the exit face so the flooring lands on the border voxel
    probe = agent_pos + (t_exit - 1e-7 / max(np.linalg.norm(d), 1.0)) * d
    idx = grid.world_to_index(probe)
    return grid.index_to_center(idx)


def nearest_free_voxel(grid: VoxelGrid, point) -> tuple[int, int, int] | None:
    """Index of the free voxel nearest to `point` (deterministic scan).

    Searches outward in cubic shells; within a shell, ties break by center
    distance, then index order. Returns None when the grid has no free voxel.
    """
    start = grid.world_to_index(point)
    if grid.is_free(start):
        return start
    p = np.asarray(point, dtype=float)
    max_shell = int(np.max(grid.counts))
    for shell in range(1, max_shell):
        best = None
        lo = np.maximum(np.array(start) - shell, 0)
        hi = np.minimum(np.array(start) + shell, grid.counts - 1)
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                for k in range(lo[2], hi[2] + 1):
                    if max(abs(i - start[0]), abs(j - start[1]), abs(k - start[2])) != shell:
                        continue
                    if grid.occupancy[i, j, k]:
                        continue
                    d = float(np.linalg.norm(grid.index_to_center((i, j, k)) - p))
                    key = (d, i, j, k)
                    if best is None or key < best:
                        best = key
        if best is not None:
            return (best[1], best[2], best[3])
    return None
