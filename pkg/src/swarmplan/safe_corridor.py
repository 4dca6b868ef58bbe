"""Safe Corridor generation and the rolling update across iterations.

A Safe Corridor is an ordered list of overlapping convex polyhedra covering
only free space. Polyhedra are built by greedy axis-aligned box inflation
from a seed voxel: each face grows one voxel layer at a time, round-robin
(+x, -x, +y, -y, +z, -z), while every newly covered voxel is free and in
bounds. The box is emitted as six halfspaces so downstream optimization code
never depends on the boxes being axis-aligned.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .global_path import Path
from .voxel_grid import VoxelGrid

CONTAIN_TOL = 1e-9


@dataclass
class Halfspace:
    """Points x with normal . x <= offset; normal has unit length."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float)
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"halfspace normal not unit length: |n| = {n}")
        self.offset = float(self.offset)

    def contains(self, point, tol: float = CONTAIN_TOL) -> bool:
        return float(self.normal @ np.asarray(point, dtype=float)) <= self.offset + tol


class Polyhedron:
    """Bounded intersection of halfspaces with a strictly interior seed point."""

    def __init__(self, halfspaces: list[Halfspace], seed,
                 box_lo=None, box_hi=None):
        if len(halfspaces) < 6:
            raise ValueError("a bounded polyhedron needs at least 6 halfspaces")
        self.halfspaces = halfspaces
        self.seed = np.asarray(seed, dtype=float)
        self.normals = np.asarray([h.normal for h in halfspaces])
        self.offsets = np.asarray([h.offset for h in halfspaces])
        # world-space box corners when the generator produced a box
        self.box_lo = None if box_lo is None else np.asarray(box_lo, dtype=float)
        self.box_hi = None if box_hi is None else np.asarray(box_hi, dtype=float)
        if not self.contains(self.seed, tol=-1e-12):
            raise ValueError("seed not strictly inside polyhedron")

    def contains(self, point, tol: float = CONTAIN_TOL) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(self.normals @ p <= self.offsets + tol))

    def contains_any(self, points: np.ndarray, tol: float = CONTAIN_TOL) -> bool:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return bool(np.any(np.all(pts @ self.normals.T <= self.offsets + tol, axis=1)))


def overlap_witness(a: Polyhedron, b: Polyhedron) -> np.ndarray | None:
    """A point in the closed intersection of two box polyhedra, if any."""
    if a.box_lo is None or b.box_lo is None:
        return None
    lo = np.maximum(a.box_lo, b.box_lo)
    hi = np.minimum(a.box_hi, b.box_hi)
    if np.any(lo > hi + 1e-12):
        return None
    return (lo + hi) / 2


@dataclass
class SafeCorridor:
    polyhedra: list[Polyhedron] = field(default_factory=list)
    witnesses: list[np.ndarray | None] = field(default_factory=list)

    def __post_init__(self):
        if not self.witnesses and len(self.polyhedra) > 1:
            self.witnesses = [overlap_witness(a, b) for a, b in
                              zip(self.polyhedra[:-1], self.polyhedra[1:])]

    def __len__(self) -> int:
        return len(self.polyhedra)

    def contains(self, point, tol: float = CONTAIN_TOL) -> bool:
        return any(p.contains(point, tol) for p in self.polyhedra)


def _box_to_polyhedron(grid: VoxelGrid, lo: np.ndarray, hi: np.ndarray,
                       seed_point: np.ndarray) -> Polyhedron:
    """Voxel index box [lo, hi] (inclusive) to world-space halfspaces."""
    wlo = grid.origin + lo * grid.voxel_size
    whi = grid.origin + (hi + 1) * grid.voxel_size
    halves = []
    for ax in range(3):
        n = np.zeros(3)
        n[ax] = 1.0
        halves.append(Halfspace(n, whi[ax]))
        halves.append(Halfspace(-n, -wlo[ax]))
    return Polyhedron(halves, seed_point, box_lo=wlo, box_hi=whi)


def gen_polyhedron(grid: VoxelGrid, seed_voxel) -> Polyhedron:
    """Grow a free-space box from a free seed voxel.

    Faces grow round-robin one layer at a time while the new layer is fully
    free and inside the grid; blocked faces stop growing individually. The
    result contains the seed voxel and no occupied voxel center.
    """
    seed = tuple(int(v) for v in seed_voxel)
    if grid.occupancy[seed]:
        raise ValueError(f"seed voxel {seed} is occupied")
    occ = grid.occupancy
    lo = np.array(seed, dtype=int)
    hi = np.array(seed, dtype=int)
    # (axis, direction) per face, fixed growth order
    faces = [(0, +1), (0, -1), (1, +1), (1, -1), (2, +1), (2, -1)]
    blocked = [False] * 6
    while not all(blocked):
        for f, (ax, sign) in enumerate(faces):
            if blocked[f]:
                continue
            nlo, nhi = lo.copy(), hi.copy()
            if sign > 0:
                nhi[ax] += 1
                layer_lo, layer_hi = nlo.copy(), nhi.copy()
                layer_lo[ax] = nhi[ax]
            else:
                nlo[ax] -= 1
                layer_lo, layer_hi = nlo.copy(), nhi.copy()
                layer_hi[ax] = nlo[ax]
            if nlo[ax] < 0 or nhi[ax] >= grid.counts[ax]:
                blocked[f] = True
                continue
            layer = occ[layer_lo[0]:layer_hi[0] + 1,
                        layer_lo[1]:layer_hi[1] + 1,
                        layer_lo[2]:layer_hi[2] + 1]
            if layer.any():
                blocked[f] = True
                continue
            lo, hi = nlo, nhi

    poly = _box_to_polyhedron(grid, lo, hi, grid.index_to_center(seed))
    _assert_free(poly, grid)
    return poly


def _assert_free(poly: Polyhedron, grid: VoxelGrid) -> None:
    """Safety gate: a polyhedron must not contain any occupied voxel center."""
    centers = grid.occupied_centers()
    if centers.size == 0:
        return
    inside = np.all(centers @ poly.normals.T <= poly.offsets - 1e-12, axis=1)
    if inside.any():
        raise AssertionError("polyhedron covers an occupied voxel center")


def sample_path(path: Path, step: float) -> np.ndarray:
    """Points along the path polyline at fixed arc-length steps (start included)."""
    pts = path.waypoints
    if len(pts) == 1:
        return pts.copy()
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    n = int(np.floor(total / step + 1e-9)) + 1
    s = np.minimum(np.arange(n) * step, total)
    out = np.empty((n, 3))
    for ax in range(3):
        out[:, ax] = np.interp(s, arc, pts[:, ax])
    if np.linalg.norm(out[-1] - pts[-1]) > 1e-12:
        out = np.vstack([out, pts[-1]])
    return out


def update_corridor(prev: SafeCorridor, mpc_positions: np.ndarray | None,
                    global_path: Path, grid: VoxelGrid, max_polyhedra: int) -> SafeCorridor:
    """Roll the corridor forward for a new iteration.

    Previous polyhedra containing at least one predicted trajectory position
    are retained in order; the rest are dropped. New polyhedra are then
    seeded at the first path sample (voxel-size spacing) outside everything
    retained so far, until the corridor holds max_polyhedra or the path has
    no uncovered free sample left.
    """
    if max_polyhedra < 1:
        raise ValueError("max_polyhedra must be >= 1")
    retained: list[Polyhedron] = []
    if mpc_positions is not None and len(prev.polyhedra) > 0:
        pts = np.asarray(mpc_positions, dtype=float).reshape(-1, 3)
        retained = [p for p in prev.polyhedra if p.contains_any(pts)]

    corridor = list(retained[:max_polyhedra])
    # half-voxel sampling so a diagonal path segment cannot straddle a
    # voxel-sized connector strip between two grown boxes without a seed
    samples = sample_path(global_path, grid.voxel_size / 2.0)
    for s in samples:
        if len(corridor) >= max_polyhedra:
            break
        if any(p.contains(s) for p in corridor):
            continue
        if not grid.contains_point(s):
            continue
        idx = grid.world_to_index(s)
        if not grid.is_free(idx):
            # diagonal path segments may graze an occupied voxel corner
            continue
        corridor.append(gen_polyhedron(grid, idx))
    return SafeCorridor(corridor)
