"""Separating hyperplanes between agents and the time-aware corridor.

For every future step of the planning horizon, each agent constrains its new
trajectory to its own side of a plane separating its previously committed
position from each peer's predicted position at the same absolute step. The
plane normals are tilted by a deterministic perturbation so that symmetric
head-on configurations cannot pin the optimizer on a plane boundary; the
perturbation is built only from terms that flip sign when the two agents are
swapped, which keeps the two agents' normals collinear and therefore keeps
their mutual clearance guarantee intact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .safe_corridor import Halfspace, SafeCorridor
from .trajectory import DiscreteTrajectory

_Z_AXIS = np.array([0.0, 0.0, 1.0])
_Y_AXIS = np.array([0.0, 1.0, 0.0])
_X_AXIS = np.array([1.0, 0.0, 0.0])


class NoOverlapError(Exception):
    """The two trajectories share no common future step."""


class CoincidentAgentsError(Exception):
    """Two agents at the same point: separation direction undefined."""


@dataclass
class SeparatingHyperplane:
    """One peer constraint at one future step; the owner satisfies `plane`."""

    plane: Halfspace
    step: int
    peer: int


def tilt_wave(iteration: int, amplitude: float, period: int) -> float:
    """Time-varying part of the plane tilt: triangular wave over iterations.

    Rises from 0 to `amplitude` over the first half of the period and back
    to 0 over the second half. All agents share synchronized iteration
    indices, so all agents evaluate the same value at the same iteration.
    """
    if period <= 0:
        return 0.0
    phase = iteration % period
    half = period / 2.0
    frac = phase / half if phase <= half else (period - phase) / half
    return amplitude * frac


def perturb_normal(raw_normal, tilt: float, wave: float) -> np.ndarray:
    """Tilted unit normal for a separating plane.

    The base direction is tilted by (tilt + wave) along a 'right' direction
    (sum of two cross products against the world z and y axes) plus tilt
    along the cross product of world z with the base direction. Every term
    is odd under negation of the input, so antipodal inputs produce exactly
    antipodal outputs. When the 'right' direction degenerates (base parallel
    to the z+y diagonal family) a fixed fallback axis against world x is
    used, which is nonzero there and keeps the odd symmetry.
    """
    n = np.asarray(raw_normal, dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0.0:
        raise ValueError("zero normal")
    n_hat = n / norm
    right = np.cross(n_hat, _Z_AXIS) + np.cross(n_hat, _Y_AXIS)
    r_norm = np.linalg.norm(right)
    if r_norm < 1e-12:
        right = np.cross(n_hat, _X_AXIS)
        r_norm = np.linalg.norm(right)
    pert = (tilt + wave) * right / r_norm + tilt * np.cross(_Z_AXIS, n_hat)
    final = n_hat + pert
    return final / np.linalg.norm(final)


def separating_hyperplane(p_own, p_peer, margin: float, tilt: float,
                          wave: float, step: int = 0, peer: int = -1) -> SeparatingHyperplane:
    """Plane between two predicted positions, owned side with a margin.

    The plane passes through the midpoint of the two positions along the
    (perturbed) separation normal, shifted so the owner keeps `margin` of
    clearance: owner satisfies normal . x <= normal . midpoint - margin.
    The peer, building the mirrored plane from the same pair, keeps the same
    margin on the other side, so jointly feasible positions stay at least
    2 * margin apart along the shared normal.
    """
    p_own = np.asarray(p_own, dtype=float)
    p_peer = np.asarray(p_peer, dtype=float)
    sep = p_peer - p_own
    if np.linalg.norm(sep) < 1e-12:
        raise CoincidentAgentsError(
            f"coincident agents at {p_own} (peer {peer}, step {step})")
    normal = perturb_normal(sep, tilt, wave)
    midpoint = (p_own + p_peer) / 2.0
    offset = float(normal @ midpoint) - margin
    return SeparatingHyperplane(Halfspace(normal, offset), step, peer)


def align(own_iter: int, own_traj: DiscreteTrajectory, peer_iter: int,
          peer_traj: DiscreteTrajectory) -> list[tuple[int, int]]:
    """Pair trajectory states that fall on the same absolute time step.

    Own index 0 is the current iteration; peer states from earlier steps are
    skipped and pairing stops when either trajectory runs out of states.
    Raises NoOverlapError when no common step exists.
    """
    offset = own_iter - peer_iter
    pairs = []
    n_own = len(own_traj.states)
    n_peer = len(peer_traj.states)
    for i in range(n_own):
        j = i + offset
        if j < 0:
            continue
        if j >= n_peer:
            break
        pairs.append((i, j))
    if not pairs:
        raise NoOverlapError(
            f"no common steps: own iter {own_iter}, peer iter {peer_iter}")
    return pairs


@dataclass
class TimeAwareCorridor:
    """Per-step constraint sets: shared static polyhedra plus step planes.

    hyperplanes[s] holds one plane per peer constraining both endpoints of
    trajectory segment s.
    """

    corridor: SafeCorridor
    hyperplanes: list[list[SeparatingHyperplane]]

    @property
    def steps(self) -> int:
        return len(self.hyperplanes)

    def slice_planes(self, step: int) -> list[SeparatingHyperplane]:
        return self.hyperplanes[step]


def build_tasc(corridor: SafeCorridor, own_traj: DiscreteTrajectory,
               peers: list[tuple[int, DiscreteTrajectory]], steps: int,
               agent_radius: float, tilt: float, wave: float,
               margin_extra: float = 0.0) -> TimeAwareCorridor:
    """Assemble the time-aware corridor for the next `steps` segments.

    own_traj must be rebased so state 0 is the current iteration (its
    iteration stamp is the current iteration index). For each peer, fresh
    planes are built at every aligned step pair with margin agent_radius +
    margin_extra (the extra absorbs the excursion between discrete states);
    steps beyond the last aligned pair reuse the last plane. Peers with no
    overlapping steps are skipped: their last trajectory ended at rest more
    than a horizon ago and carries no usable prediction.

    Every slice's plane offset is relaxed just enough to keep the already
    committed positions for that segment feasible, so the rest-extended
    previous trajectory always remains a valid fallback. Both agents of a
    pair relax against their own committed positions on opposite sides of
    the same (mirrored) plane, so the relaxation never lets the pair drift
    closer than its committed separation.
    """
    planes_per_step: list[list[SeparatingHyperplane]] = [[] for _ in range(steps)]
    own_pos = [s.position for s in own_traj.states]
    for peer_id, (peer_iter, peer_traj) in enumerate(peers):
        try:
            pairs = align(own_traj.iteration, own_traj, peer_iter, peer_traj)
        except NoOverlapError:
            continue
        if pairs[0][0] != 0:
            raise ValueError("peer trajectory starts after the current step")
        last_raw = None
        for s in range(steps):
            if s < len(pairs):
                i, j = pairs[s]
                plane = separating_hyperplane(
                    own_pos[i], peer_traj.states[j].position,
                    agent_radius + margin_extra, tilt, wave, step=s,
                    peer=peer_id)
                last_raw = plane.plane
            normal = last_raw.normal
            anchor = max(float(normal @ own_pos[s]),
                         float(normal @ own_pos[min(s + 1, len(own_pos) - 1)]))
            offset = max(last_raw.offset, anchor + 1e-12)
            planes_per_step[s].append(SeparatingHyperplane(
                Halfspace(normal, offset), s, peer_id))
    return TimeAwareCorridor(corridor, planes_per_step)
