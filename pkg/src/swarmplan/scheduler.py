"""Adaptive-frequency planning gate under communication latency.

Each agent evaluates the gate at every nominal period boundary. It plans
only when (a) it holds an unused trajectory from every peer in range and
(b) its own last broadcast trajectory is known to have reached every peer
before the current boundary, judged from per-peer delay estimates. Otherwise
it skips the boundary and keeps executing its last committed trajectory,
whose terminal rest state makes waiting safe. Peer trajectories are consumed
oldest-first, exactly one per planning decision.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .trajectory import DiscreteTrajectory

# slack for "arrived exactly at the boundary" comparisons (seconds)
TIME_EPS = 1e-9


class ClockSkewError(Exception):
    """Message received before it was sent: clocks are not synchronized."""


@dataclass
class TrajectoryMessage:
    sender: int
    payload: DiscreteTrajectory

    def __post_init__(self):
        if self.payload.gen_end < self.payload.gen_start:
            raise ValueError("message payload has gen_end < gen_start")


def estimate_delay(msg: TrajectoryMessage, t_rec: float) -> float:
    """One-way delay of a message under synchronized clocks."""
    delay = t_rec - msg.payload.gen_end
    if delay < -TIME_EPS:
        raise ClockSkewError(
            f"message from {msg.sender} received {-delay:.3e} s before it was sent")
    return max(delay, 0.0)


@dataclass
class Decision:
    plan: bool
    reason: str = ""
    consumed: dict[int, TrajectoryMessage] = field(default_factory=dict)


@dataclass
class PlanningGate:
    """Per-agent peer buffers, delay estimates and the skip/plan rule."""

    agent: int
    peers: list[int]
    buffers: dict[int, list[TrajectoryMessage]] = field(default_factory=dict)
    last_delay: dict[int, float] = field(default_factory=dict)
    planned_once: bool = False

    def __post_init__(self):
        for p in self.peers:
            self.buffers.setdefault(p, [])

    def receive(self, msg: TrajectoryMessage, t_rec: float) -> None:
        if msg.sender not in self.buffers:
            self.buffers[msg.sender] = []
            self.peers.append(msg.sender)
        self.buffers[msg.sender].append(msg)
        self.last_delay[msg.sender] = estimate_delay(msg, t_rec)

    def decide(self, own_last: DiscreteTrajectory | None, t_cur: float,
               peers_in_range: list[int] | None = None) -> Decision:
        """Gate evaluation at a period boundary.

        peers_in_range narrows the peer set for this boundary (defaults to
        every peer ever configured or heard from). The first ever decision
        plans unconditionally with an empty peer set: all agents synchronize
        their first iteration and nothing has been broadcast yet.
        """
        if not self.planned_once:
            self.planned_once = True
            return Decision(True, reason="first")

        if peers_in_range is None:
            active = sorted(self.buffers)
        else:
            active = sorted(peers_in_range)
            for p in active:
                self.buffers.setdefault(p, [])

        for p in active:
            if not self.buffers[p]:
                return Decision(False, reason=f"no_unused_trajectory:{p}")
        if own_last is not None:
            for p in active:
                delay = self.last_delay.get(p, 0.0)
                if delay + own_last.gen_end > t_cur + TIME_EPS:
                    return Decision(False, reason=f"own_not_received_by:{p}")

        consumed = {p: self.buffers[p].pop(0) for p in active}
        return Decision(True, consumed=consumed)


def decision_log_line(t: float, k: int, agent: int, decision: Decision) -> str:
    """One line per agent per boundary: t,k,agent,plan|skip,reason,consumed.

    `consumed` lists peer:iteration pairs joined by ';' in peer order.
    """
    verb = "plan" if decision.plan else "skip"
    consumed = ";".join(
        f"{p}:{m.payload.iteration}" for p, m in sorted(decision.consumed.items()))
    return f"{t:.4f},{k},{agent},{verb},{decision.reason},{consumed}"
