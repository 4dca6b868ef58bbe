"""Discrete agent states and exact triple-integrator propagation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AgentState:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.acceleration = np.asarray(self.acceleration, dtype=float)

    @staticmethod
    def rest(position) -> "AgentState":
        return AgentState(np.asarray(position, dtype=float), np.zeros(3), np.zeros(3))


@dataclass
class Limits:
    """Per-axis velocity / acceleration / jerk bounds."""

    v_max: float
    a_max: float
    j_max: float

    def __post_init__(self):
        if min(self.v_max, self.a_max, self.j_max) <= 0:
            raise ValueError("limits must be positive")


def propagate(state: AgentState, jerk, dt: float) -> AgentState:
    """One exact step of the triple integrator under constant jerk."""
    j = np.asarray(jerk, dtype=float)
    p, v, a = state.position, state.velocity, state.acceleration
    return AgentState(
        p + v * dt + a * dt * dt / 2.0 + j * dt ** 3 / 6.0,
        v + a * dt + j * dt * dt / 2.0,
        a + j * dt,
    )


@dataclass
class DiscreteTrajectory:
    """N+1 states at fixed step dt, stamped with iteration and gen times.

    The jerk over segment i is constant; states must satisfy
    states[i+1] == propagate(states[i], jerks[i], step). gen_start/gen_end
    are synchronized-clock timestamps (seconds) of when the trajectory's
    computation started and finished; they double as the latency probe when
    the trajectory is broadcast.
    """

    states: list[AgentState]
    step: float
    iteration: int
    gen_start: float = 0.0
    gen_end: float = 0.0
    jerks: np.ndarray | None = None

    def __post_init__(self):
        if self.gen_end < self.gen_start:
            raise ValueError("gen_end before gen_start")
        if self.jerks is None:
            self.jerks = np.zeros((max(len(self.states) - 1, 0), 3))
        else:
            self.jerks = np.asarray(self.jerks, dtype=float).reshape(-1, 3)

    @property
    def horizon(self) -> int:
        return len(self.states) - 1

    def positions(self) -> np.ndarray:
        return np.asarray([s.position for s in self.states])

    def state_at_iteration(self, k: int) -> AgentState:
        """State at absolute iteration k; the terminal rest state beyond."""
        i = k - self.iteration
        if i < 0:
            raise ValueError(f"iteration {k} precedes trajectory start")
        if i >= len(self.states):
            last = self.states[-1]
            return AgentState(last.position.copy(), np.zeros(3), np.zeros(3))
        return self.states[i]

    def view_from(self, k: int, gen_start: float | None = None,
                  gen_end: float | None = None) -> "DiscreteTrajectory":
        """Rebased copy starting at absolute iteration k, rest-extended.

        The result has the same horizon; states past the original end repeat
        the terminal rest state (the terminal constraint makes that the true
        prediction of the agent's future).
        """
        n = len(self.states)
        states = [self.state_at_iteration(k + i) for i in range(n)]
        shift = k - self.iteration
        jerks = np.zeros((n - 1, 3))
        for i in range(n - 1):
            src = shift + i
            if 0 <= src < len(self.jerks):
                jerks[i] = self.jerks[src]
        return DiscreteTrajectory(
            states, self.step, k,
            self.gen_start if gen_start is None else gen_start,
            self.gen_end if gen_end is None else gen_end,
            jerks)

    @staticmethod
    def at_rest(position, horizon: int, step: float, iteration: int = 0,
                gen_start: float = 0.0, gen_end: float = 0.0) -> "DiscreteTrajectory":
        states = [AgentState.rest(position) for _ in range(horizon + 1)]
        return DiscreteTrajectory(states, step, iteration, gen_start, gen_end)


def dynamics_residual(traj: DiscreteTrajectory) -> float:
    """Max deviation of the state chain from exact propagation of its jerks."""
    worst = 0.0
    for i in range(traj.horizon):
        pred = propagate(traj.states[i], traj.jerks[i], traj.step)
        nxt = traj.states[i + 1]
        worst = max(
            worst,
            float(np.max(np.abs(pred.position - nxt.position))),
            float(np.max(np.abs(pred.velocity - nxt.velocity))),
            float(np.max(np.abs(pred.acceleration - nxt.acceleration))),
        )
    return worst
