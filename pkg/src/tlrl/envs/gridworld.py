"""Rectangular gridworld with a known transition kernel, and its exact solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Discretizer, Environment, StepResult

# up, down, left, right
MOVES = np.array([[-1, 0], [1, 0], [0, -1], [0, 1]])


class GridWorld(Environment):
    """Grid with a fixed start cell and an absorbing goal cell.

    Each move costs ``step_reward``; entering the goal adds ``goal_reward``
    and ends the episode. Bumping into a wall leaves the agent in place. With
    probability ``slip`` the chosen move is replaced by a uniformly random one.
    """

    discrete = True
    num_actions = 4

    def __init__(self, rows=5, cols=5, start=(0, 0), goal=None, step_reward=-1.0,
                 goal_reward=10.0, slip=0.0):
        self.rows, self.cols = int(rows), int(cols)
        self.start = tuple(start)
        self.goal = tuple(goal) if goal is not None else (self.rows - 1, self.cols - 1)
        self.step_reward = float(step_reward)
        self.goal_reward = float(goal_reward)
        self.slip = float(slip)
        if not 0.0 <= self.slip <= 1.0:
            raise ValueError("slip must be a probability")
        self.name = f"gridworld{self.rows}x{self.cols}"
        self.discretizer = Discretizer((-0.5, -0.5), (self.rows - 0.5, self.cols - 0.5),
                                       (self.rows, self.cols))
        self.reward_bound = max(abs(self.step_reward), abs(self.step_reward + self.goal_reward))

    @property
    def n_states(self):
        return self.rows * self.cols

    def state_id(self, cell):
        return int(cell[0]) * self.cols + int(cell[1])

    def reset(self, rng, n):
        return np.tile(np.array(self.start, dtype=np.float64), (n, 1))

    def _move(self, cells, actions):
        nxt = cells + MOVES[actions]
        nxt[:, 0] = np.clip(nxt[:, 0], 0, self.rows - 1)
        nxt[:, 1] = np.clip(nxt[:, 1], 0, self.cols - 1)
        return nxt

    def _step(self, states, actions, rng):
        cells = np.rint(states).astype(np.int64)
        actions = np.asarray(actions, dtype=np.int64).ravel()
        if self.slip > 0.0:
            slipped = rng.random(actions.shape[0]) < self.slip
            actions = np.where(slipped, rng.integers(0, 4, actions.shape[0]), actions)
        at_goal = (cells[:, 0] == self.goal[0]) & (cells[:, 1] == self.goal[1])
        nxt = self._move(cells, actions)
        nxt[at_goal] = cells[at_goal]
        reached = (nxt[:, 0] == self.goal[0]) & (nxt[:, 1] == self.goal[1])
        reward = np.where(at_goal, 0.0, self.step_reward + self.goal_reward * reached)
        return StepResult(nxt.astype(np.float64), reward, reached | at_goal)

    def kernel(self):
        """Return ``(P, R)`` with ``P[s, a, s']`` and expected reward ``R[s, a]``.

        The goal is absorbing with zero reward.
        """
        S, A = self.n_states, 4
        P = np.zeros((S, A, S))
        R = np.zeros((S, A))
        g = self.state_id(self.goal)
        for r in range(self.rows):
            for c in range(self.cols):
                s = self.state_id((r, c))
                if s == g:
                    P[s, :, s] = 1.0
                    continue
                for a in range(A):
                    for b in range(A):
                        prob = (1.0 - self.slip) * (a == b) + self.slip / A
                        if prob == 0.0:
                            continue
                        nr, nc = self._move(np.array([[r, c]]), np.array([b]))[0]
                        s2 = self.state_id((nr, nc))
                        P[s, a, s2] += prob
                        R[s, a] += prob * (self.step_reward + self.goal_reward * (s2 == g))
        return P, R


@dataclass
class OracleResult:
    values: np.ndarray  # (rows, cols)
    policy: np.ndarray  # (rows, cols) greedy action, lowest index on ties
    start_return: float
    iterations: int


def value_iteration_oracle(grid, gamma=1.0, tol=1e-10, horizon=None, max_iters=100_000):
    """Solve the gridworld by value iteration.

    ``start_return`` is the expected return of the greedy policy from the
    start cell: over ``horizon`` steps when given, otherwise its exact
    infinite-horizon value.
    """
    P, R = grid.kernel()
    g = grid.state_id(grid.goal)
    V = np.zeros(grid.n_states)
    for it in range(1, max_iters + 1):
        Q = R + gamma * P @ V
        Q[g] = 0.0
        V_new = Q.max(axis=1)
        if np.max(np.abs(V_new - V)) <= tol:
            V = V_new
            break
        V = V_new
    else:
        raise RuntimeError(f"value iteration did not converge in {max_iters} iterations")
    Q = R + gamma * P @ V
    Q[g] = 0.0
    policy = np.argmax(Q, axis=1)
    probs = np.eye(4)[policy]
    if horizon is None:
        ret = policy_value(grid, probs, gamma)[grid.state_id(grid.start)]
    else:
        ret = evaluate_policy(grid, probs, horizon, gamma)
    return OracleResult(V.reshape(grid.rows, grid.cols), policy.reshape(grid.rows, grid.cols),
                        float(ret), it)


def bellman_residual(grid, values, gamma=1.0):
    P, R = grid.kernel()
    V = np.asarray(values, dtype=np.float64).ravel()
    Q = R + gamma * P @ V
    Q[grid.state_id(grid.goal)] = 0.0
    return float(np.max(np.abs(Q.max(axis=1) - V)))


def policy_value(grid, action_probs, gamma=1.0):
    """Exact infinite-horizon value of a stationary policy (goal absorbing)."""
    P, R = grid.kernel()
    pi = np.asarray(action_probs, dtype=np.float64).reshape(grid.n_states, 4)
    Ppi = np.einsum("sa,sat->st", pi, P)
    rpi = np.sum(pi * R, axis=1)
    g = grid.state_id(grid.goal)
    keep = np.arange(grid.n_states) != g
    A = np.eye(keep.sum()) - gamma * Ppi[np.ix_(keep, keep)]
    V = np.zeros(grid.n_states)
    V[keep] = np.linalg.solve(A, rpi[keep])
    return V


def evaluate_policy(grid, action_probs, horizon, gamma=1.0):
    """Expected ``horizon``-step return from the start cell under ``action_probs``.

    ``action_probs`` has shape ``(rows * cols, 4)`` or ``(rows, cols, 4)``.
    """
    P, R = grid.kernel()
    pi = np.asarray(action_probs, dtype=np.float64).reshape(grid.n_states, 4)
    Ppi = np.einsum("sa,sat->st", pi, P)
    rpi = np.sum(pi * R, axis=1)
    V = np.zeros(grid.n_states)
    for _ in range(int(horizon)):
        V = rpi + gamma * Ppi @ V
    return float(V[grid.state_id(grid.start)])
