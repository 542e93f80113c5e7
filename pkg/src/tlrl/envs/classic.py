"""MountainCar and Pendulum with the standard Gym dynamics.

Both come in a continuous-action and a discrete-action variant. States are
the observation vectors themselves: ``(position, velocity)`` for
MountainCar and ``(cos theta, sin theta, theta_dot)`` for Pendulum.
"""

from __future__ import annotations

import numpy as np

from .base import Discretizer, Environment, StepResult


class MountainCar(Environment):
    min_position = -1.2
    max_position = 0.6
    max_speed = 0.07
    gravity = 0.0025

    def __init__(self, continuous=False, bins=(20, 20)):
        self.continuous = bool(continuous)
        self.discrete = not self.continuous
        if self.continuous:
            self.name = "mountaincar_continuous"
            self.action_dim = 1
            self.action_low = np.array([-1.0])
            self.action_high = np.array([1.0])
            self.goal_position = 0.45
            self.power = 0.0015
            self.reward_bound = 100.0 + 0.1
        else:
            self.name = "mountaincar"
            self.num_actions = 3
            self.goal_position = 0.5
            self.force = 0.001
            self.reward_bound = 1.0
        self.discretizer = Discretizer((self.min_position, -self.max_speed),
                                       (self.max_position, self.max_speed), bins)

    def reset(self, rng, n):
        pos = rng.uniform(-0.6, -0.4, size=n)
        return np.column_stack([pos, np.zeros(n)])

    def _step(self, states, actions, rng):
        pos, vel = states[:, 0], states[:, 1]
        if self.continuous:
            force = np.clip(actions[:, 0], -1.0, 1.0)
            vel = vel + force * self.power - self.gravity * np.cos(3 * pos)
        else:
            vel = vel + (actions - 1) * self.force - self.gravity * np.cos(3 * pos)
        vel = np.clip(vel, -self.max_speed, self.max_speed)
        pos = np.clip(pos + vel, self.min_position, self.max_position)
        vel = np.where((pos == self.min_position) & (vel < 0), 0.0, vel)
        done = (pos >= self.goal_position) & (vel >= 0)
        if self.continuous:
            reward = 100.0 * done - 0.1 * force**2
        else:
            reward = -np.ones_like(pos)
        return StepResult(np.column_stack([pos, vel]), reward, done)


def _angle_normalize(x):
    return ((x + np.pi) % (2 * np.pi)) - np.pi


class Pendulum(Environment):
    max_speed = 8.0
    max_torque = 2.0
    dt = 0.05
    g = 10.0
    m = 1.0
    length = 1.0

    def __init__(self, continuous=True, bins=(10, 10, 10), torque_levels=(-2.0, 0.0, 2.0)):
        self.continuous = bool(continuous)
        self.discrete = not self.continuous
        if self.continuous:
            self.name = "pendulum_continuous"
            self.action_dim = 1
            self.action_low = np.array([-self.max_torque])
            self.action_high = np.array([self.max_torque])
        else:
            self.name = "pendulum"
            self.torques = np.asarray(torque_levels, dtype=np.float64)
            self.num_actions = len(self.torques)
        self.reward_bound = np.pi**2 + 0.1 * self.max_speed**2 + 0.001 * self.max_torque**2
        self.discretizer = Discretizer((-1.0, -1.0, -self.max_speed), (1.0, 1.0, self.max_speed), bins)

    def reset(self, rng, n):
        th = rng.uniform(-np.pi, np.pi, size=n)
        thdot = rng.uniform(-1.0, 1.0, size=n)
        return np.column_stack([np.cos(th), np.sin(th), thdot])

    def _step(self, states, actions, rng):
        th = np.arctan2(states[:, 1], states[:, 0])
        thdot = states[:, 2]
        if self.continuous:
            u = np.clip(actions[:, 0], -self.max_torque, self.max_torque)
        else:
            u = self.torques[actions]
        cost = _angle_normalize(th) ** 2 + 0.1 * thdot**2 + 0.001 * u**2
        newthdot = thdot + (3 * self.g / (2 * self.length) * np.sin(th)
                            + 3.0 / (self.m * self.length**2) * u) * self.dt
        newthdot = np.clip(newthdot, -self.max_speed, self.max_speed)
        newth = th + newthdot * self.dt
        nxt = np.column_stack([np.cos(newth), np.sin(newth), newthdot])
        return StepResult(nxt, -cost, np.zeros(len(th), dtype=bool))
