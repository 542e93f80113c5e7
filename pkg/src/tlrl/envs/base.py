"""Shared environment plumbing: discretization, step results, single-state helpers.

Environments are stateless transition functions over explicit state arrays.
They are vectorized over a leading batch axis: ``reset(rng, n)`` returns an
``(n, state_dim)`` array and ``step(states, actions, rng)`` advances all rows
at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Discretizer:
    """Uniform per-dimension binning of a box ``[low, high]``."""

    low: tuple
    high: tuple
    bins: tuple

    def __post_init__(self):
        low = tuple(float(x) for x in self.low)
        high = tuple(float(x) for x in self.high)
        bins = tuple(int(b) for b in self.bins)
        if not len(low) == len(high) == len(bins):
            raise ValueError("low, high and bins must have equal length")
        if any(b < 1 for b in bins):
            raise ValueError("bins must be >= 1")
        if any(not lo < hi for lo, hi in zip(low, high)):
            raise ValueError("each dimension needs low < high")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        object.__setattr__(self, "bins", bins)

    @property
    def dims(self):
        return self.bins

    def clamp(self, x):
        return np.clip(x, self.low, self.high)

    def __call__(self, x):
        """Map states of shape ``(..., D)`` to integer bins of the same shape."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != len(self.bins):
            raise ValueError(f"state has {x.shape[-1]} components, discretizer expects {len(self.bins)}")
        lo = np.array(self.low)
        hi = np.array(self.high)
        nb = np.array(self.bins)
        frac = (self.clamp(x) - lo) / (hi - lo)
        return np.minimum(np.floor(frac * nb).astype(np.int64), nb - 1)


def discretize(disc, state):
    """Single-state discretization returning a tuple multi-index."""
    return tuple(int(i) for i in disc(np.asarray(state, dtype=np.float64)))


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: np.ndarray
    done: np.ndarray


class RewardBoundError(RuntimeError):
    pass


class Environment:
    """Base class; subclasses set the attributes below and implement ``_step``."""

    name = "env"
    discrete = True
    num_actions = 0
    action_dim = 1
    action_low = None
    action_high = None
    reward_bound = np.inf

    discretizer: Discretizer

    @property
    def state_dims(self):
        return self.discretizer.bins

    def index(self, states):
        return self.discretizer(states)

    def reset(self, rng, n):
        raise NotImplementedError

    def _step(self, states, actions, rng):
        raise NotImplementedError

    def check_actions(self, actions):
        if self.discrete:
            a = np.asarray(actions)
            if not np.all(np.equal(np.mod(a, 1), 0)) or np.any((a < 0) | (a >= self.num_actions)):
                raise ValueError(f"invalid discrete action(s) for {self.name}: {actions}")
            return a.astype(np.int64)
        a = np.asarray(actions, dtype=np.float64).reshape(-1, self.action_dim)
        return np.clip(a, self.action_low, self.action_high)

    def step(self, states, actions, rng):
        actions = self.check_actions(actions)
        res = self._step(np.asarray(states, dtype=np.float64), actions, rng)
        if np.any(~np.isfinite(res.reward)) or np.any(np.abs(res.reward) > self.reward_bound * (1 + 1e-12)):
            raise RewardBoundError(f"{self.name}: reward outside the declared bound {self.reward_bound}")
        return res


def env_reset(env, rng):
    return env.reset(rng, 1)[0]


def env_step(env, state, action, rng):
    """Single-transition convenience wrapper around the batched ``step``."""
    a = np.asarray(action)
    if not env.discrete:
        a = a.reshape(1, env.action_dim)
    else:
        a = a.reshape(1)
    res = env.step(np.asarray(state, dtype=np.float64)[None, :], a, rng)
    return StepResult(res.next_state[0], float(res.reward[0]), bool(res.done[0]))
