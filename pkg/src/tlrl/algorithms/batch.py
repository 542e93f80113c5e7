"""Trajectory sampling, returns-to-go and advantages."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from ..policies import GaussianPolicy, SoftmaxPolicy


@dataclass
class TrajectoryBatch:
    """``U`` episodes padded to a horizon ``T``.

    Arrays have a leading ``(U, T)`` shape; ``mask[u, t]`` marks the steps that
    actually happened (episodes that terminate early stop accumulating).
    Actions are stored as sampled, before any clamping by the environment.
    """

    raw_states: np.ndarray  # (U, T, S)
    state_idx: np.ndarray  # (U, T, D)
    actions: np.ndarray  # (U, T) discrete or (U, T, P) continuous
    rewards: np.ndarray  # (U, T)
    log_prob: np.ndarray  # (U, T) behaviour log-probabilities
    mask: np.ndarray  # (U, T) bool
    returns: np.ndarray | None = None

    @property
    def U(self):
        return self.rewards.shape[0]

    @property
    def T(self):
        return self.rewards.shape[1]

    @property
    def lengths(self):
        return self.mask.sum(axis=1)

    @property
    def n_steps(self):
        return int(self.mask.sum())

    def episode_returns(self):
        return np.where(self.mask, self.rewards, 0.0).sum(axis=1)

    def valid(self):
        """Return ``(state_idx, actions, log_prob)`` over the realized steps."""
        m = self.mask
        return self.state_idx[m], self.actions[m], self.log_prob[m]

    def valid_returns(self):
        if self.returns is None:
            raise ValueError("returns have not been computed; call returns_to_go first")
        return self.returns[self.mask]

    def episodes(self):
        """Yield one list of ``(state_idx, raw_state, action, reward, log_prob)`` per episode."""
        for u in range(self.U):
            n = int(self.lengths[u])
            yield [(tuple(self.state_idx[u, t]), self.raw_states[u, t], self.actions[u, t],
                    float(self.rewards[u, t]), float(self.log_prob[u, t])) for t in range(n)]


def check_compatible(env, policy):
    if env.discrete:
        if not isinstance(policy, SoftmaxPolicy) or policy.num_actions != env.num_actions:
            raise ValueError(f"{env.name} needs a softmax policy over {env.num_actions} actions")
    elif not isinstance(policy, GaussianPolicy) or policy.action_dim != env.action_dim:
        raise ValueError(f"{env.name} needs a Gaussian policy with {env.action_dim} action dims")
    if tuple(policy.state_dims) != tuple(env.state_dims):
        raise ValueError(f"policy state modes {policy.state_dims} != env grid {env.state_dims}")


def sample_batch(env, policy, U, T, rng):
    """Roll out ``U`` episodes of at most ``T`` steps, all in lock-step."""
    check_compatible(env, policy)
    states = env.reset(rng, U)
    S = states.shape[1]
    D = len(env.state_dims)
    raw = np.zeros((U, T, S))
    idx_all = np.zeros((U, T, D), dtype=np.int64)
    if env.discrete:
        acts = np.zeros((U, T), dtype=np.int64)
    else:
        acts = np.zeros((U, T, env.action_dim))
    rewards = np.zeros((U, T))
    logp = np.zeros((U, T))
    mask = np.zeros((U, T), dtype=bool)
    alive = np.ones(U, dtype=bool)
    for t in range(T):
        live = np.flatnonzero(alive)
        s = states[live]
        idx = env.index(s)
        a, lp = policy.sample_batch(idx, rng)
        res = env.step(s, a, rng)
        raw[live, t] = s
        idx_all[live, t] = idx
        acts[live, t] = a
        rewards[live, t] = res.reward
        logp[live, t] = lp
        mask[live, t] = True
        states[live] = res.next_state
        alive[live[res.done]] = False
        if not alive.any():
            break
    return TrajectoryBatch(raw, idx_all, acts, rewards, logp, mask)


def returns_to_go(batch):
    """Fill ``G_t = sum_{t' >= t} R_t'`` over each episode's realized steps."""
    r = np.where(batch.mask, batch.rewards, 0.0)
    G = np.cumsum(r[:, ::-1], axis=1)[:, ::-1]
    return replace(batch, returns=np.where(batch.mask, G, 0.0))


def advantages(batch, critic, normalize=False):
    """Per-step ``G_t - V(S_t)`` over the realized steps, as a flat array."""
    G = batch.valid_returns()
    if critic is None:
        adv = G.copy()
    else:
        adv = G - critic.values(batch.state_idx[batch.mask])
    if normalize and adv.size > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv


def write_trajectories_csv(batch, path):
    """Dump ``episode, t, state components..., action components..., reward``."""
    S = batch.raw_states.shape[2]
    P = 1 if batch.actions.ndim == 2 else batch.actions.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "t"] + [f"s{i}" for i in range(S)] + [f"a{i}" for i in range(P)] + ["reward"])
        for u in range(batch.U):
            for t in range(int(batch.lengths[u])):
                a = np.atleast_1d(batch.actions[u, t])
                w.writerow([u, t] + [repr(float(x)) for x in batch.raw_states[u, t]]
                           + [repr(float(x)) for x in a] + [repr(float(batch.rewards[u, t]))])
