"""Independent oracles shared by the unit and acceptance tests."""

import numpy as np

from tlrl.policies import GaussianPolicy, SoftmaxPolicy, init_factors


def central_difference(f, x, h=1e-5):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_error(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def log_pi_direct(policy, state_idx, action):
    """log pi(a|s) from a fully materialized tensor, no shared code paths."""
    factors = policy.model.factors
    full = np.zeros([f.shape[0] for f in factors])
    for k in range(factors[0].shape[1]):
        term = factors[0][:, k]
        for f in factors[1:]:
            term = np.multiply.outer(term, f[:, k])
        full += term
    fiber = full[tuple(state_idx)]
    if isinstance(policy, GaussianPolicy):
        mu = np.atleast_1d(fiber)
        a = np.atleast_1d(action)
        s2 = policy.sigma**2
        return float(np.sum(-0.5 * np.log(2 * np.pi * s2) - (a - mu) ** 2 / (2 * s2)))
    z = policy.beta * np.atleast_2d(fiber)
    acts = np.atleast_1d(action)
    total = 0.0
    for p, a in enumerate(acts):
        zp = z[p] - z[p].max()
        total += zp[a] - np.log(np.exp(zp).sum())
    return float(total)


def random_instance(rng, family, D, K, C=3, P=1):
    dims = [int(n) for n in rng.integers(2, 5, size=D)]
    state = tuple(int(rng.integers(0, n)) for n in dims)
    if family == "gaussian":
        mdims = dims + ([P] if P > 1 else [])
        pol = GaussianPolicy(init_factors(mdims, K, rng, -1.0, 1.0), float(rng.uniform(0.5, 2.0)), P)
        mu = pol.mean_batch([state])[0]
        action = mu + pol.sigma * rng.standard_normal(P)
        action = float(action[0]) if P == 1 else action
    else:
        mdims = dims + ([P] if P > 1 else []) + [C]
        pol = SoftmaxPolicy(init_factors(mdims, K, rng, -1.0, 1.0), float(rng.uniform(0.5, 2.0)), P)
        action = int(rng.integers(0, C)) if P == 1 else rng.integers(0, C, size=P)
    return pol, state, action


def make_batch(episodes, T=None, D=None):
    """TrajectoryBatch from a list of episodes of ``(state_idx, action, reward)``.

    Returns are filled; raw states mirror the indices and behaviour
    log-probabilities are zero.
    """
    from tlrl.algorithms import TrajectoryBatch, returns_to_go

    U = len(episodes)
    T = T or max(len(e) for e in episodes)
    D = D or len(episodes[0][0][0])
    idx = np.zeros((U, T, D), dtype=np.int64)
    acts = np.zeros((U, T), dtype=np.int64)
    rew = np.zeros((U, T))
    mask = np.zeros((U, T), dtype=bool)
    for u, ep in enumerate(episodes):
        for t, (s, a, r) in enumerate(ep):
            idx[u, t], acts[u, t], rew[u, t], mask[u, t] = s, a, r, True
    batch = TrajectoryBatch(idx.astype(np.float64), idx, acts, rew, np.zeros((U, T)), mask)
    return returns_to_go(batch)


def _envs():
    from tlrl.envs import Discretizer, Environment, StepResult

    class Bandit(Environment):
        """One state, two arms; arm 1 pays 1 and arm 0 pays 0."""

        name = "bandit"
        num_actions = 2
        reward_bound = 1.0
        discretizer = Discretizer((0.0,), (1.0,), (1,))

        def reset(self, rng, n):
            return np.zeros((n, 1))

        def _step(self, states, actions, rng):
            n = len(states)
            return StepResult(states.copy(), (actions == 1).astype(float), np.ones(n, dtype=bool))

    class Chain(Environment):
        """Two states; actions 0 and 1 lead to state 0, action 2 to state 1.

        Reward is the index of the state left, so the baseline matters.
        """

        name = "chain"
        num_actions = 3
        reward_bound = 1.0
        discretizer = Discretizer((-0.5,), (1.5,), (2,))

        def reset(self, rng, n):
            return np.zeros((n, 1))

        def _step(self, states, actions, rng):
            nxt = (actions == 2).astype(float)[:, None]
            return StepResult(nxt, states[:, 0].copy(), np.zeros(len(states), dtype=bool))

    return Bandit, Chain


Bandit, Chain = _envs()
