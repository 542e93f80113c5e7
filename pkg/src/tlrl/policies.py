"""Gaussian and softmax policies whose parameters live in a PARAFAC tensor.

A policy owns a :class:`~tlrl.tensor_core.ParafacModel` whose leading modes
are the discretized state dimensions. The Gaussian policy stores the action
means (plus one mode of size ``P`` for ``P``-dimensional actions); the softmax
policy stores logits with a trailing action mode of size ``C`` (plus a mode of
size ``P`` before it for ``P`` independent discrete action dimensions).

Scores are gradients of ``log pi(a|s)`` with respect to every factor entry,
flattened mode-major, row-major within a factor, column fastest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .tensor_core import ParafacModel, _check_index

LOG_2PI = math.log(2.0 * math.pi)


def init_factors(dims, rank, rng, low=0.5, high=1.5):
    """Uniform ``[low, high]`` factors scaled by ``rank ** (-1/D)``.

    Entries stay away from zero: an all-zero start makes every score vanish.
    """
    scale = rank ** (-1.0 / len(dims))
    return ParafacModel(tuple(rng.uniform(low, high, size=(n, rank)) * scale for n in dims))


# ----------------------------------------------------------------------------
# batched multilinear maps


def _fiber(lead, out, idx):
    prod = _kernels.row_products(lead, idx)
    if out is None:
        return prod.sum(axis=1, keepdims=True)
    return prod @ out.T


def _vjp(lead, out, idx, upstream):
    """Return per-factor gradients of ``sum_n upstream[n] . fiber(idx[n])``."""
    grads = [np.zeros_like(f) for f in lead]
    if out is None:
        h = np.repeat(upstream[:, :1], lead[0].shape[1], axis=1)
        _kernels.accumulate(list(lead), idx, h, grads)
        return grads
    h = upstream @ out
    _kernels.accumulate(list(lead), idx, h, grads)
    grads.append(upstream.T @ _kernels.row_products(lead, idx))
    return grads


def _jvp(lead, out, idx, tangents):
    tl = list(tangents[: len(lead)])
    jl = _kernels.jvp(list(lead), tl, idx)
    if out is None:
        return jl.sum(axis=1, keepdims=True)
    prod = _kernels.row_products(lead, idx)
    return jl @ out.T + prod @ tangents[len(lead)].T


def _split(model, vec):
    out, pos = [], 0
    for f in model.factors:
        out.append(np.asarray(vec[pos:pos + f.size]).reshape(f.shape))
        pos += f.size
    return out


# ----------------------------------------------------------------------------
# score vectors


@dataclass(frozen=True)
class ScoreVector:
    """Sparse score ``d log pi / d F_d[i, k]`` over all factor entries."""

    layout: tuple  # factor shapes (N_d, K)
    modes: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    @property
    def size(self):
        return sum(n * k for n, k in self.layout)

    @property
    def nnz(self):
        return int(np.count_nonzero(self.values))

    def densify(self):
        offsets = np.cumsum([0] + [n * k for n, k in self.layout])
        K = np.array([k for _, k in self.layout])
        flat = np.zeros(self.size)
        pos = offsets[self.modes] + self.rows * K[self.modes] + self.cols
        np.add.at(flat, pos, self.values)
        return flat

    @classmethod
    def from_rows(cls, layout, entries):
        """Build from ``(mode, row, values_over_k)`` triples."""
        modes, rows, cols, vals = [], [], [], []
        for d, i, v in entries:
            v = np.asarray(v, dtype=np.float64)
            modes.extend([d] * v.size)
            rows.extend([i] * v.size)
            cols.extend(range(v.size))
            vals.extend(v)
        return cls(tuple(layout), np.array(modes, dtype=np.int64), np.array(rows, dtype=np.int64),
                   np.array(cols, dtype=np.int64), np.array(vals, dtype=np.float64))


def _loo_products(rows):
    """``out[d] = prod_{j != d} rows[j]`` for a list of length-K vectors."""
    D = len(rows)
    out = []
    for d in range(D):
        p = np.ones_like(rows[0])
        for j in range(D):
            if j != d:
                p = p * rows[j]
        out.append(p)
    return out


# ----------------------------------------------------------------------------
# policies


class _TensorPolicy:
    n_state_modes: int
    model: ParafacModel

    @property
    def state_dims(self):
        return self.model.shape[: self.n_state_modes]

    @property
    def num_params(self):
        return self.model.size

    def flat(self):
        return self.model.flat()

    def with_params(self, vec):
        return self._replace(self.model.from_flat(vec))

    def _idx(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return idx.reshape(-1, self.n_state_modes)


@dataclass(frozen=True)
class GaussianPolicy(_TensorPolicy):
    """Fixed-variance Gaussian policy with PARAFAC means.

    ``means`` has ``D`` state modes, plus a trailing mode of size ``P`` when
    ``action_dim > 1``; the covariance is ``sigma**2 * I``.
    """

    means: ParafacModel
    sigma: float
    action_dim: int = 1

    family = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.action_dim < 1:
            raise ValueError("action_dim must be >= 1")
        if self.action_dim > 1 and self.means.shape[-1] != self.action_dim:
            raise ValueError("last mode of the means tensor must have size action_dim")

    @property
    def model(self):
        return self.means

    @property
    def n_state_modes(self):
        return self.means.ndim - (1 if self.action_dim > 1 else 0)

    @classmethod
    def create(cls, state_dims, rank, sigma, rng, action_dim=1):
        dims = list(state_dims) + ([action_dim] if action_dim > 1 else [])
        return cls(init_factors(dims, rank, rng), sigma, action_dim)

    def _replace(self, model):
        return GaussianPolicy(model, self.sigma, self.action_dim)

    def with_sigma(self, sigma):
        return GaussianPolicy(self.means, sigma, self.action_dim)

    def _parts(self):
        f = self.means.factors
        if self.action_dim > 1:
            return f[:-1], f[-1]
        return f, None

    # batched interface -----------------------------------------------------

    def mean_batch(self, idx):
        lead, out = self._parts()
        return _fiber(lead, out, self._idx(idx))

    def sample_batch(self, idx, rng):
        mu = self.mean_batch(idx)
        a = mu + self.sigma * rng.standard_normal(mu.shape)
        return a, self._log_density(mu, a)

    def _log_density(self, mu, a):
        z = (a - mu) / self.sigma
        P = mu.shape[1]
        return -0.5 * np.sum(z * z, axis=1) - P * (math.log(self.sigma) + 0.5 * LOG_2PI)

    def log_prob_batch(self, idx, actions):
        mu = self.mean_batch(idx)
        return self._log_density(mu, np.asarray(actions, dtype=np.float64).reshape(mu.shape))

    def _upstream(self, idx, actions):
        mu = self.mean_batch(idx)
        return (np.asarray(actions, dtype=np.float64).reshape(mu.shape) - mu) / self.sigma**2

    def grad_log_prob(self, idx, actions, weights):
        """Flat ``sum_n weights[n] * score(s_n, a_n)``."""
        idx = self._idx(idx)
        g = self._upstream(idx, actions) * np.asarray(weights, dtype=np.float64)[:, None]
        lead, out = self._parts()
        return np.concatenate([x.ravel() for x in _vjp(lead, out, idx, g)])

    def fisher_product(self, idx, actions, vec):
        """Flat ``sum_n score_n (score_n . vec)`` without forming the matrix."""
        idx = self._idx(idx)
        g = self._upstream(idx, actions)
        lead, out = self._parts()
        jv = _jvp(lead, out, idx, _split(self.means, vec))
        coef = np.sum(g * jv, axis=1, keepdims=True)
        return np.concatenate([x.ravel() for x in _vjp(lead, out, idx, g * coef)])

    def kl_batch(self, other, idx):
        """Per-state ``KL(self || other)`` for equal ``sigma``."""
        _check_family(self, other)
        d = self.mean_batch(idx) - other.mean_batch(idx)
        return np.sum(d * d, axis=1) / (2.0 * self.sigma**2)


@dataclass(frozen=True)
class SoftmaxPolicy(_TensorPolicy):
    """Softmax policy over ``C`` actions with a PARAFAC logits tensor.

    ``logits`` has ``D`` state modes and a trailing action mode of size ``C``.
    With ``action_dim = P > 1`` there is an extra mode of size ``P`` before the
    action mode and the ``P`` action components are independent.
    """

    logits: ParafacModel
    beta: float = 1.0
    action_dim: int = 1

    family = "softmax"

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("temperature must be non-negative")
        if self.action_dim < 1:
            raise ValueError("action_dim must be >= 1")
        if self.action_dim > 1 and self.logits.shape[-2] != self.action_dim:
            raise ValueError("second-to-last mode of the logits tensor must have size action_dim")

    @property
    def model(self):
        return self.logits

    @property
    def num_actions(self):
        return self.logits.shape[-1]

    @property
    def n_state_modes(self):
        return self.logits.ndim - (2 if self.action_dim > 1 else 1)

    @classmethod
    def create(cls, state_dims, num_actions, rank, beta, rng, action_dim=1):
        dims = list(state_dims) + ([action_dim] if action_dim > 1 else []) + [num_actions]
        return cls(init_factors(dims, rank, rng), beta, action_dim)

    def _replace(self, model):
        return SoftmaxPolicy(model, self.beta, self.action_dim)

    def with_beta(self, beta):
        return SoftmaxPolicy(self.logits, beta, self.action_dim)

    def _expand(self, idx):
        # one row per (state, action component)
        idx = self._idx(idx)
        P = self.action_dim
        if P == 1:
            return idx
        comp = np.tile(np.arange(P), idx.shape[0])
        return np.column_stack([np.repeat(idx, P, axis=0), comp])

    def _parts(self):
        f = self.logits.factors
        return f[:-1], f[-1]

    # batched interface -----------------------------------------------------

    def logits_batch(self, idx):
        lead, out = self._parts()
        return _fiber(lead, out, self._expand(idx))

    def probs_batch(self, idx):
        """Action probabilities, shape ``(n * P, C)``."""
        return _softmax(self.beta * self.logits_batch(idx))

    def sample_batch(self, idx, rng):
        # log-probabilities go through the same path as log_prob_batch so
        # that ratios against the sampling policy are exactly one
        lp = _log_softmax(self.beta * self.logits_batch(idx))
        p = np.exp(lp)
        u = rng.random(p.shape[0])
        a = np.minimum((np.cumsum(p, axis=1) < u[:, None] * p.sum(axis=1, keepdims=True)).sum(axis=1),
                       p.shape[1] - 1)
        logp = lp[np.arange(p.shape[0]), a]
        P = self.action_dim
        if P == 1:
            return a, logp
        return a.reshape(-1, P), logp.reshape(-1, P).sum(axis=1)

    def log_prob_batch(self, idx, actions):
        z = self.beta * self.logits_batch(idx)
        a = np.asarray(actions, dtype=np.int64).ravel()
        logp = _log_softmax(z)[np.arange(z.shape[0]), a]
        return logp.reshape(-1, self.action_dim).sum(axis=1)

    def _upstream(self, idx, actions):
        p = self.probs_batch(idx)
        a = np.asarray(actions, dtype=np.int64).ravel()
        g = -p
        g[np.arange(p.shape[0]), a] += 1.0
        return self.beta * g

    def grad_log_prob(self, idx, actions, weights):
        idx2 = self._expand(idx)
        w = np.repeat(np.asarray(weights, dtype=np.float64), self.action_dim)
        g = self._upstream(idx, actions) * w[:, None]
        lead, out = self._parts()
        return np.concatenate([x.ravel() for x in _vjp(lead, out, idx2, g)])

    def fisher_product(self, idx, actions, vec):
        idx2 = self._expand(idx)
        g = self._upstream(idx, actions)
        lead, out = self._parts()
        jv = _jvp(lead, out, idx2, _split(self.logits, vec))
        coef = np.sum(g * jv, axis=1)
        P = self.action_dim
        if P > 1:
            # the score of a joint action sums its components
            coef = np.repeat(coef.reshape(-1, P).sum(axis=1), P)
        return np.concatenate([x.ravel() for x in _vjp(lead, out, idx2, g * coef[:, None])])

    def kl_batch(self, other, idx):
        _check_family(self, other)
        lp = _log_softmax(self.beta * self.logits_batch(idx))
        lq = _log_softmax(other.beta * other.logits_batch(idx))
        kl = np.sum(np.exp(lp) * (lp - lq), axis=1)
        return np.maximum(kl, 0.0).reshape(-1, self.action_dim).sum(axis=1)


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z):
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def _check_family(p, q):
    if type(p) is not type(q):
        raise ValueError(f"policy family mismatch: {p.family} vs {q.family}")
    if p.model.shape != q.model.shape or p.action_dim != q.action_dim:
        raise ValueError("policies have different shapes")
    if isinstance(p, GaussianPolicy) and p.sigma != q.sigma:
        raise ValueError("closed-form Gaussian KL needs equal sigma")


# ----------------------------------------------------------------------------
# single-state functions


def gaussian_mean(policy, state_idx):
    state_idx = _check_index(policy.state_dims, state_idx)
    mu = policy.mean_batch([state_idx])[0]
    return float(mu[0]) if policy.action_dim == 1 else mu


def gaussian_sample(policy, state_idx, rng):
    mu = gaussian_mean(policy, state_idx)
    if policy.action_dim == 1:
        return float(mu + policy.sigma * rng.standard_normal())
    return mu + policy.sigma * rng.standard_normal(policy.action_dim)


def gaussian_log_prob(policy, state_idx, action):
    mu = np.atleast_1d(gaussian_mean(policy, state_idx))
    a = np.atleast_1d(np.asarray(action, dtype=np.float64))
    return float(policy._log_density(mu[None, :], a[None, :])[0])


def gaussian_score(policy, state_idx, action):
    """Gaussian score; nonzero only on the rows selected by ``state_idx``."""
    state_idx = _check_index(policy.state_dims, state_idx)
    lead, out = policy._parts()
    rows = [f[i] for f, i in zip(lead, state_idx)]
    mu = np.atleast_1d(gaussian_mean(policy, state_idx))
    resid = (np.atleast_1d(np.asarray(action, dtype=np.float64)) - mu) / policy.sigma**2
    layout = [f.shape for f in policy.means.factors]
    if out is None:
        entries = [(d, i, resid[0] * p) for d, (i, p) in enumerate(zip(state_idx, _loo_products(rows)))]
        return ScoreVector.from_rows(layout, entries)
    D = len(lead)
    prod = np.prod(rows, axis=0)
    h = resid @ out
    entries = [(d, i, h * p) for d, (i, p) in enumerate(zip(state_idx, _loo_products(rows)))]
    entries += [(D, p, resid[p] * prod) for p in range(policy.action_dim)]
    return ScoreVector.from_rows(layout, entries)


def softmax_probs(policy, state_idx):
    """Length-``C`` action distribution, or ``(P, C)`` for ``P``-dim actions."""
    state_idx = _check_index(policy.state_dims, state_idx)
    probs = policy.probs_batch([state_idx])
    return probs[0] if policy.action_dim == 1 else probs


def softmax_sample(policy, state_idx, rng):
    state_idx = _check_index(policy.state_dims, state_idx)
    a, _ = policy.sample_batch([state_idx], rng)
    return int(a[0]) if policy.action_dim == 1 else a[0]


def softmax_score(policy, state_idx, action):
    """Softmax score, including the temperature factor ``beta``.

    For every action ``b`` the logit ``z_b`` depends on the state rows and on
    row ``b`` of the action factor, so the state-mode rows collect
    ``sum_b c_b A[b] prod_{j != d} rows_j`` and action row ``b`` gets
    ``c_b prod_j rows_j`` with ``c_b = beta * (1[a = b] - pi(b|s))``.
    """
    state_idx = _check_index(policy.state_dims, state_idx)
    P = policy.action_dim
    actions = np.atleast_1d(np.asarray(action, dtype=np.int64))
    if actions.size != P:
        raise ValueError(f"expected {P} action components")
    C = policy.num_actions
    if np.any((actions < 0) | (actions >= C)):
        raise ValueError(f"action {action} outside 0..{C - 1}")
    factors = policy.logits.factors
    layout = [f.shape for f in factors]
    D = policy.n_state_modes
    A = factors[-1]
    probs = policy.probs_batch([state_idx])
    entries = []
    for p in range(P):
        lead_rows = [factors[d][i] for d, i in enumerate(state_idx)]
        if P > 1:
            lead_rows.append(factors[D][p])
        coef = -policy.beta * probs[p]
        coef[actions[p]] += policy.beta
        h = coef @ A
        for d, loo in enumerate(_loo_products(lead_rows)):
            row = state_idx[d] if d < D else p
            entries.append((d, row, h * loo))
        prod = np.prod(lead_rows, axis=0)
        for b in range(C):
            entries.append((len(factors) - 1, b, coef[b] * prod))
    return ScoreVector.from_rows(layout, entries)


def kl_divergence(old_policy, new_policy, state_idx):
    """``KL(old(.|s) || new(.|s))``, closed form for Gaussians, discrete for softmax."""
    state_idx = _check_index(old_policy.state_dims, state_idx)
    return float(old_policy.kl_batch(new_policy, [state_idx])[0])
