"""Rank-``K'`` PARAFAC value-function approximator (the critic).

The critic minimizes ``L = 1/2 sum_u sum_t (G_t^u - V(S_t^u))^2`` by gradient
steps. :func:`descent_direction` returns the residual-weighted basis sum,
which is ``-grad L``; :func:`critic_step` adds ``alpha`` times it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .tensor_core import ParafacModel, _check_index

log = logging.getLogger(__name__)


class NonFiniteUpdate(FloatingPointError):
    """A parameter update produced NaN or infinite values."""


@dataclass(frozen=True)
class CriticModel:
    vf: ParafacModel

    family = "critic"

    @classmethod
    def create(cls, state_dims, rank, rng):
        scale = rank ** (-1.0 / len(state_dims))
        return cls(ParafacModel(tuple(rng.uniform(-0.5, 0.5, size=(n, rank)) * scale
                                      for n in state_dims)))

    @classmethod
    def zeros(cls, state_dims, rank):
        return cls(ParafacModel(tuple(np.zeros((n, rank)) for n in state_dims)))

    @property
    def state_dims(self):
        return self.vf.shape

    @property
    def model(self):
        return self.vf

    def values(self, idx):
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, self.vf.ndim)
        return _kernels.row_products(self.vf.factors, idx).sum(axis=1)

    def flat(self):
        return self.vf.flat()

    def with_params(self, vec):
        return CriticModel(self.vf.from_flat(vec))


def _batch_arrays(batch):
    m = batch.mask
    return batch.state_idx[m], batch.returns[m]


def value_at(critic, state_idx):
    state_idx = _check_index(critic.state_dims, state_idx)
    return float(critic.values([state_idx])[0])


def critic_loss(critic, batch):
    idx, G = _batch_arrays(batch)
    if G.size == 0:
        log.warning("critic_loss called on an empty batch")
        return 0.0
    r = G - critic.values(idx)
    return float(0.5 * np.dot(r, r))


def descent_direction(critic, batch):
    """Flat ``sum (G - V(s)) dV(s)/dw``, i.e. the negative loss gradient."""
    idx, G = _batch_arrays(batch)
    grads = [np.zeros_like(f) for f in critic.vf.factors]
    if G.size:
        resid = G - critic.values(idx)
        w = np.repeat(resid[:, None], critic.vf.rank, axis=1)
        _kernels.accumulate(critic.vf.factors, idx, w, grads)
    return np.concatenate([g.ravel() for g in grads])


def critic_gradient(critic, batch):
    """Gradient of the quadratic loss (the negative of :func:`descent_direction`)."""
    return -descent_direction(critic, batch)


def critic_step(critic, batch, alpha):
    if not alpha > 0:
        raise ValueError("critic step size must be positive")
    new = critic.flat() + alpha * descent_direction(critic, batch)
    if not np.all(np.isfinite(new)):
        raise NonFiniteUpdate(
            f"critic update is non-finite (alpha={alpha}, max|w|={np.max(np.abs(critic.flat()))})")
    return critic.with_params(new)
