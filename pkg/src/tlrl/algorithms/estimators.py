"""Stochastic gradient estimators, Fisher products, clipping and projection.

All estimators return flat parameter vectors in the policy's canonical
order. Gradients are scaled by ``1/U`` and the Fisher product by
``1/(U T)``, with ``T`` the batch horizon.
"""

from __future__ import annotations

import numpy as np


def _flat(params):
    if isinstance(params, np.ndarray) or not hasattr(params, "with_params"):
        return np.asarray(params, dtype=np.float64)
    return params.flat()


def pg_gradient(policy, batch):
    """``1/U sum_u sum_t G_t^u score(A_t^u | S_t^u)``."""
    idx, acts, _ = batch.valid()
    return policy.grad_log_prob(idx, acts, batch.valid_returns()) / batch.U


def ac_gradient(policy, batch, adv):
    """Advantage-weighted score sum with ``1/U`` scaling."""
    idx, acts, _ = batch.valid()
    return policy.grad_log_prob(idx, acts, adv) / batch.U


def ratios(policy, batch):
    """``pi(a|s) / pi_behaviour(a|s)`` over the realized steps."""
    idx, acts, logp_old = batch.valid()
    return np.exp(policy.log_prob_batch(idx, acts) - logp_old)


def trpo_gradient(policy_old, batch, adv):
    """Ratio-weighted gradient evaluated at the sampling policy (all ratios 1)."""
    idx, acts, _ = batch.valid()
    q = ratios(policy_old, batch)
    return policy_old.grad_log_prob(idx, acts, q * adv) / batch.U


def surrogate(policy, batch, adv):
    """``1/U sum q A``: the importance-weighted objective around the sampler."""
    return float(np.sum(ratios(policy, batch) * adv) / batch.U)


def fim_vector_product(policy, batch, v, damping=0.0):
    """``(1/(U T)) sum score (score . v) + damping v`` without forming the matrix."""
    idx, acts, _ = batch.valid()
    v = np.asarray(v, dtype=np.float64)
    return policy.fisher_product(idx, acts, v) / (batch.U * batch.T) + damping * v


def fim_dense(policy, batch):
    """Materialized sampled Fisher matrix; for tests on small models."""
    idx, acts, _ = batch.valid()
    n = policy.num_params
    H = np.zeros((n, n))
    for i, a in zip(idx, acts):
        s = policy.grad_log_prob(i[None, :], np.asarray(a)[None, ...], np.ones(1))
        H += np.outer(s, s)
    return H / (batch.U * batch.T)


def ppo_clip(q, epsilon):
    """Clamp the probability ratio to ``[1 - eps, 1 + eps]``."""
    return np.where(q <= 1.0 - epsilon, 1.0 - epsilon, np.where(q >= 1.0 + epsilon, 1.0 + epsilon, q))


def ppo_mask(q, adv, epsilon):
    """1 where the unclipped branch of the clipped objective is active."""
    blocked = ((q <= 1.0 - epsilon) & (adv <= 0)) | ((q >= 1.0 + epsilon) & (adv >= 0))
    return (~blocked).astype(np.float64)


def ppo_objective(policy, batch, adv, epsilon):
    q = ratios(policy, batch)
    return float(np.sum(np.minimum(q * adv, ppo_clip(q, epsilon) * adv)) / batch.U)


def ppo_gradient(policy, policy_old, batch, adv, epsilon):
    """Gradient of the clipped objective: masked ``q * A * score``.

    The ratio uses the behaviour log-probabilities stored in ``batch``, which
    were recorded under ``policy_old``.
    """
    if policy_old is not None and type(policy_old) is not type(policy):
        raise ValueError("policy families differ")
    idx, acts, _ = batch.valid()
    q = ratios(policy, batch)
    w = ppo_mask(q, adv, epsilon) * q * adv
    return policy.grad_log_prob(idx, acts, w) / batch.U


def project_box(params, bound):
    """Euclidean projection onto ``max |theta| <= bound`` (``None``/inf: identity)."""
    params = np.asarray(params, dtype=np.float64)
    if bound is None or np.isinf(bound):
        return params.copy()
    if not bound > 0:
        raise ValueError("projection bound must be positive")
    return np.clip(params, -bound, bound)


def gradient_mapping_norm(params, grad, lam, bound):
    """``|| (theta - P(theta + lam grad)) / lam ||``, the projected-step residual."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    theta = _flat(params)
    return float(np.linalg.norm((theta - project_box(theta + lam * np.asarray(grad), bound)) / lam))
