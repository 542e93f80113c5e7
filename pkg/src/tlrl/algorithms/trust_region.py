"""Conjugate gradient and the KL-constrained natural-gradient step."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


def conjugate_gradient(Avp, b, iters=10, tol=1e-10):
    """Approximately solve ``A x = b`` for symmetric PSD ``A`` from ``x = 0``.

    Stops early once ``|r|^2 <= tol * |b|^2``.
    """
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    rr = r @ r
    stop = tol * rr
    for _ in range(iters):
        if rr <= stop:
            break
        Ap = Avp(p)
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


@dataclass
class StepInfo:
    accepted: bool
    step_fraction: float  # scale applied to the full step; 0 when rejected
    quad: float  # Delta^T H Delta of the applied step (H with damping)
    kl: float  # mean sampled-state KL of the applied step
    improvement: float


def trpo_step(policy_old, g, fim_vp, delta, cg_iters=10, surrogate=None, kl=None,
              shrink=0.5, max_backtracks=10):
    """Solve the quadratic trust-region subproblem and line-search the step.

    ``x ~ H^{-1} g`` by conjugate gradient and the full step is
    ``sqrt(delta / x^T H x) x`` so that it sits on the ``Delta^T H Delta = delta``
    ellipsoid. With ``surrogate`` and ``kl`` callables (taking the candidate
    policy or parameter vector) the step is shrunk by ``shrink`` until the
    surrogate improves and the KL is at most ``delta``; after
    ``max_backtracks`` failures the old parameters are kept.

    ``policy_old`` may be a policy (anything with ``flat``/``with_params``) or a
    flat parameter vector. Returns ``(new, StepInfo)``.
    """
    if not delta > 0:
        raise ValueError("trust radius must be positive")
    is_policy = hasattr(policy_old, "with_params")
    theta = policy_old.flat() if is_policy else np.asarray(policy_old, dtype=np.float64)
    wrap = (lambda v: policy_old.with_params(v)) if is_policy else (lambda v: v)
    rejected = StepInfo(False, 0.0, 0.0, 0.0, 0.0)

    g = np.asarray(g, dtype=np.float64)
    if not np.any(g):
        return wrap(theta.copy()), rejected
    x = conjugate_gradient(fim_vp, g, cg_iters)
    if not np.any(x):
        return wrap(theta.copy()), rejected
    Hx = fim_vp(x)
    xHx = float(x @ Hx)
    if not xHx > 0:
        log.warning("non-positive curvature x^T H x = %g; skipping step", xHx)
        return wrap(theta.copy()), rejected
    full = np.sqrt(delta / xHx) * x
    quad_full = float(full @ fim_vp(full))

    if surrogate is None and kl is None:
        return wrap(theta + full), StepInfo(True, 1.0, quad_full, float("nan"), float("nan"))

    base = surrogate(wrap(theta)) if surrogate is not None else 0.0
    frac = 1.0
    for _ in range(max_backtracks):
        cand = wrap(theta + frac * full)
        improve = surrogate(cand) - base if surrogate is not None else 1.0
        d_kl = kl(cand) if kl is not None else 0.0
        if improve > 0 and d_kl <= delta:
            return cand, StepInfo(True, frac, frac * frac * quad_full, float(d_kl), float(improve))
        frac *= shrink
    return wrap(theta.copy()), rejected
