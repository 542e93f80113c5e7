"""The four tensor low-rank trainers and their shared loop.

* ``tlrpg``   - Monte-Carlo policy gradient on returns-to-go.
* ``tlrac``   - actor-critic: advantage-weighted actor step, then a critic step.
* ``trtlrpo`` - natural-gradient step inside a KL trust region, then a critic step.
* ``ptlrpo``  - clipped-ratio (proximal) actor ascent, then a critic step.

Every actor update is optionally projected onto the box ``|theta| <= bound``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..critic import CriticModel, NonFiniteUpdate, critic_step
from ..policies import GaussianPolicy, SoftmaxPolicy
from .batch import advantages, returns_to_go, sample_batch
from .estimators import (
    ac_gradient,
    fim_vector_product,
    gradient_mapping_norm,
    pg_gradient,
    ppo_gradient,
    project_box,
    surrogate,
    trpo_gradient,
)
from .trust_region import trpo_step

log = logging.getLogger(__name__)

ALGORITHMS = ("tlrpg", "tlrac", "trtlrpo", "ptlrpo")
LOG_COLUMNS = ("run_id", "algorithm", "env", "seed", "iteration", "mean_return", "median_return",
               "kl_used", "grad_mapping_norm", "wallclock_ms")


@dataclass
class TrainerConfig:
    algorithm: str = "tlrpg"
    rank: int = 3
    critic_rank: int | None = None
    actor_lr: float = 0.01
    lr_schedule: str = "constant"  # or "inv_sqrt_H": actor_lr / sqrt(H)
    critic_lr: float = 0.001
    U: int = 8
    T: int = 50
    H: int = 100
    delta: float = 0.01
    epsilon: float = 0.2
    ppo_epochs: int = 1
    sigma: float = 1.0
    sigma_decay: float = 1.0
    beta: float = 1.0
    beta_decay: float = 1.0
    bound: float | None = None
    cg_iters: int = 10
    cg_damping: float = 0.1
    max_backtracks: int = 10
    normalize_advantages: bool = False
    moreau_lambda: float | None = None
    seed: int = 0
    log_wallclock: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.lr_schedule not in ("constant", "inv_sqrt_H"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        for name in ("U", "T", "H", "rank", "ppo_epochs", "cg_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.actor_lr < 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.epsilon:
            raise ValueError("epsilon must be positive")
        if not (self.sigma > 0 and self.beta >= 0):
            raise ValueError("sigma must be positive and beta non-negative")
        if self.bound is not None and not self.bound > 0:
            raise ValueError("bound must be positive or null")

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown trainer options: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self):
        return asdict(self)

    def actor_rate(self, h):
        if self.lr_schedule == "inv_sqrt_H":
            return self.actor_lr / math.sqrt(self.H)
        return self.actor_lr


@dataclass
class TrainingLog:
    run_id: str
    algorithm: str
    env: str
    seed: int
    rows: list = field(default_factory=list)
    episode_returns: list = field(default_factory=list)  # one array per iteration
    trust_region: list = field(default_factory=list)  # StepInfo per iteration
    max_abs_param: list = field(default_factory=list)
    aborted: str | None = None

    def record(self, iteration, returns, kl=None, gm=None, ms=None):
        self.episode_returns.append(np.asarray(returns, dtype=np.float64))
        self.rows.append({
            "run_id": self.run_id, "algorithm": self.algorithm, "env": self.env, "seed": self.seed,
            "iteration": iteration, "mean_return": float(np.mean(returns)),
            "median_return": float(np.median(returns)), "kl_used": kl, "grad_mapping_norm": gm,
            "wallclock_ms": ms,
        })

    def all_episode_returns(self):
        return np.concatenate(self.episode_returns) if self.episode_returns else np.zeros(0)

    def column(self, name):
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=np.float64)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_COLUMNS)
            for r in self.rows:
                w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                            for c in LOG_COLUMNS])

    def write_episodes_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "episode", "return"])
            for h, rets in enumerate(self.episode_returns):
                for u, g in enumerate(rets):
                    w.writerow([h, u, repr(float(g))])


class TrainingAborted(RuntimeError):
    """Raised on a non-finite update; carries the last good models and the log."""

    def __init__(self, message, policy, critic, log):
        super().__init__(message)
        self.policy = policy
        self.critic = critic
        self.log = log


@dataclass
class TrainResult:
    policy: object
    critic: object
    log: TrainingLog


def rng_streams(seed):
    """Independent generators for initialization and rollouts."""
    ss = np.random.SeedSequence(seed)
    init_ss, roll_ss = ss.spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(roll_ss)


def init_policy(env, cfg, rng):
    if env.discrete:
        return SoftmaxPolicy.create(env.state_dims, env.num_actions, cfg.rank, cfg.beta, rng)
    return GaussianPolicy.create(env.state_dims, cfg.rank, cfg.sigma, rng, action_dim=env.action_dim)


def _with_temperature(policy, cfg, h):
    if isinstance(policy, SoftmaxPolicy):
        return policy.with_beta(cfg.beta * cfg.beta_decay**h)
    return policy.with_sigma(cfg.sigma * cfg.sigma_decay**h)


def _check_finite(vec, what):
    if not np.all(np.isfinite(vec)):
        raise NonFiniteUpdate(f"non-finite {what}")


def train(env, cfg, policy=None, critic=None, run_id=None, callback=None):
    """Run ``cfg.algorithm`` for ``cfg.H`` iterations.

    ``callback(h, policy, critic, batch)`` is invoked after every iteration
    with the updated models. Returns a :class:`TrainResult`.
    """
    init_rng, rng = rng_streams(cfg.seed)
    if policy is None:
        policy = init_policy(env, cfg, init_rng)
    uses_critic = cfg.algorithm != "tlrpg"
    if uses_critic and critic is None:
        critic = CriticModel.create(env.state_dims, cfg.critic_rank or cfg.rank, init_rng)
    run_id = run_id or f"{cfg.algorithm}-{env.name}-{cfg.seed}"
    tlog = TrainingLog(run_id, cfg.algorithm, env.name, cfg.seed)
    step = _ACTOR_STEPS[cfg.algorithm]

    for h in range(cfg.H):
        t0 = time.perf_counter()
        policy = _with_temperature(policy, cfg, h)
        batch = returns_to_go(sample_batch(env, policy, cfg.U, cfg.T, rng))
        try:
            new_policy, grad, kl_used, info = step(policy, critic, batch, cfg, h)
            theta = new_policy.flat()
            _check_finite(theta, "actor parameters")
            lam = cfg.moreau_lambda or cfg.actor_rate(h) or 1.0
            gm = gradient_mapping_norm(policy, grad, lam, cfg.bound)
            if uses_critic:
                new_critic = critic_step(critic, batch, cfg.critic_lr)
                _check_finite(new_critic.flat(), "critic parameters")
            else:
                new_critic = critic
        except NonFiniteUpdate as exc:
            tlog.aborted = f"iteration {h}: {exc}"
            log.error("%s aborted: %s", run_id, tlog.aborted)
            raise TrainingAborted(tlog.aborted, policy, critic, tlog) from exc
        policy, critic = new_policy, new_critic
        ms = (time.perf_counter() - t0) * 1e3 if cfg.log_wallclock else None
        tlog.record(h, batch.episode_returns(), kl_used, gm, ms)
        tlog.trust_region.append(info)
        tlog.max_abs_param.append(float(np.max(np.abs(theta))))
        if callback is not None:
            callback(h, policy, critic, batch)
    return TrainResult(policy, critic, tlog)


# ----------------------------------------------------------------------------
# actor steps: (policy, critic, batch, cfg, h) -> (policy, grad, kl_used, info)


def _ascent(policy, grad, cfg, h):
    with np.errstate(over="ignore", invalid="ignore"):
        theta = policy.flat() + cfg.actor_rate(h) * grad
    _check_finite(theta, "actor parameters")
    return policy.with_params(project_box(theta, cfg.bound))


def _tlrpg_step(policy, critic, batch, cfg, h):
    grad = pg_gradient(policy, batch)
    _check_finite(grad, "policy gradient")
    return _ascent(policy, grad, cfg, h), grad, None, None


def _tlrac_step(policy, critic, batch, cfg, h):
    adv = advantages(batch, critic, cfg.normalize_advantages)
    grad = ac_gradient(policy, batch, adv)
    _check_finite(grad, "actor gradient")
    return _ascent(policy, grad, cfg, h), grad, None, None


def _mean_kl(old, batch):
    idx = batch.state_idx[batch.mask]
    return lambda cand: float(np.mean(old.kl_batch(cand, idx)))


def _trtlrpo_step(policy, critic, batch, cfg, h):
    adv = advantages(batch, critic, cfg.normalize_advantages)
    g = trpo_gradient(policy, batch, adv)
    _check_finite(g, "trust-region gradient")
    fvp = lambda v: fim_vector_product(policy, batch, v, cfg.cg_damping)
    new, info = trpo_step(policy, g, fvp, cfg.delta, cfg.cg_iters,
                          surrogate=lambda p: surrogate(p, batch, adv), kl=_mean_kl(policy, batch),
                          max_backtracks=cfg.max_backtracks)
    if cfg.bound is not None:
        new = new.with_params(project_box(new.flat(), cfg.bound))
    return new, g, info.kl if info.accepted else 0.0, info


def _ptlrpo_step(policy, critic, batch, cfg, h):
    adv = advantages(batch, critic, cfg.normalize_advantages)
    current = policy
    first = None
    for _ in range(cfg.ppo_epochs):
        grad = ppo_gradient(current, policy, batch, adv, cfg.epsilon)
        _check_finite(grad, "clipped-objective gradient")
        if first is None:
            first = grad
        current = _ascent(current, grad, cfg, h)
    return current, first, None, None


_ACTOR_STEPS = {
    "tlrpg": _tlrpg_step,
    "tlrac": _tlrac_step,
    "trtlrpo": _trtlrpo_step,
    "ptlrpo": _ptlrpo_step,
}


def tlrpg_train(env, config, **kw):
    return train(env, _as(config, "tlrpg"), **kw)


def tlrac_train(env, config, **kw):
    return train(env, _as(config, "tlrac"), **kw)


def trtlrpo_train(env, config, **kw):
    return train(env, _as(config, "trtlrpo"), **kw)


def ptlrpo_train(env, config, **kw):
    return train(env, _as(config, "ptlrpo"), **kw)


def _as(config, algorithm):
    d = config.to_dict()
    d["algorithm"] = algorithm
    return TrainerConfig(**d)
