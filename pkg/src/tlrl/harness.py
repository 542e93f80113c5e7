"""Seed sweeps, aggregation, the rank-sweep tool and the gridworld oracle.

An experiment is one JSON document::

    {"env": {"name": "gridworld", "rows": 5, "cols": 5},
     "trainer": {"algorithm": "tlrac", "H": 1000, "actor_lr": 0.01, ...},
     "seeds": [0, 1, 2],
     "out": "runs/tlrac",
     "checkpoint_every": 0}

``run_experiment`` writes ``config.json`` (with every default filled in),
``seed_<s>/log.csv``, ``seed_<s>/episodes.csv``, ``seed_<s>/final.tlrp`` and
``aggregate.csv`` under ``out``. Percentiles use the ``lower`` convention so
they are always actual observed values.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algorithms import TrainerConfig, TrainingAborted, sample_batch, train
from .checkpoint import load_checkpoint, save_checkpoint
from .envs import GridWorld, make_env, value_iteration_oracle
from .tensor_core import DenseTensor, ParafacModel, als_fit, best_rank_one, load_dense, reconstruct

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """The experiment description is malformed."""


@dataclass
class ExperimentConfig:
    env: dict
    trainer: TrainerConfig
    seeds: list = field(default_factory=lambda: list(range(20)))
    out: str = "runs/experiment"
    checkpoint_every: int = 0

    def __post_init__(self):
        if "name" not in self.env:
            raise ConfigError("env spec needs a 'name'")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigError("seeds must be a non-empty list of distinct integers")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        unknown = set(doc) - {"env", "trainer", "seeds", "out", "checkpoint_every"}
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        if "env" not in doc:
            raise ConfigError("experiment config needs an 'env' section")
        try:
            trainer = TrainerConfig.from_dict(doc.get("trainer", {}))
            seeds = [int(s) for s in doc.get("seeds", range(20))]
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(dict(doc["env"]), trainer, seeds, str(doc.get("out", "runs/experiment")),
                   int(doc.get("checkpoint_every", 0)))

    @classmethod
    def load(cls, path):
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self):
        return {"env": dict(self.env), "trainer": self.trainer.to_dict(), "seeds": list(self.seeds),
                "out": self.out, "checkpoint_every": self.checkpoint_every}

    def make_env(self):
        try:
            return make_env(self.env)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad env spec: {exc}") from exc


@dataclass
class AggregateResult:
    iterations: np.ndarray
    p25: np.ndarray
    p50: np.ndarray
    p75: np.ndarray
    completed: list
    failed: dict

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "p25", "median", "p75", "n_seeds"])
            for row in zip(self.iterations, self.p25, self.p50, self.p75):
                w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]] + [len(self.completed)])


def aggregate(curves):
    """Lower-interpolation quartiles across seeds of equal-length curves."""
    A = np.asarray(curves, dtype=np.float64)
    q = np.percentile(A, [25, 50, 75], axis=0, method="lower")
    return q[0], q[1], q[2]


def _run_seed(exp_doc, seed):
    """Train one seed; runs in a worker process, so it takes plain data."""
    exp = ExperimentConfig.from_dict(exp_doc)
    env = exp.make_env()
    tdoc = exp.trainer.to_dict()
    tdoc["seed"] = seed
    cfg = TrainerConfig(**tdoc)
    out = Path(exp.out) / f"seed_{seed}"
    out.mkdir(parents=True, exist_ok=True)
    meta = {"env": exp.env, "trainer": tdoc}

    def ckpt(h, policy, critic, batch):
        if exp.checkpoint_every and (h + 1) % exp.checkpoint_every == 0:
            save_checkpoint(out / f"iter_{h + 1:06d}.tlrp", policy, critic, dict(meta, iteration=h + 1))

    try:
        res = train(env, cfg, callback=ckpt)
    except TrainingAborted as exc:
        exc.log.write_csv(out / "log.csv")
        save_checkpoint(out / "last_good.tlrp", exc.policy, exc.critic, meta)
        return seed, None, str(exc)
    res.log.write_csv(out / "log.csv")
    res.log.write_episodes_csv(out / "episodes.csv")
    save_checkpoint(out / "final.tlrp", res.policy, res.critic, dict(meta, iteration=cfg.H))
    return seed, res.log.column("mean_return"), None


def run_experiment(exp, parallel=1):
    """Train every seed (``parallel`` worker processes) and aggregate the curves."""
    out = Path(exp.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = exp.to_dict()
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    exp.make_env()  # fail fast on a bad env spec
    if parallel > 1 and len(exp.seeds) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_seed, [doc] * len(exp.seeds), exp.seeds))
    else:
        results = [_run_seed(doc, s) for s in exp.seeds]
    curves, completed, failed = [], [], {}
    for seed, curve, err in results:
        if err is None:
            curves.append(curve)
            completed.append(seed)
        else:
            failed[seed] = err
            log.warning("seed %d failed: %s", seed, err)
    if failed:
        (out / "failed.json").write_text(json.dumps({str(k): v for k, v in failed.items()}, indent=2) + "\n")
    if not curves:
        raise RuntimeError(f"all {len(exp.seeds)} seeds failed")
    p25, p50, p75 = aggregate(curves)
    agg = AggregateResult(np.arange(len(p50)), p25, p50, p75, completed, failed)
    agg.write_csv(out / "aggregate.csv")
    return agg


def evaluate_checkpoint(path, episodes, seed=0, horizon=None):
    """Roll out a saved policy; returns the per-episode returns."""
    policy, _, meta = load_checkpoint(path)
    if "env" not in meta:
        raise ConfigError("checkpoint carries no env spec")
    env = make_env(meta["env"])
    T = horizon or meta.get("trainer", {}).get("T", 50)
    batch = sample_batch(env, policy, episodes, T, np.random.default_rng(seed))
    return batch.episode_returns()


# ----------------------------------------------------------------------------
# Rank sweep


def rank_sweep(tensor_file, ranks, restarts=3, out_csv=None, seed=0, max_iters=500, tol=1e-10):
    """Best-of-restarts ALS NFE for each rank, written as ``rank,nfe`` rows.

    Ranks are visited in increasing order. Besides the random restarts, rank
    ``K`` is warm-started from the best smaller model extended by the best
    rank-one fit of its residual, and that zero-padded smaller model is itself
    a candidate, so the reported curve never increases with ``K``.
    """
    if isinstance(tensor_file, DenseTensor):
        target = tensor_file
    else:
        try:
            target = load_dense(tensor_file)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load tensor {tensor_file}: {exc}") from exc
    ranks = sorted(set(int(k) for k in ranks))
    if not ranks or ranks[0] < 1:
        raise ValueError("ranks must be positive integers")
    X = target.array()
    normX = float(np.linalg.norm(X))
    rows = []
    prev, prev_err = None, np.inf
    for K in ranks:
        init = None
        if prev is not None:
            resid = DenseTensor(target.dims, (X - reconstruct(prev).array()).ravel())
            one = best_rank_one(resid, seed=seed)
            pad = K - prev.rank - 1
            init = [np.hstack([f, one[d], np.zeros((f.shape[0], pad))]) for d, f in enumerate(prev.factors)]
        model, err = als_fit(target, K, max_iters=max_iters, tol=tol, restarts=restarts, seed=seed, init=init)
        if prev is not None and prev_err < err:
            pad = [np.hstack([f, np.zeros((f.shape[0], K - prev.rank))]) for f in prev.factors]
            model, err = ParafacModel(tuple(pad)), prev_err
        rows.append((K, err))
        prev, prev_err = model, err
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "nfe"])
            for K, e in rows:
                w.writerow([K, repr(float(e))])
    return rows


# ----------------------------------------------------------------------------
# Oracle


def parse_grid(spec):
    """``"5x5"``, a JSON object string, or a path to a JSON file -> GridWorld."""
    if isinstance(spec, GridWorld):
        return spec
    text = str(spec)
    if os.path.exists(text):
        text = Path(text).read_text()
    text = text.strip()
    try:
        if text.startswith("{"):
            doc = json.loads(text)
            doc.pop("name", None)
            if "goal" in doc and doc["goal"] is not None:
                doc["goal"] = tuple(doc["goal"])
            if "start" in doc:
                doc["start"] = tuple(doc["start"])
            return GridWorld(**doc)
        rows, cols = (int(v) for v in text.lower().split("x"))
        return GridWorld(rows, cols)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad grid spec {spec!r}: {exc}") from exc


def oracle_cmd(grid, gamma=1.0, tol=1e-10, horizon=None, out_csv=None):
    """Solve the grid by value iteration; optionally write ``row,col,value,action``."""
    grid = parse_grid(grid)
    res = value_iteration_oracle(grid, gamma, tol, horizon=horizon)
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "value", "action"])
            for r in range(grid.rows):
                for c in range(grid.cols):
                    w.writerow([r, c, repr(float(res.values[r, c])), int(res.policy[r, c])])
    return res
