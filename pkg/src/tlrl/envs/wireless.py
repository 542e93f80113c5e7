"""Opportunistic multiple-access over orthogonal fading channels.

One agent sends queued packets to an access point over ``C`` channels. Each
slot it picks a transmit power per channel. The rate on channel ``c`` is
``log2(1 + p_c h_c / noise)`` packets, and only ``1 - loss`` of it gets
through while the channel is occupied. Transmission drains a battery that
is recharged by random energy harvesting, and packets arrive in bursts every
``packet_arrival_period`` slots. The reward is
``w_battery * battery - w_queue * queue``.

Raw state layout (one row per environment):
``[h_1..h_C, occ_1..occ_C, battery, queue, slot]``; the slot counter drives the
periodic arrivals and is not part of the discretized observation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .base import Discretizer, Environment, StepResult


def _defaults():
    text = resources.files("tlrl.envs").joinpath("wireless_defaults.json").read_text()
    doc = json.loads(text)
    doc.pop("_note", None)
    return doc


@dataclass
class WirelessConfig:
    channels: int = 2
    packet_arrival_period: int = 10
    packets_per_arrival: float = 4.0
    queue_capacity: float = 20.0
    battery_capacity: float = 20.0
    harvest_probability: float = 0.3
    harvest_amount: float = 1.0
    occupancy_probability: float = 0.3
    fading_levels: list = field(default_factory=lambda: [0.5, 1.0, 1.5, 2.0])
    loss_fraction_when_occupied: float = 0.8
    reward_weights: tuple = (0.1, 1.0)
    noise_power: float = 1.0
    max_power: float = 4.0
    bins: int = 4

    def __post_init__(self):
        for name in ("harvest_probability", "occupancy_probability", "loss_fraction_when_occupied"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.queue_capacity < 1 or self.battery_capacity < 1:
            raise ValueError("capacities must be >= 1")
        if self.channels < 1 or self.packet_arrival_period < 1:
            raise ValueError("channels and arrival period must be >= 1")
        if min(self.reward_weights) < 0:
            raise ValueError("reward weights must be non-negative")
        if self.noise_power <= 0 or self.max_power <= 0:
            raise ValueError("noise and max power must be positive")
        self.reward_weights = tuple(self.reward_weights)

    @classmethod
    def default(cls, **overrides):
        doc = _defaults()
        doc.update(overrides)
        return cls(**doc)

    def to_dict(self):
        d = asdict(self)
        d["reward_weights"] = list(self.reward_weights)
        return d


class WirelessEnv(Environment):
    discrete = False
    name = "wireless"

    def __init__(self, config=None):
        self.cfg = config if config is not None else WirelessConfig.default()
        C = self.cfg.channels
        self.action_dim = C
        self.action_low = np.zeros(C)
        self.action_high = np.full(C, self.cfg.max_power)
        levels = np.asarray(self.cfg.fading_levels, dtype=np.float64)
        self.levels = levels
        nb = self.cfg.bins
        span = max(levels.max() - levels.min(), 1e-9)
        low = [levels.min()] * C + [0.0] * C + [0.0, 0.0]
        high = [levels.min() + span] * C + [1.0] * C + [self.cfg.battery_capacity, self.cfg.queue_capacity]
        bins = [min(nb, len(levels))] * C + [2] * C + [nb, nb]
        self.discretizer = Discretizer(low, high, bins)
        wb, wq = self.cfg.reward_weights
        self.reward_bound = wb * self.cfg.battery_capacity + wq * self.cfg.queue_capacity

    @property
    def state_dim(self):
        return 2 * self.cfg.channels + 3

    def index(self, states):
        states = np.asarray(states, dtype=np.float64)
        return self.discretizer(states[..., : 2 * self.cfg.channels + 2])

    def _channels(self, rng, n):
        C = self.cfg.channels
        fading = self.levels[rng.integers(0, len(self.levels), size=(n, C))]
        occupied = (rng.random((n, C)) < self.cfg.occupancy_probability).astype(np.float64)
        return fading, occupied

    def reset(self, rng, n):
        fading, occupied = self._channels(rng, n)
        battery = np.full((n, 1), self.cfg.battery_capacity)
        zeros = np.zeros((n, 1))
        return np.hstack([fading, occupied, battery, zeros, zeros])

    def rates(self, power, fading, occupied):
        """Delivered packets per channel for the given powers."""
        cap = np.log2(1.0 + power * fading / self.cfg.noise_power)
        return cap * (1.0 - self.cfg.loss_fraction_when_occupied * occupied)

    def transition(self, states, power, rng):
        """Advance one slot; also return the bookkeeping terms for checks."""
        cfg = self.cfg
        C = cfg.channels
        fading, occupied = states[:, :C], states[:, C:2 * C]
        battery, queue, slot = states[:, 2 * C], states[:, 2 * C + 1], states[:, 2 * C + 2]
        power = np.clip(power, 0.0, cfg.max_power)
        want = power.sum(axis=1)
        scale = np.where(want > battery, battery / np.maximum(want, 1e-300), 1.0)
        power = power * scale[:, None]
        spent = power.sum(axis=1)
        delivered = np.minimum(queue, self.rates(power, fading, occupied).sum(axis=1))
        arrivals = np.where(np.mod(slot, cfg.packet_arrival_period) == 0, cfg.packets_per_arrival, 0.0)
        harvested = np.where(rng.random(len(battery)) < cfg.harvest_probability, cfg.harvest_amount, 0.0)
        queue2 = np.clip(queue + arrivals - delivered, 0.0, cfg.queue_capacity)
        battery2 = np.clip(battery - spent + harvested, 0.0, cfg.battery_capacity)
        fading2, occupied2 = self._channels(rng, len(battery))
        nxt = np.hstack([fading2, occupied2, battery2[:, None], queue2[:, None], (slot + 1)[:, None]])
        wb, wq = cfg.reward_weights
        reward = wb * battery2 - wq * queue2
        terms = dict(spent=spent, delivered=delivered, arrivals=arrivals, harvested=harvested)
        return nxt, reward, terms

    def _step(self, states, actions, rng):
        nxt, reward, _ = self.transition(states, actions, rng)
        return StepResult(nxt, reward, np.zeros(len(reward), dtype=bool))
