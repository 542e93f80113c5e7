"""Episodic environments with tensor-index state discretization."""

from .base import Discretizer, Environment, RewardBoundError, StepResult, discretize, env_reset, env_step
from .classic import MountainCar, Pendulum
from .gridworld import GridWorld, bellman_residual, evaluate_policy, policy_value, value_iteration_oracle
from .wireless import WirelessConfig, WirelessEnv


def make_env(spec):
    """Build an environment from a ``{"name": ..., **params}`` mapping."""
    spec = dict(spec)
    name = spec.pop("name")
    if name == "gridworld":
        return GridWorld(**spec)
    if name == "mountaincar":
        return MountainCar(**spec)
    if name == "pendulum":
        return Pendulum(**spec)
    if name == "wireless":
        return WirelessEnv(WirelessConfig.default(**spec))
    raise ValueError(f"unknown environment {name!r}")


__all__ = [
    "Discretizer", "Environment", "RewardBoundError", "StepResult", "discretize", "env_reset",
    "env_step", "MountainCar", "Pendulum", "GridWorld", "bellman_residual", "evaluate_policy",
    "policy_value", "value_iteration_oracle", "WirelessConfig", "WirelessEnv", "make_env",
]
