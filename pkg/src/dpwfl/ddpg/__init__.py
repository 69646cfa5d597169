"""Actor-critic search over transmit-power allocations."""

from .agent import AgentConfig, DdpgAgent, ReplayBuffer, RunningNorm, action_to_power, power_to_action
from .env import NoiseObjectiveEnv, OptimizeResult, StepRecord, SurrogateEnv, optimize_power
from .mlp import Adam, Mlp, soft_update

__all__ = [
    "Adam",
    "AgentConfig",
    "DdpgAgent",
    "Mlp",
    "NoiseObjectiveEnv",
    "OptimizeResult",
    "ReplayBuffer",
    "RunningNorm",
    "StepRecord",
    "SurrogateEnv",
    "action_to_power",
    "optimize_power",
    "power_to_action",
    "soft_update",
]
