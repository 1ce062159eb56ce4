"""Energy-harvesting uplink access control and battery prediction with LSTM-DQN agents."""
from ._jit import backend
from .env import ScenarioConfig, UplinkEnv, env_step

__version__ = "0.1.0"
__all__ = ["ScenarioConfig", "UplinkEnv", "backend", "env_step"]
