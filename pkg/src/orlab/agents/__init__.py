"""Learning algorithms: tabular experts and the offline suite."""

from .config import ALGOS, AgentConfig
from .offline import Agent, TrainResult, TrainingDivergence, make_agent, train_offline
from .tabular import ExpertTrainingError, TabularPolicy, tabular_expert

__all__ = ["ALGOS", "AgentConfig", "Agent", "TrainResult", "TrainingDivergence", "make_agent",
           "train_offline", "ExpertTrainingError", "TabularPolicy", "tabular_expert"]
