"""Multi-agent pedestrian road-crossing simulator for generating AV test cases."""

from .config import AgentKind, ExperimentConfig, load_config
from .harness import run_experiment, run_grid, run_test, score_test, summarize
from .world import PedestrianAction, TestEvent

__all__ = [
    "AgentKind",
    "ExperimentConfig",
    "PedestrianAction",
    "TestEvent",
    "load_config",
    "run_experiment",
    "run_grid",
    "run_test",
    "score_test",
    "summarize",
]

__version__ = "0.1.0"
