"""Deceptive policies over grid-world MDPs and a cost-difference goal observer."""

from ._accel import BACKEND
from .mdp import (
    Action,
    GridMap,
    InvalidTraceError,
    IsolatedStateError,
    MapError,
    Mdp,
    ObservationSequence,
    RewardFunction,
    available_actions,
    format_map,
    load_map,
    parse_map,
    reward,
    transition,
)
from .metrics import EpisodeMetrics, episode_metrics, last_deceptive_point, simulation_value
from .observer import PosteriorSnapshot, PriorDistribution, posterior, posterior_stream
from .policies import Episode, PolicyConfig, run_episode
from .solver import QTable, SolverConfig, load_qtable, save_qtable, train_all, value_iteration

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Action", "GridMap", "InvalidTraceError", "IsolatedStateError", "MapError", "Mdp",
    "ObservationSequence", "RewardFunction", "available_actions", "format_map", "load_map", "parse_map",
    "reward", "transition", "EpisodeMetrics", "episode_metrics", "last_deceptive_point",
    "simulation_value", "PosteriorSnapshot", "PriorDistribution", "posterior", "posterior_stream",
    "Episode", "PolicyConfig", "run_episode", "QTable", "SolverConfig", "load_qtable", "save_qtable",
    "train_all", "value_iteration",
]
