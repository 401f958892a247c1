"""Deception measures computed from an episode's posterior stream."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .mdp import Mdp, ObservationSequence, reward, transition
from .observer import PosteriorSnapshot

DEFAULT_CHECKPOINTS = tuple(k / 10 for k in range(1, 10))


@dataclass(frozen=True)
class EpisodeMetrics:
    path_cost: float
    optimal_cost: float
    cost_ratio: float
    checkpoint_posteriors: Tuple[Tuple[float, float], ...]
    simulation_value: float
    ldp_index: int
    non_deceptive_fraction: float
    truncated: bool


def _require_two(snapshot: PosteriorSnapshot):
    if len(snapshot.probabilities) < 2:
        raise ValueError("deception measures need at least two reward functions")


def step_simulation(snapshot: PosteriorSnapshot, true_index: int) -> float:
    """Most likely bogus probability minus the true probability."""
    _require_two(snapshot)
    p = snapshot.probabilities
    bogus = max(x for i, x in enumerate(p) if i != true_index)
    return bogus - p[true_index]


def simulation_value(snapshots: Sequence[PosteriorSnapshot], true_index: int) -> float:
    if not snapshots:
        raise ValueError("simulation value of an empty stream is undefined")
    return sum(step_simulation(sn, true_index) for sn in snapshots) / len(snapshots)


def deceptive_step(snapshot: PosteriorSnapshot, true_index: int) -> bool:
    """True unless the true reward strictly dominates every other reward."""
    _require_two(snapshot)
    p = snapshot.probabilities
    return any(p[true_index] <= x for i, x in enumerate(p) if i != true_index)


def last_deceptive_point(snapshots: Sequence[PosteriorSnapshot], true_index: int) -> int:
    """1-based index of the last deceptive snapshot, 0 if there is none."""
    ldp = 0
    for j, sn in enumerate(snapshots, start=1):
        if deceptive_step(sn, true_index):
            ldp = j
    return ldp


def non_deceptive_fraction(snapshots: Sequence[PosteriorSnapshot], true_index: int) -> float:
    if not snapshots:
        return 1.0
    honest = sum(1 for sn in snapshots if not deceptive_step(sn, true_index))
    return honest / len(snapshots)


def belief_induced_score(trace: ObservationSequence, snapshots: Sequence[PosteriorSnapshot],
                         mdp: Mdp, omega: float) -> float:
    """Sum over steps of ``(1 - omega) * reward + omega * per-step simulation``."""
    if len(trace) != len(snapshots):
        raise ValueError(f"trace has {len(trace)} pairs but {len(snapshots)} snapshots")
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [0, 1]")
    rf = mdp.true_reward
    total = 0.0
    for (s, a), sn in zip(trace, snapshots):
        r = reward(rf, s, a, transition(mdp.map, s, a))
        total += (1.0 - omega) * r + omega * step_simulation(sn, mdp.true_index)
    return total


def checkpoint_index(fraction: float, t: int) -> int:
    return min(max(math.ceil(fraction * t), 1), t)


def checkpoint_posteriors(snapshots: Sequence[PosteriorSnapshot], true_index: int,
                          fractions: Sequence[float] = DEFAULT_CHECKPOINTS) -> List[Tuple[float, float]]:
    if not snapshots:
        raise ValueError("no snapshots")
    t = len(snapshots)
    return [(f, snapshots[checkpoint_index(f, t) - 1].probabilities[true_index]) for f in fractions]


def episode_metrics(trace: ObservationSequence, snapshots: Sequence[PosteriorSnapshot], true_index: int,
                    optimal_cost: float, truncated: bool,
                    fractions: Sequence[float] = DEFAULT_CHECKPOINTS) -> EpisodeMetrics:
    cost = trace.cost()
    return EpisodeMetrics(
        path_cost=cost,
        optimal_cost=optimal_cost,
        cost_ratio=cost / optimal_cost,
        checkpoint_posteriors=tuple(checkpoint_posteriors(snapshots, true_index, fractions)),
        simulation_value=simulation_value(snapshots, true_index),
        ldp_index=last_deceptive_point(snapshots, true_index),
        non_deceptive_fraction=non_deceptive_fraction(snapshots, true_index),
        truncated=truncated,
    )
