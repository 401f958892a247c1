"""Naive cost-difference goal recognition.

Each candidate reward is scored by how far the observed pairs fall short of
its greedy choice; the scores feed a Boltzmann posterior computed in log space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .mdp import ObservationSequence
from .solver import QTable


class DegenerateDistributionError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PriorDistribution:
    weights: Tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if not w or any(not x > 0 for x in w):
            raise ValueError("prior weights must be positive")
        if abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"prior weights sum to {sum(w)}, not 1")

    @classmethod
    def uniform(cls, n: int) -> "PriorDistribution":
        return cls((1.0 / n,) * n)

    @classmethod
    def from_weights(cls, raw: Sequence[float]) -> "PriorDistribution":
        """Normalize arbitrary positive weights."""
        total = float(sum(raw))
        return cls(tuple(float(x) / total for x in raw))

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True)
class PosteriorSnapshot:
    step_index: int
    probabilities: Tuple[float, ...]
    divergences: Tuple[float, ...]


def divergence_term(q: QTable, s, a) -> float:
    row = q.row(s)
    return float(row[a] - row.max())


def divergence(q: QTable, obs: ObservationSequence) -> float:
    total = 0.0
    for s, a in obs:
        total += divergence_term(q, s, a)
    return total


def normalize_log(logits: np.ndarray) -> np.ndarray:
    """Softmax of ``logits`` via the log-sum-exp shift."""
    m = np.max(logits)
    if not np.isfinite(m):
        raise DegenerateDistributionError("every log-weight is -inf")
    w = np.exp(logits - m)
    return w / w.sum()


def posterior_from_divergences(divergences: Sequence[float], prior: PriorDistribution,
                               beta: float = 1.0) -> np.ndarray:
    logits = beta * np.asarray(divergences, dtype=np.float64) + np.log(np.asarray(prior.weights))
    return normalize_log(logits)


def _check(qtables, prior):
    if not qtables:
        raise ValueError("need at least one Q-table")
    if len(prior) != len(qtables):
        raise ValueError(f"prior has {len(prior)} weights for {len(qtables)} reward functions")


def posterior(qtables: Sequence[QTable], prior: PriorDistribution, obs: ObservationSequence,
              beta: float = 1.0) -> PosteriorSnapshot:
    _check(qtables, prior)
    divs = tuple(divergence(q, obs) for q in qtables)
    if len(obs) == 0:
        return PosteriorSnapshot(0, prior.weights, divs)
    probs = posterior_from_divergences(divs, prior, beta)
    return PosteriorSnapshot(len(obs), tuple(float(p) for p in probs), divs)


def posterior_stream(qtables: Sequence[QTable], prior: PriorDistribution, obs: ObservationSequence,
                     beta: float = 1.0) -> List[PosteriorSnapshot]:
    """Posterior after each prefix ``obs[:1] ... obs[:len(obs)]``."""
    _check(qtables, prior)
    divs = [0.0] * len(qtables)
    out = []
    for j, (s, a) in enumerate(obs, start=1):
        for i, q in enumerate(qtables):
            divs[i] += divergence_term(q, s, a)
        probs = posterior_from_divergences(divs, prior, beta)
        out.append(PosteriorSnapshot(j, tuple(float(p) for p in probs), tuple(divs)))
    return out


def entropy_bits(probs) -> float:
    p = np.asarray(probs, dtype=np.float64)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())
