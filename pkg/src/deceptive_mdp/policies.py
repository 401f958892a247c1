"""Honest, ambiguity and irrationality action selection over pre-trained Q-tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .mdp import Action, Cell, IsolatedStateError, Mdp, ObservationSequence, available_actions, transition
from .observer import PriorDistribution, divergence_term, entropy_bits, posterior_from_divergences
from .solver import QTable, greedy_action

KINDS = ("honest", "ambiguity", "irrationality")
GAIN_REFERENCES = ("previous", "trace-start")
Q_NORMALIZATIONS = ("ratio", "minmax")

# relative slack when comparing entropies, so mirror-image candidates tie exactly
_ENTROPY_RTOL = 1e-12
# 1 - exp(m) rounds to 1.0 once m < about -37; cap just below so IM stays < 1
_IM_MAX = float(np.nextafter(1.0, 0.0))


class DeadEndError(RuntimeError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    """Agent parameters.

    ``gain_reference`` picks the baseline that candidate filtering and pruning
    measure progress against: ``"previous"`` compares Q(s, a) with the Q-value
    of the last observed pair, ``"trace-start"`` uses the raw :func:`q_gain`.
    ``q_normalization`` selects how the irrationality agent scales the true
    Q-row to [0, 1] (see :func:`normalized_q`).
    """

    kind: str = "honest"
    alpha: float = 0.3
    delta: float = 0.0
    min_active: int = 1
    kappa: float = 1.0
    step_cap: Optional[int] = None
    gain_reference: str = "previous"
    q_normalization: str = "ratio"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.min_active < 1:
            raise ValueError("min_active must be >= 1")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.step_cap is not None and self.step_cap < 1:
            raise ValueError("step_cap must be >= 1")
        if self.gain_reference not in GAIN_REFERENCES:
            raise ValueError(f"gain_reference must be one of {GAIN_REFERENCES}")
        if self.q_normalization not in Q_NORMALIZATIONS:
            raise ValueError(f"q_normalization must be one of {Q_NORMALIZATIONS}")

    @property
    def label(self) -> str:
        if self.kind == "irrationality":
            return f"ir_{self.alpha:g}"
        return self.kind


@dataclass(frozen=True)
class PolicyState:
    obs: ObservationSequence
    active_set: FrozenSet[int]
    first_pair: Optional[Tuple[Cell, Action]] = None
    divergences: Tuple[float, ...] = ()

    @classmethod
    def initial(cls, n_rewards: int) -> "PolicyState":
        return cls(ObservationSequence(), frozenset(range(n_rewards)), None, (0.0,) * n_rewards)

    def advance(self, qtables: Sequence[QTable], s: Cell, a: Action,
                active_set: Optional[FrozenSet[int]] = None) -> "PolicyState":
        divs = tuple(d + divergence_term(q, s, a) for d, q in zip(self.divergences, qtables))
        return PolicyState(
            self.obs.extend(s, a),
            self.active_set if active_set is None else frozenset(active_set),
            self.first_pair if self.first_pair is not None else (tuple(s), Action(a)),
            divs,
        )


@dataclass(frozen=True)
class StepRecord:
    state: Cell
    action: Action
    active_set: FrozenSet[int] = frozenset()
    candidates: Tuple[Action, ...] = ()
    fallback: bool = False


@dataclass
class Episode:
    trace: ObservationSequence
    truncated: bool
    reached_goal: bool
    records: List[StepRecord] = field(default_factory=list)
    step_cap: int = 0


# -- gains ------------------------------------------------------------------

def residual_reward(q: QTable, obs: ObservationSequence) -> float:
    """Q at the last observed pair minus Q at the first; 0 on an empty trace."""
    if len(obs) == 0:
        return 0.0
    (s0, a0), (s1, a1) = obs[0], obs[-1]
    return q(s1, a1) - q(s0, a0)


def q_gain(q: QTable, obs: ObservationSequence, s: Cell, a: Action) -> float:
    return q(s, a) - residual_reward(q, obs)


def progress_gain(q: QTable, obs: ObservationSequence, s: Cell, a: Action,
                  reference: str = "previous") -> float:
    """Gain used by candidate filtering and pruning.

    With ``reference="previous"`` this is ``q_gain - Q(s0, a0)``, which
    telescopes to Q(s, a) minus Q at the last observed pair. Both variants
    equal Q(s, a) on an empty trace.
    """
    g = q_gain(q, obs, s, a)
    if reference == "previous" and len(obs):
        s0, a0 = obs[0]
        g -= q(s0, a0)
    return g


# -- honest -----------------------------------------------------------------

def honest_action(q_true: QTable, s: Cell) -> Action:
    return greedy_action(q_true, s)


def _valid_actions(mdp: Mdp, s: Cell) -> Tuple[Action, ...]:
    try:
        return available_actions(mdp.map, s)
    except IsolatedStateError as exc:
        raise DeadEndError(str(exc)) from exc


# -- ambiguity --------------------------------------------------------------

def ambiguity_candidates(mdp: Mdp, qtables: Sequence[QTable], obs: ObservationSequence, s: Cell,
                         reference: str = "previous") -> Tuple[Tuple[Action, ...], bool]:
    """Actions that strictly gain on the true reward, or the best one if none do.

    Returns ``(candidates, fallback_fired)``. Strictness makes the true Q-value
    of the observed pairs strictly increasing, which rules out cycles.
    """
    valid = _valid_actions(mdp, s)
    q_true = qtables[mdp.true_index]
    gains = [progress_gain(q_true, obs, s, a, reference) for a in valid]
    cands = tuple(a for a, g in zip(valid, gains) if g > 0)
    if cands:
        return cands, False
    return (valid[int(np.argmax(gains))],), True


def prune(mdp: Mdp, qtables: Sequence[QTable], obs: ObservationSequence, s: Cell,
          candidates: Sequence[Action], cfg: PolicyConfig) -> FrozenSet[int]:
    """Rewards kept in the entropy calculation at ``s``."""
    n = len(qtables)
    best = [max(progress_gain(q, obs, s, a, cfg.gain_reference) for a in candidates) for q in qtables]
    keep = {i for i in range(n) if best[i] >= cfg.delta}
    keep.add(mdp.true_index)
    floor = min(cfg.min_active, n)
    if len(keep) < floor:
        for i in sorted(range(n), key=lambda i: (-best[i], i)):
            if len(keep) >= floor:
                break
            keep.add(i)
    return frozenset(keep)


def ambiguity_scores(qtables: Sequence[QTable], prior: PriorDistribution, state: PolicyState,
                     s: Cell, candidates: Sequence[Action], active: FrozenSet[int],
                     kappa: float = 1.0) -> List[float]:
    idx = sorted(active)
    sub_prior = PriorDistribution.from_weights([prior.weights[i] for i in idx])
    scores = []
    for a in candidates:
        divs = [state.divergences[i] + divergence_term(qtables[i], s, a) for i in idx]
        scores.append(kappa * entropy_bits(posterior_from_divergences(divs, sub_prior)))
    return scores


def _argmax_with_slack(scores: Sequence[float], gains: Sequence[float]) -> int:
    """Index of the best score; near-ties go to the larger gain, then the earlier index."""
    top = max(scores)
    slack = _ENTROPY_RTOL * abs(top)
    best = None
    for k, sc in enumerate(scores):
        if sc >= top - slack and (best is None or gains[k] > gains[best]):
            best = k
    return best


def ambiguity_action(mdp: Mdp, qtables: Sequence[QTable], prior: PriorDistribution,
                     state: PolicyState, s: Cell, cfg: PolicyConfig) -> Tuple[Action, PolicyState]:
    action, new_state, _ = _ambiguity_step(mdp, qtables, prior, state, s, cfg)
    return action, new_state


def _ambiguity_step(mdp, qtables, prior, state, s, cfg):
    cands, fallback = ambiguity_candidates(mdp, qtables, state.obs, s, cfg.gain_reference)
    active = prune(mdp, qtables, state.obs, s, cands, cfg)
    scores = ambiguity_scores(qtables, prior, state, s, cands, active, cfg.kappa)
    q_true = qtables[mdp.true_index]
    gains = [progress_gain(q_true, state.obs, s, c, cfg.gain_reference) for c in cands]
    a = cands[_argmax_with_slack(scores, gains)]
    record = StepRecord(tuple(s), a, active, cands, fallback)
    return a, state.advance(qtables, s, a, active), record


# -- irrationality ----------------------------------------------------------

def irrationality_measure(qtables: Sequence[QTable], obs: ObservationSequence) -> float:
    """1 minus the best rationality exp(divergence) over all reward functions."""
    best = max(sum(divergence_term(q, s, a) for s, a in obs) for q in qtables)
    return _im_from(best)


def _im_from(best_divergence: float) -> float:
    return min(-math.expm1(best_divergence), _IM_MAX)


def normalized_q(q: QTable, s: Cell, actions: Sequence[Action], mode: str = "ratio") -> np.ndarray:
    """Scale Q(s, .) over ``actions`` into [0, 1], best action at 1.

    ``"ratio"`` divides by the best value (falling back to min-max when the
    best value is not positive); ``"minmax"`` stretches the row to [0, 1].
    A constant row maps to all ones either way.
    """
    vals = np.array([q(s, a) for a in actions])
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        return np.ones_like(vals)
    if mode == "ratio" and hi > 0:
        # written as a shortfall so only exact maxima reach 1
        return np.clip(1.0 - (hi - vals) / hi, 0.0, 1.0)
    return (vals - lo) / (hi - lo)


def irrationality_scores(qtables: Sequence[QTable], state: PolicyState, s: Cell,
                         actions: Sequence[Action], alpha: float, true_index: int,
                         mode: str = "ratio") -> np.ndarray:
    qn = normalized_q(qtables[true_index], s, actions, mode)
    im = np.empty(len(actions))
    for k, a in enumerate(actions):
        best = max(d + divergence_term(q, s, a) for d, q in zip(state.divergences, qtables))
        im[k] = _im_from(best)
    return (1.0 - alpha) * qn + alpha * im


def irrationality_action(mdp: Mdp, qtables: Sequence[QTable], state: PolicyState, s: Cell,
                         cfg: PolicyConfig) -> Tuple[Action, PolicyState]:
    valid = _valid_actions(mdp, s)
    scores = irrationality_scores(qtables, state, s, valid, cfg.alpha, mdp.true_index, cfg.q_normalization)
    a = valid[int(np.argmax(scores))]
    return a, state.advance(qtables, s, a)


# -- episodes ---------------------------------------------------------------

def honest_length(mdp: Mdp, q_true: QTable) -> int:
    s, steps = mdp.map.start, 0
    limit = mdp.map.width * mdp.map.height
    while s != mdp.true_goal:
        s = transition(mdp.map, s, honest_action(q_true, s))
        steps += 1
        if steps > limit:
            raise RuntimeError("greedy policy does not reach the true goal")
    return steps


def run_episode(mdp: Mdp, qtables: Sequence[QTable], prior: PriorDistribution,
                cfg: PolicyConfig) -> Episode:
    if mdp.map.start == mdp.true_goal:
        raise ValueError("start coincides with the true goal")
    cap = cfg.step_cap or 10 * honest_length(mdp, qtables[mdp.true_index])
    state = PolicyState.initial(len(qtables))
    records = []
    s = mdp.map.start
    while s != mdp.true_goal and len(records) < cap:
        if cfg.kind == "honest":
            a = honest_action(qtables[mdp.true_index], s)
            state = state.advance(qtables, s, a)
            rec = StepRecord(tuple(s), a)
        elif cfg.kind == "ambiguity":
            a, state, rec = _ambiguity_step(mdp, qtables, prior, state, s, cfg)
        else:
            a, state = irrationality_action(mdp, qtables, state, s, cfg)
            rec = StepRecord(tuple(s), a)
        records.append(rec)
        s = transition(mdp.map, s, a)
    reached = s == mdp.true_goal
    return Episode(state.obs, not reached, reached, records, cap)
