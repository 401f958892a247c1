"""Deterministic 8-connected grid-world MDP.

Cells are ``(x, y)`` tuples with x growing rightward and y growing downward,
so ``N`` moves to ``(x, y - 1)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, Optional, Sequence, Tuple

import numpy as np

Cell = Tuple[int, int]

SQRT2 = math.sqrt(2.0)
DEFAULT_GOAL_REWARD = 10000.0


class MapError(ValueError):
    """Raised for malformed maps or map text."""


class IsolatedStateError(RuntimeError):
    """Raised when a cell has no available action."""


class InvalidTraceError(ValueError):
    """Raised when an observation sequence breaks transition consistency."""


class Action(IntEnum):
    N = 0
    NE = 1
    E = 2
    SE = 3
    S = 4
    SW = 5
    W = 6
    NW = 7

    @property
    def delta(self) -> Cell:
        return _DELTAS[self]

    @property
    def diagonal(self) -> bool:
        return self.value % 2 == 1

    @property
    def cost(self) -> float:
        return SQRT2 if self.diagonal else 1.0


_DELTAS = {
    Action.N: (0, -1),
    Action.NE: (1, -1),
    Action.E: (1, 0),
    Action.SE: (1, 1),
    Action.S: (0, 1),
    Action.SW: (-1, 1),
    Action.W: (-1, 0),
    Action.NW: (-1, -1),
}

ACTIONS: Tuple[Action, ...] = tuple(Action)
ACTION_DX = np.array([_DELTAS[a][0] for a in ACTIONS], dtype=np.int64)
ACTION_DY = np.array([_DELTAS[a][1] for a in ACTIONS], dtype=np.int64)
ACTION_COST = np.array([a.cost for a in ACTIONS], dtype=np.float64)


@dataclass(frozen=True)
class GridMap:
    width: int
    height: int
    blocked: frozenset
    start: Cell
    goals: Tuple[Cell, ...]
    free: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "blocked", frozenset(tuple(c) for c in self.blocked))
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "goals", tuple(tuple(g) for g in self.goals))
        if self.width < 1 or self.height < 1:
            raise MapError(f"map size must be positive, got {self.width}x{self.height}")
        free = np.ones((self.height, self.width), dtype=np.bool_)
        for x, y in self.blocked:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise MapError(f"blocked cell {(x, y)} out of bounds")
            free[y, x] = False
        free.flags.writeable = False
        object.__setattr__(self, "free", free)

        for cell in (self.start, *self.goals):
            if not self.in_bounds(cell):
                raise MapError(f"cell {cell} out of bounds")
            if cell in self.blocked:
                raise MapError(f"cell {cell} is blocked")
        if len(self.goals) < 2:
            raise MapError("a map needs at least 2 goals")
        if len(set(self.goals)) != len(self.goals):
            raise MapError("goals must be pairwise distinct")
        if self.start in self.goals:
            raise MapError("start must differ from every goal")

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and bool(self.free[cell[1], cell[0]])

    def free_cells(self) -> Iterator[Cell]:
        """Free cells in row-major order."""
        for y in range(self.height):
            for x in range(self.width):
                if self.free[y, x]:
                    yield (x, y)

    def to_text(self) -> str:
        return format_map(self)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("ascii")).hexdigest()


@dataclass(frozen=True)
class RewardFunction:
    """Goal reward plus a negative cost per action, in canonical action order."""

    goal: Cell
    goal_reward: float = DEFAULT_GOAL_REWARD
    step_costs: Tuple[float, ...] = tuple(-a.cost for a in ACTIONS)

    def __post_init__(self):
        object.__setattr__(self, "goal", tuple(self.goal))
        object.__setattr__(self, "step_costs", tuple(float(c) for c in self.step_costs))
        if not self.goal_reward > 0:
            raise ValueError("goal_reward must be positive")
        if len(self.step_costs) != len(ACTIONS) or any(c >= 0 for c in self.step_costs):
            raise ValueError("step_costs needs one negative value per action")

    def step_cost(self, a: Action) -> float:
        return self.step_costs[a]


@dataclass(frozen=True)
class Mdp:
    map: GridMap
    rewards: Tuple[RewardFunction, ...]
    true_index: int
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rewards", tuple(self.rewards))
        if len(self.rewards) != len(self.map.goals):
            raise ValueError("need exactly one reward function per goal")
        for i, rf in enumerate(self.rewards):
            if rf.goal != self.map.goals[i]:
                raise ValueError(f"reward {i} targets {rf.goal}, map goal is {self.map.goals[i]}")
        if not 0 <= self.true_index < len(self.rewards):
            raise ValueError(f"true_index {self.true_index} out of range")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    @classmethod
    def from_map(cls, grid: GridMap, true_index: int = 0, gamma: float = 1.0,
                 goal_reward: float = DEFAULT_GOAL_REWARD) -> "Mdp":
        rewards = tuple(RewardFunction(g, goal_reward) for g in grid.goals)
        return cls(grid, rewards, true_index, gamma)

    @property
    def true_reward(self) -> RewardFunction:
        return self.rewards[self.true_index]

    @property
    def true_goal(self) -> Cell:
        return self.map.goals[self.true_index]


def transition(grid: GridMap, s: Cell, a: Action) -> Optional[Cell]:
    """Successor of ``s`` under ``a``, or None when the move is unavailable.

    Blocked or out-of-bounds cells have no moves.
    Diagonal moves may not cut a corner: both orthogonal neighbours must be free.
    """
    dx, dy = _DELTAS[Action(a)]
    x, y = s
    target = (x + dx, y + dy)
    if not (grid.is_free(target) and grid.is_free((x, y))):
        return None
    if dx and dy and not (grid.is_free((x + dx, y)) and grid.is_free((x, y + dy))):
        return None
    return target


def reward(rf: RewardFunction, s: Cell, a: Action, s_next: Cell) -> float:
    r = rf.step_cost(a)
    if tuple(s_next) == rf.goal:
        r += rf.goal_reward
    return r


def available_actions(grid: GridMap, s: Cell) -> Tuple[Action, ...]:
    acts = tuple(a for a in ACTIONS if transition(grid, s, a) is not None)
    if not acts:
        raise IsolatedStateError(f"no action available at {s}")
    return acts


def successor_table(grid: GridMap) -> np.ndarray:
    """Flat successor index per (cell, action); -1 where the move is unavailable.

    Cells are indexed row-major, ``y * width + x``. Blocked cells have no moves.
    """
    return mask_successors(grid.free)


def mask_successors(free: np.ndarray) -> np.ndarray:
    """:func:`successor_table` for a bare ``(height, width)`` free-cell mask."""
    h, w = free.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.bool_)
    padded[1:-1, 1:-1] = free
    ys, xs = np.mgrid[0:h, 0:w]
    nxt = np.full((h, w, len(ACTIONS)), -1, dtype=np.int64)
    for a in ACTIONS:
        dx, dy = _DELTAS[a]
        ok = free & padded[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx]
        if dx and dy:
            ok &= padded[1:h + 1, 1 + dx:w + 1 + dx] & padded[1 + dy:h + 1 + dy, 1:w + 1]
        nxt[..., a] = np.where(ok, (ys + dy) * w + (xs + dx), -1)
    return nxt.reshape(h * w, len(ACTIONS))


class ObservationSequence:
    """Immutable ordered (state, action) pairs."""

    __slots__ = ("_pairs",)

    def __init__(self, pairs: Iterable[Tuple[Cell, Action]] = ()):
        self._pairs = tuple((tuple(s), Action(a)) for s, a in pairs)

    @property
    def pairs(self) -> Tuple[Tuple[Cell, Action], ...]:
        return self._pairs

    def __len__(self) -> int:
        return len(self._pairs)

    def __iter__(self):
        return iter(self._pairs)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return ObservationSequence(self._pairs[idx])
        return self._pairs[idx]

    def __eq__(self, other):
        return isinstance(other, ObservationSequence) and self._pairs == other._pairs

    def __hash__(self):
        return hash(self._pairs)

    def __repr__(self):
        return f"ObservationSequence({[(s, a.name) for s, a in self._pairs]})"

    def extend(self, s: Cell, a: Action) -> "ObservationSequence":
        out = ObservationSequence()
        out._pairs = self._pairs + ((tuple(s), Action(a)),)
        return out

    def states(self, grid: GridMap) -> list:
        """Visited cells including the cell reached by the final action."""
        if not self._pairs:
            return []
        cells = [s for s, _ in self._pairs]
        s, a = self._pairs[-1]
        cells.append(transition(grid, s, a))
        return cells

    def cost(self) -> float:
        return sum(a.cost for _, a in self._pairs)

    def validate(self, grid: GridMap) -> None:
        for k, (s, a) in enumerate(self._pairs):
            if not grid.is_free(s):
                raise InvalidTraceError(f"pair {k}: state {s} is not a free cell")
            t = transition(grid, s, a)
            if t is None:
                raise InvalidTraceError(f"pair {k}: action {a.name} unavailable at {s}")
            if k + 1 < len(self._pairs) and self._pairs[k + 1][0] != t:
                raise InvalidTraceError(
                    f"pair {k}: {a.name} from {s} reaches {t}, next pair starts at {self._pairs[k + 1][0]}")

    @classmethod
    def from_actions(cls, grid: GridMap, start: Cell, actions: Sequence[Action]) -> "ObservationSequence":
        pairs = []
        s = tuple(start)
        for a in actions:
            t = transition(grid, s, a)
            if t is None:
                raise InvalidTraceError(f"action {Action(a).name} unavailable at {s}")
            pairs.append((s, a))
            s = t
        return cls(pairs)


def parse_map(text: str) -> GridMap:
    """Parse the text map format: ``#`` blocked, ``.`` free, ``S`` start, digits goals."""
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise MapError("empty map")
    width = len(lines[0])
    if any(len(ln) != width for ln in lines):
        raise MapError("map lines must all have the same length")
    blocked = []
    start = None
    goals = {}
    for y, line in enumerate(lines):
        for x, ch in enumerate(line):
            if ch == "#":
                blocked.append((x, y))
            elif ch == "S":
                if start is not None:
                    raise MapError("duplicate start 'S'")
                start = (x, y)
            elif ch.isdigit():
                d = int(ch)
                if d in goals:
                    raise MapError(f"duplicate goal digit {d}")
                goals[d] = (x, y)
            elif ch != ".":
                raise MapError(f"unexpected character {ch!r} at {(x, y)}")
    if start is None:
        raise MapError("map has no start 'S'")
    if sorted(goals) != list(range(len(goals))):
        raise MapError(f"goal digits must be 0..{len(goals) - 1} without gaps, got {sorted(goals)}")
    return GridMap(width, len(lines), frozenset(blocked), start, tuple(goals[i] for i in range(len(goals))))


def format_map(grid: GridMap) -> str:
    if len(grid.goals) > 10:
        raise MapError("the text format holds at most 10 goals")
    rows = [["." if grid.free[y, x] else "#" for x in range(grid.width)] for y in range(grid.height)]
    x, y = grid.start
    rows[y][x] = "S"
    for i, (x, y) in enumerate(grid.goals):
        rows[y][x] = str(i)
    return "\n".join("".join(r) for r in rows) + "\n"


def load_map(path) -> GridMap:
    with open(path, encoding="ascii") as fh:
        return parse_map(fh.read())
