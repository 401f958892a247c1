"""Exact Q-tables by value iteration, greedy policies, and the Q-table cache file."""

from __future__ import annotations

import functools
import os
import tempfile
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import _accel
from .mdp import ACTIONS, SQRT2, Action, Cell, GridMap, Mdp, successor_table


class SolverError(RuntimeError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, reward_index: int, residual: float, sweeps: int):
        super().__init__(f"reward {reward_index}: no convergence after {sweeps} sweeps "
                         f"(residual {residual:.3e})")
        self.reward_index = reward_index
        self.residual = residual


class UnreachableGoalError(SolverError):
    def __init__(self, reward_index: int, goal: Cell):
        super().__init__(f"reward {reward_index}: goal {goal} is unreachable from the start")
        self.reward_index = reward_index


class CacheMismatchError(ValueError):
    """A cached Q-table does not belong to the current map or discount."""


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-6
    max_sweeps: int = 100_000

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")


@dataclass(frozen=True, eq=False)
class QTable:
    """Action values for one reward function, indexed ``values[y, x, action]``.

    Unavailable actions hold ``-inf``. Every available action at the absorbing
    goal cell holds 0.
    """

    reward_index: int
    values: np.ndarray = field(repr=False)
    gamma: float
    converged_residual: float
    goal: Cell
    tolerance: float = 1e-6

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __call__(self, s: Cell, a: Action) -> float:
        return float(self.values[s[1], s[0], a])

    def row(self, s: Cell) -> np.ndarray:
        return self.values[s[1], s[0]]

    def max(self, s: Cell) -> float:
        return float(self.values[s[1], s[0]].max())


@functools.lru_cache(maxsize=64)
def _tables(grid: GridMap):
    nxt = successor_table(grid)
    nxt.flags.writeable = False
    return nxt


def _step_rewards(grid: GridMap, nxt: np.ndarray, rf) -> np.ndarray:
    goal_idx = rf.goal[1] * grid.width + rf.goal[0]
    rew = np.broadcast_to(np.asarray(rf.step_costs, dtype=np.float64), nxt.shape).copy()
    rew[nxt == goal_idx] += rf.goal_reward
    return rew


def _reachable(nxt: np.ndarray, source: int) -> np.ndarray:
    # moves are symmetric, so cells reachable from the goal are exactly those that reach it
    seen = np.zeros(nxt.shape[0], dtype=np.bool_)
    seen[source] = True
    queue = deque([source])
    while queue:
        c = queue.popleft()
        for j in nxt[c]:
            if j >= 0 and not seen[j]:
                seen[j] = True
                queue.append(j)
    return seen


def lower_bound(grid: GridMap) -> float:
    return -(grid.width + grid.height) * SQRT2


def bellman_problem(mdp: Mdp, reward_index: int):
    """Arrays for the sweep kernels: ``(values0, nxt, rew, frozen)``.

    ``values0`` starts at the analytic lower bound on every live cell, 0 at the
    goal and ``-inf`` on cells cut off from the goal.
    """
    grid = mdp.map
    rf = mdp.rewards[reward_index]
    nxt = _tables(grid)
    rew = _step_rewards(grid, nxt, rf)
    goal_idx = rf.goal[1] * grid.width + rf.goal[0]
    reach = _reachable(nxt, goal_idx)
    frozen = ~reach
    frozen[goal_idx] = True
    values = np.where(reach, lower_bound(grid), -np.inf)
    values[goal_idx] = 0.0
    return values, nxt, rew, frozen


def _q_from_values(grid: GridMap, values, nxt, rew, gamma, goal_idx):
    valid = nxt >= 0
    q = np.where(valid, rew + gamma * values[np.where(valid, nxt, 0)], -np.inf)
    q[goal_idx] = np.where(valid[goal_idx], 0.0, -np.inf)
    return q


def bellman_residual(q: QTable, grid: GridMap, rf) -> float:
    """Largest |Q(s,a) - [r + gamma * max Q(s', .)]| over finite non-goal pairs."""
    nxt = _tables(grid)
    rew = _step_rewards(grid, nxt, rf)
    flat = q.values.reshape(-1, len(ACTIONS))
    vmax = flat.max(axis=1)
    goal_idx = rf.goal[1] * grid.width + rf.goal[0]
    vmax[goal_idx] = 0.0
    valid = nxt >= 0
    target = np.where(valid, rew + q.gamma * vmax[np.where(valid, nxt, 0)], -np.inf)
    live = valid & np.isfinite(flat)
    live[goal_idx] = False
    if not live.any():
        return 0.0
    return float(np.max(np.abs(flat[live] - target[live])))


def value_iteration(mdp: Mdp, reward_index: int, cfg: SolverConfig = SolverConfig()) -> QTable:
    grid = mdp.map
    rf = mdp.rewards[reward_index]
    values, nxt, rew, frozen = bellman_problem(mdp, reward_index)
    start_idx = grid.start[1] * grid.width + grid.start[0]
    if not np.isfinite(values[start_idx]):
        raise UnreachableGoalError(reward_index, rf.goal)
    values, sweeps, residual = _accel.solve(values, nxt, rew, mdp.gamma, frozen, cfg.tolerance, cfg.max_sweeps)
    if not residual < cfg.tolerance:
        raise NonConvergenceError(reward_index, residual, sweeps)
    goal_idx = rf.goal[1] * grid.width + rf.goal[0]
    q = _q_from_values(grid, values, nxt, rew, mdp.gamma, goal_idx)
    table = QTable(reward_index, q.reshape(grid.height, grid.width, len(ACTIONS)), mdp.gamma,
                   0.0, rf.goal, cfg.tolerance)
    object.__setattr__(table, "converged_residual", bellman_residual(table, grid, rf))
    return table


def greedy_action(q: QTable, s: Cell) -> Action:
    # argmax returns the first maximum, i.e. the canonically earliest action
    return ACTIONS[int(np.argmax(q.row(s)))]


def train_all(mdp: Mdp, cfg: SolverConfig = SolverConfig()) -> List[QTable]:
    return [value_iteration(mdp, i, cfg) for i in range(len(mdp.rewards))]


# -- cache file -------------------------------------------------------------

def save_qtable(path, q: QTable, grid: GridMap) -> None:
    lines = [
        f"map_hash={grid.digest}",
        f"gamma={q.gamma!r}",
        f"reward_index={q.reward_index}",
        f"tolerance={q.tolerance!r}",
        "x,y,action,q",
    ]
    for x, y in grid.free_cells():
        for a in ACTIONS:
            v = q.values[y, x, a]
            if np.isfinite(v):
                lines.append(f"{x},{y},{a.name},{float(v)!r}")
    text = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".qtable-", suffix=".tmp")
    with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_qtable(path, mdp: Mdp, expected_index: Optional[int] = None) -> QTable:
    grid = mdp.map
    header = {}
    with open(path, encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line == "x,y,action,q":
                break
            key, _, val = line.partition("=")
            header[key] = val
        rows = [ln.strip() for ln in fh if ln.strip()]
    for key in ("map_hash", "gamma", "reward_index", "tolerance"):
        if key not in header:
            raise CacheMismatchError(f"{path}: missing header {key}")
    if header["map_hash"] != grid.digest:
        raise CacheMismatchError(f"{path}: map_hash does not match the current map")
    gamma = float(header["gamma"])
    if gamma != mdp.gamma:
        raise CacheMismatchError(f"{path}: cached gamma {gamma} differs from {mdp.gamma}")
    index = int(header["reward_index"])
    if expected_index is not None and index != expected_index:
        raise CacheMismatchError(f"{path}: holds reward {index}, expected {expected_index}")
    values = np.full((grid.height, grid.width, len(ACTIONS)), -np.inf)
    for row in rows:
        x, y, name, v = row.split(",")
        values[int(y), int(x), Action[name]] = float(v)
    rf = mdp.rewards[index]
    table = QTable(index, values, gamma, 0.0, rf.goal, float(header["tolerance"]))
    object.__setattr__(table, "converged_residual", bellman_residual(table, grid, rf))
    return table
