"""Seeded procedural layouts: empty, large obstacles, random dense, archipelago, rooms."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .mdp import SQRT2, GridMap, mask_successors

FAMILIES = ("empty", "large-obstacles", "random-dense", "archipelago", "rooms-corridors")


class LayoutError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayoutSpec:
    family: str = "empty"
    width: int = 25
    height: int = 25
    obstacle_density: float = 0.35
    n_goals: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown layout family {self.family!r}; choose from {FAMILIES}")
        if self.width < 3 or self.height < 3:
            raise ValueError("layouts need at least 3x3 cells")
        if not 0.0 <= self.obstacle_density < 1.0:
            raise ValueError("obstacle_density must lie in [0, 1)")
        if not 2 <= self.n_goals <= 10:
            raise ValueError("n_goals must lie in [2, 10]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def token(self) -> str:
        """Compact form ``family:WxH:goals:density@seed`` (see :func:`parse_token`)."""
        return f"{self.family}:{self.width}x{self.height}:{self.n_goals}:{self.obstacle_density:g}@{self.seed}"


def parse_token(token: str) -> LayoutSpec:
    body, _, seed = token.strip().partition("@")
    parts = body.split(":")
    if len(parts) < 2:
        raise ValueError(f"bad layout token {token!r}; expected family:WxH[:goals[:density]][@seed]")
    w, _, h = parts[1].partition("x")
    kw = dict(family=parts[0], width=int(w), height=int(h))
    if len(parts) > 2:
        kw["n_goals"] = int(parts[2])
    if len(parts) > 3:
        kw["obstacle_density"] = float(parts[3])
    if seed:
        kw["seed"] = int(seed)
    return LayoutSpec(**kw)


def _rect(blocked, rng, max_w, max_h, min_side=2):
    h, w = blocked.shape
    rw = int(rng.integers(min_side, max(min_side + 1, max_w)))
    rh = int(rng.integers(min_side, max(min_side + 1, max_h)))
    x0 = int(rng.integers(0, max(1, w - rw)))
    y0 = int(rng.integers(0, max(1, h - rh)))
    blocked[y0:y0 + rh, x0:x0 + rw] = True


def raw_obstacles(spec: LayoutSpec, rng: np.random.Generator) -> np.ndarray:
    """Blocked-cell mask before connectivity repair."""
    h, w = spec.height, spec.width
    blocked = np.zeros((h, w), dtype=np.bool_)
    if spec.family == "empty":
        pass
    elif spec.family == "large-obstacles":
        for _ in range(int(rng.integers(2, 5))):
            _rect(blocked, rng, max(3, w // 3), max(3, h // 3), min_side=max(2, min(w, h) // 8))
    elif spec.family == "random-dense":
        blocked = rng.random((h, w)) < spec.obstacle_density
    elif spec.family == "archipelago":
        ys, xs = np.mgrid[0:h, 0:w]
        for _ in range(int(rng.integers(3, 6))):
            cx, cy = rng.uniform(0, w), rng.uniform(0, h)
            rx = rng.uniform(0.06, 0.14) * w
            ry = rng.uniform(0.06, 0.14) * h
            noise = rng.uniform(0.8, 1.2, size=(h, w))
            blocked |= ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 < noise
    elif spec.family == "rooms-corridors":
        room = max(4, min(w, h) // 5)
        for x in range(room, w - 1, room):
            blocked[:, x] = True
        for y in range(room, h - 1, room):
            blocked[y, :] = True
        # one or two doorways per wall segment between neighbouring rooms
        xs_walls = list(range(room, w - 1, room))
        ys_walls = list(range(room, h - 1, room))
        xb = [0] + [x + 1 for x in xs_walls] + [w + 1]
        yb = [0] + [y + 1 for y in ys_walls] + [h + 1]
        for x in xs_walls:
            for k in range(len(yb) - 1):
                lo, hi = yb[k], min(yb[k + 1] - 1, h)
                if hi - lo >= 1:
                    for _ in range(int(rng.integers(1, 3))):
                        blocked[int(rng.integers(lo, hi)), x] = False
        for y in ys_walls:
            for k in range(len(xb) - 1):
                lo, hi = xb[k], min(xb[k + 1] - 1, w)
                if hi - lo >= 1:
                    for _ in range(int(rng.integers(1, 3))):
                        blocked[y, int(rng.integers(lo, hi))] = False
    return blocked


def largest_component(free: np.ndarray) -> np.ndarray:
    """Mask of the largest connected set of free cells (ties: lowest row-major cell)."""
    h, w = free.shape
    nxt = mask_successors(free)
    label = np.full(h * w, -1, dtype=np.int64)
    best, best_size = -1, 0
    flat = free.ravel()
    comp = 0
    for c in range(h * w):
        if not flat[c] or label[c] >= 0:
            continue
        label[c] = comp
        size = 1
        queue = deque([c])
        while queue:
            u = queue.popleft()
            for v in nxt[u]:
                if v >= 0 and label[v] < 0:
                    label[v] = comp
                    size += 1
                    queue.append(v)
        if size > best_size:
            best, best_size = comp, size
        comp += 1
    return (label == best).reshape(h, w)


def octile(a, b) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def _place(free: np.ndarray, n_goals: int, rng: np.random.Generator):
    h, w = free.shape
    cells = [(int(x), int(y)) for y, x in zip(*np.nonzero(free))]
    if len(cells) < n_goals + 1:
        return None
    min_sep = max(2.0, 0.25 * min(w, h))
    goals = []
    order = rng.permutation(len(cells))
    for k in order:
        c = cells[k]
        if all(octile(c, g) >= min_sep for g in goals):
            goals.append(c)
            if len(goals) == n_goals:
                break
    if len(goals) < n_goals:
        return None
    cx = sum(g[0] for g in goals) / n_goals
    cy = sum(g[1] for g in goals) / n_goals
    candidates = [c for c in cells if c not in goals]
    dist = np.array([octile(c, (cx, cy)) for c in candidates])
    # pick among the farthest few cells so the start still varies with the seed
    top = np.argsort(-dist, kind="stable")[: max(1, len(candidates) // 50)]
    start = candidates[int(top[int(rng.integers(0, len(top)))])]
    return start, goals


def generate_layout(spec: LayoutSpec, max_retries: int = 50) -> GridMap:
    rng = np.random.default_rng(spec.seed)
    for _ in range(max_retries):
        blocked = raw_obstacles(spec, rng)
        free = ~blocked
        if not free.any():
            continue
        free = largest_component(free)
        if free.sum() < 0.25 * free.size:
            continue
        placed = _place(free, spec.n_goals, rng)
        if placed is None:
            continue
        start, goals = placed
        cells = frozenset((int(x), int(y)) for y, x in zip(*np.nonzero(~free)))
        return GridMap(spec.width, spec.height, cells, start, tuple(goals))
    raise LayoutError(f"could not generate a {spec.family} layout for seed {spec.seed} "
                      f"after {max_retries} attempts")


def symmetric_two_goal_map(size: int = 7) -> GridMap:
    """Empty odd-sized square with the start bottom-centre and mirrored goals in the top corners."""
    if size < 3 or size % 2 == 0:
        raise ValueError("size must be odd and >= 3")
    mid = size // 2
    return GridMap(size, size, frozenset(), (mid, size - 1), ((0, 0), (size - 1, 0)))


def load_layout_spec(path) -> LayoutSpec:
    """Read a ``key = value`` layout spec file."""
    from .harness import read_kv

    kv = read_kv(path)
    kw = {}
    casts = dict(family=str, width=int, height=int, obstacle_density=float, n_goals=int, seed=int)
    for key, val in kv.items():
        if key not in casts:
            raise ValueError(f"{path}: unknown layout key {key!r}")
        kw[key] = casts[key](val)
    return LayoutSpec(**kw)
