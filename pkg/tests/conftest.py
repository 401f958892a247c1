import heapq
import math

import pytest

from deceptive_mdp.layouts import FAMILIES, LayoutSpec, generate_layout
from deceptive_mdp.mdp import GridMap, Mdp
from deceptive_mdp.observer import PriorDistribution
from deceptive_mdp.solver import train_all

SQRT2 = math.sqrt(2.0)
G1, G2 = (2, 2), (2, 0)


def octile_dijkstra(grid: GridMap, source):
    """Shortest 8-connected path costs from ``source``, written without the package's helpers."""
    blocked = set(grid.blocked)

    def free(x, y):
        return 0 <= x < grid.width and 0 <= y < grid.height and (x, y) not in blocked

    dist = {source: 0.0}
    heap = [(0.0, source)]
    while heap:
        d, (x, y) = heapq.heappop(heap)
        if d > dist[(x, y)]:
            continue
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == dy == 0 or not free(x + dx, y + dy):
                    continue
                if dx and dy and not (free(x + dx, y) and free(x, y + dy)):
                    continue
                nd = d + (SQRT2 if dx and dy else 1.0)
                t = (x + dx, y + dy)
                if nd < dist.get(t, math.inf):
                    dist[t] = nd
                    heapq.heappush(heap, (nd, t))
    return dist


@pytest.fixture(scope="session")
def oracle_map():
    """Empty 3x3, start (0,0), goal 0 at (2,2), goal 1 at (2,0)."""
    return GridMap(3, 3, frozenset(), (0, 0), (G1, G2))


@pytest.fixture(scope="session")
def oracle_mdp(oracle_map):
    return Mdp.from_map(oracle_map, 0)


@pytest.fixture(scope="session")
def oracle_q(oracle_mdp):
    return train_all(oracle_mdp)


@pytest.fixture(scope="session")
def small_layouts():
    """Two 15x15 layouts per family."""
    return [generate_layout(LayoutSpec(f, 15, 15, seed=s)) for f in FAMILIES for s in (1, 2)]


@pytest.fixture(scope="session")
def trained_layouts(small_layouts):
    out = []
    for k, grid in enumerate(small_layouts):
        mdp = Mdp.from_map(grid, k % len(grid.goals))
        out.append((mdp, train_all(mdp), PriorDistribution.uniform(len(grid.goals))))
    return out


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path_factory, monkeypatch):
    monkeypatch.setenv("DECEPTIVE_MDP_CACHE", str(tmp_path_factory.getbasetemp() / "qcache"))


MAP_A = """\
S.........
..........
...###....
...###....
..........
0...1....2
"""

MAP_B = """\
0........1
.....#....
.....#....
.....#....
....S.....
"""


@pytest.fixture
def map_files(tmp_path):
    (tmp_path / "a.txt").write_text(MAP_A)
    (tmp_path / "b.txt").write_text(MAP_B)
    return tmp_path


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
