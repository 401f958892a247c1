"""Scenario files, Q-table caching, single runs and batch sweeps."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .layouts import LayoutSpec, generate_layout, parse_token
from .mdp import GridMap, Mdp, ObservationSequence, load_map
from .metrics import DEFAULT_CHECKPOINTS, EpisodeMetrics, episode_metrics
from .observer import PosteriorSnapshot, PriorDistribution, posterior_stream
from .policies import Episode, PolicyConfig, run_episode
from .solver import CacheMismatchError, QTable, SolverConfig, load_qtable, save_qtable, value_iteration

log = logging.getLogger(__name__)

CACHE_ENV = "DECEPTIVE_MDP_CACHE"


class ScenarioError(RuntimeError):
    pass


def read_kv(path) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ScenarioError(f"{path}:{n}: expected 'key = value'")
            key = key.strip().lower().replace("-", "_")
            if key in out:
                raise ScenarioError(f"{path}:{n}: duplicate key {key!r}")
            out[key] = val.strip()
    return out


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def checkpoint_label(f: float) -> str:
    return f"cp_{round(f * 100):02d}"


@dataclass(frozen=True)
class Scenario:
    map_path: Optional[str] = None
    layout: Optional[LayoutSpec] = None
    true_goal: int = 0
    agent: PolicyConfig = PolicyConfig()
    gamma: float = 1.0
    prior: Optional[Tuple[float, ...]] = None
    seed: int = 0
    checkpoints: Tuple[float, ...] = DEFAULT_CHECKPOINTS
    tolerance: float = 1e-6
    name: Optional[str] = None

    def __post_init__(self):
        if (self.map_path is None) == (self.layout is None):
            raise ScenarioError("a scenario needs exactly one of map or layout")
        cps = tuple(self.checkpoints)
        if not cps or any(not 0 < f < 1 for f in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ScenarioError("checkpoints must be strictly increasing fractions in (0, 1)")
        if not 0 <= self.seed < 2 ** 64:
            raise ScenarioError("seed must be a 64-bit unsigned integer")

    @property
    def map_name(self) -> str:
        if self.name:
            return self.name
        if self.layout is not None:
            return self.layout.token
        return Path(self.map_path).stem

    def grid(self) -> GridMap:
        return generate_layout(self.layout) if self.layout is not None else load_map(self.map_path)

    def mdp(self) -> Mdp:
        grid = self.grid()
        if not 0 <= self.true_goal < len(grid.goals):
            raise ScenarioError(f"true goal {self.true_goal} is not on the map ({len(grid.goals)} goals)")
        return Mdp.from_map(grid, self.true_goal, self.gamma)

    def prior_for(self, n: int) -> PriorDistribution:
        if self.prior is None:
            return PriorDistribution.uniform(n)
        if len(self.prior) != n:
            raise ScenarioError(f"prior has {len(self.prior)} weights for {n} goals")
        return PriorDistribution.from_weights(self.prior)


_AGENT_KEYS = dict(alpha=float, delta=float, min_active=int, kappa=float, step_cap=int,
                   gain_reference=str, q_normalization=str)


def _agent_from(kind: str, kv: Dict[str, str]) -> PolicyConfig:
    kind, _, alpha = kind.partition(":")
    kw = {k: cast(kv[k]) for k, cast in _AGENT_KEYS.items() if k in kv}
    if alpha:
        kw["alpha"] = float(alpha)
    return PolicyConfig(kind=kind.strip(), **kw)


def _common(kv: Dict[str, str]) -> dict:
    out = {}
    if "gamma" in kv:
        out["gamma"] = float(kv["gamma"])
    if "prior" in kv and kv["prior"].lower() != "uniform":
        out["prior"] = _floats(kv["prior"])
    if "seed" in kv:
        out["seed"] = int(kv["seed"])
    if "checkpoints" in kv:
        out["checkpoints"] = _floats(kv["checkpoints"])
    if "tolerance" in kv:
        out["tolerance"] = float(kv["tolerance"])
    return out


_SCENARIO_KEYS = {"map", "layout", "true_goal", "agent", "name", "gamma", "prior", "seed",
                  "checkpoints", "tolerance", *_AGENT_KEYS}


def load_scenario(path) -> Scenario:
    path = Path(path)
    kv = read_kv(path)
    unknown = set(kv) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"{path}: unknown keys {sorted(unknown)}")
    kw = _common(kv)
    if "map" in kv:
        kw["map_path"] = str(path.parent / kv["map"])
    if "layout" in kv:
        kw["layout"] = parse_token(kv["layout"])
    kw["true_goal"] = int(kv.get("true_goal", 0))
    kw["agent"] = _agent_from(kv.get("agent", "honest"), kv)
    if "name" in kv:
        kw["name"] = kv["name"]
    return Scenario(**kw)


_SWEEP_KEYS = {"maps", "layouts", "agents", "true_goal", "gamma", "prior", "seed", "checkpoints",
               "tolerance", *_AGENT_KEYS}


def load_sweep(path) -> List[Scenario]:
    """Expand a sweep file into scenarios: maps x true goals x agents."""
    path = Path(path)
    kv = read_kv(path)
    unknown = set(kv) - _SWEEP_KEYS
    if unknown:
        raise ScenarioError(f"{path}: unknown keys {sorted(unknown)}")
    common = _common(kv)
    sources = []
    for m in (x.strip() for x in kv.get("maps", "").split(",")):
        if m:
            sources.append(dict(map_path=str(path.parent / m)))
    for t in (x.strip() for x in kv.get("layouts", "").split(",")):
        if t:
            sources.append(dict(layout=parse_token(t)))
    if not sources:
        raise ScenarioError(f"{path}: sweep lists no maps or layouts")
    agents = [_agent_from(a.strip(), kv) for a in kv.get("agents", "honest").split(",") if a.strip()]
    goals_spec = kv.get("true_goal", "0").strip().lower()
    scenarios = []
    for src in sources:
        if goals_spec == "all":
            probe = Scenario(**src)
            goals = range(len(probe.grid().goals))
        else:
            goals = [int(g) for g in goals_spec.split(",")]
        for g in goals:
            for agent in agents:
                scenarios.append(Scenario(true_goal=g, agent=agent, **src, **common))
    return scenarios


# -- Q-table cache ----------------------------------------------------------

def cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "deceptive_mdp"


def cache_path(directory: Path, grid: GridMap, reward_index: int, gamma: float) -> Path:
    return Path(directory) / f"{grid.digest[:20]}_r{reward_index}_g{gamma!r}.qtable"


def ensure_qtables(mdp: Mdp, cfg: SolverConfig = SolverConfig(), directory=None,
                   use_cache: bool = True) -> List[QTable]:
    """Load each reward's Q-table from the cache, training and storing any that are missing."""
    tables = []
    directory = cache_dir() if directory is None else Path(directory)
    for i in range(len(mdp.rewards)):
        path = cache_path(directory, mdp.map, i, mdp.gamma)
        q = None
        if use_cache and path.exists():
            try:
                q = load_qtable(path, mdp, expected_index=i)
                if q.tolerance > cfg.tolerance:
                    q = None
            except (CacheMismatchError, ValueError) as exc:
                log.warning("ignoring cache file %s: %s", path, exc)
                q = None
        if q is None:
            q = value_iteration(mdp, i, cfg)
            if use_cache:
                save_qtable(path, q, mdp.map)
        tables.append(q)
    return tables


# -- running ----------------------------------------------------------------

@dataclass
class ScenarioResult:
    scenario: Scenario
    mdp: Mdp
    episode: Episode
    snapshots: List[PosteriorSnapshot]
    metrics: EpisodeMetrics
    qtables: List[QTable] = field(repr=False, default_factory=list)


def run_scenario(sc: Scenario, use_cache: bool = True, cache_directory=None) -> ScenarioResult:
    try:
        mdp = sc.mdp()
        qtables = ensure_qtables(mdp, SolverConfig(sc.tolerance), cache_directory, use_cache)
        prior = sc.prior_for(len(qtables))
        episode = run_episode(mdp, qtables, prior, sc.agent)
        if sc.agent.kind == "honest":
            optimal = episode.trace.cost()
        else:
            optimal = run_episode(mdp, qtables, prior, PolicyConfig("honest")).trace.cost()
        snapshots = posterior_stream(qtables, prior, episode.trace)
        metrics = episode_metrics(episode.trace, snapshots, mdp.true_index, optimal,
                                  episode.truncated, sc.checkpoints)
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(f"scenario {sc.map_name}/{sc.agent.label}/goal {sc.true_goal}: {exc}") from exc
    return ScenarioResult(sc, mdp, episode, snapshots, metrics, qtables)


def csv_header(checkpoints: Sequence[float] = DEFAULT_CHECKPOINTS) -> List[str]:
    return ["run_id", "map", "agent", "alpha", "delta", "gamma", "seed", "truncated", "path_cost",
            "optimal_cost", "cost_ratio", "simulation", "ldp_index", "non_deceptive_fraction",
            *(checkpoint_label(f) for f in checkpoints)]


def _num(x: float) -> str:
    return repr(float(x))


def result_row(run_id: str, sc: Scenario, m: EpisodeMetrics) -> List[str]:
    cfg = sc.agent
    return [
        run_id, sc.map_name, cfg.label,
        _num(cfg.alpha) if cfg.kind == "irrationality" else "",
        _num(cfg.delta) if cfg.kind == "ambiguity" else "",
        _num(sc.gamma), str(sc.seed), str(int(m.truncated)),
        _num(m.path_cost), _num(m.optimal_cost), _num(m.cost_ratio), _num(m.simulation_value),
        str(m.ldp_index), _num(m.non_deceptive_fraction),
        *(_num(p) for _, p in m.checkpoint_posteriors),
    ]


def error_row(run_id: str, sc: Scenario, n_cols: int) -> List[str]:
    row = [run_id, sc.map_name, sc.agent.label, "", "", _num(sc.gamma), str(sc.seed), "error"]
    return row + [""] * (n_cols - len(row))


def write_csv(rows: Sequence[Sequence[str]], header: Sequence[str], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def _batch_worker(args):
    idx, sc, cache_directory = args
    try:
        res = run_scenario(sc, cache_directory=cache_directory)
        return idx, res.metrics, None
    except Exception as exc:  # recorded as an error row, batch continues
        return idx, None, str(exc)


def _mean_sd(xs: Sequence[float]) -> str:
    n = len(xs)
    mean = sum(xs) / n
    sd = math.sqrt(sum((x - mean) ** 2 for x in xs) / (n - 1)) if n > 1 else 0.0
    return f"{mean:.6f}/{sd:.6f}"


def summary_rows(scenarios: Sequence[Scenario], metrics: Sequence[Optional[EpisodeMetrics]],
                 n_cols: int) -> List[List[str]]:
    """One row per agent label; numeric cells read ``mean/sd`` over successful runs."""
    groups: Dict[str, List[EpisodeMetrics]] = {}
    for sc, m in zip(scenarios, metrics):
        groups.setdefault(sc.agent.label, [])
        if m is not None:
            groups[sc.agent.label].append(m)
    rows = []
    for label, ms in groups.items():
        if not ms:
            rows.append(["summary", "*", label] + [""] * (n_cols - 3))
            continue
        cols = [
            [m.path_cost for m in ms], [m.optimal_cost for m in ms], [m.cost_ratio for m in ms],
            [m.simulation_value for m in ms], [float(m.ldp_index) for m in ms],
            [m.non_deceptive_fraction for m in ms],
        ]
        n_cp = len(ms[0].checkpoint_posteriors)
        cols += [[m.checkpoint_posteriors[k][1] for m in ms] for k in range(n_cp)]
        rows.append(["summary", "*", label, "", "", "", "", str(sum(m.truncated for m in ms)),
                     *(_mean_sd(c) for c in cols)])
    return rows


def run_batch(scenarios: Sequence[Scenario], workers: int = 1, cache_directory=None):
    """Run every scenario; returns ``(header, rows, metrics)`` with summary rows appended.

    Rows keep input order whatever the worker count.
    """
    if not scenarios:
        raise ScenarioError("empty batch")
    cps = scenarios[0].checkpoints
    if any(sc.checkpoints != cps for sc in scenarios):
        raise ScenarioError("all scenarios in a batch must share checkpoints")
    header = csv_header(cps)
    jobs = [(i, sc, cache_directory) for i, sc in enumerate(scenarios)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_batch_worker, jobs))
    else:
        results = [_batch_worker(j) for j in jobs]
    rows, metrics = [], []
    for (i, m, err), sc in zip(results, scenarios):
        run_id = f"r{i + 1:04d}"
        if err is not None:
            log.error("%s failed: %s", run_id, err)
            rows.append(error_row(run_id, sc, len(header)))
        else:
            rows.append(result_row(run_id, sc, m))
        metrics.append(m)
    rows += summary_rows(scenarios, metrics, len(header))
    return header, rows, metrics


# -- trace files --------------------------------------------------------------

def write_trace(fh, trace: ObservationSequence, snapshots: Sequence[PosteriorSnapshot], true_index: int):
    n = len(snapshots[0].probabilities) if snapshots else 0
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["step", "x", "y", "action", "true_goal", *(f"p_{i}" for i in range(n))])
    for k, ((x, y), a) in enumerate(trace):
        probs = snapshots[k].probabilities if snapshots else ()
        w.writerow([k + 1, x, y, a.name, true_index, *(_num(p) for p in probs)])


def read_trace(path):
    """Returns ``(trace, snapshots, true_index)`` from a trace CSV."""
    from .mdp import Action

    pairs, snaps, true_index = [], [], None
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        pcols = [c for c in (reader.fieldnames or []) if c.startswith("p_")]
        for row in reader:
            pairs.append(((int(row["x"]), int(row["y"])), Action[row["action"]]))
            true_index = int(row["true_goal"]) if row.get("true_goal", "") != "" else true_index
            if pcols:
                snaps.append(PosteriorSnapshot(int(row["step"]), tuple(float(row[c]) for c in pcols), ()))
    return ObservationSequence(pairs), snaps, true_index


def format_rows(header, rows) -> str:
    buf = io.StringIO()
    write_csv(rows, header, buf)
    return buf.getvalue()
