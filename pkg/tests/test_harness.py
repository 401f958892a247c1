import csv
import io

import pytest

from deceptive_mdp import harness
from deceptive_mdp.harness import (
    Scenario,
    ScenarioError,
    cache_dir,
    cache_path,
    csv_header,
    ensure_qtables,
    load_scenario,
    load_sweep,
    read_kv,
    run_batch,
    run_scenario,
)
from deceptive_mdp.layouts import LayoutSpec, symmetric_two_goal_map
from deceptive_mdp.mdp import Mdp, format_map
from deceptive_mdp.policies import PolicyConfig

HEADER = ("run_id,map,agent,alpha,delta,gamma,seed,truncated,path_cost,optimal_cost,cost_ratio,"
          "simulation,ldp_index,non_deceptive_fraction,cp_10,cp_20,cp_30,cp_40,cp_50,cp_60,cp_70,cp_80,cp_90")

AGENTS = "honest, ambiguity, irrationality:0.3, irrationality:0.5"


def test_header_exact():
    assert ",".join(csv_header()) == HEADER


def test_read_kv(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("# scenario\nmap = a.txt\n\nAgent = ambiguity  # trailing\n")
    assert read_kv(p) == {"map": "a.txt", "agent": "ambiguity"}
    p.write_text("map a.txt\n")
    with pytest.raises(ScenarioError):
        read_kv(p)
    p.write_text("map = a\nmap = b\n")
    with pytest.raises(ScenarioError):
        read_kv(p)


def test_load_scenario(map_files):
    p = map_files / "sc.txt"
    p.write_text("map = a.txt\ntrue_goal = 2\nagent = irrationality\nalpha = 0.5\n"
                 "prior = 0.5, 0.25, 0.25\nseed = 7\ngamma = 0.99\n")
    sc = load_scenario(p)
    assert sc.map_path == str(map_files / "a.txt")
    assert sc.true_goal == 2 and sc.seed == 7 and sc.gamma == 0.99
    assert sc.agent == PolicyConfig("irrationality", alpha=0.5)
    assert sc.prior == (0.5, 0.25, 0.25)
    p.write_text("map = a.txt\nbogus = 1\n")
    with pytest.raises(ScenarioError):
        load_scenario(p)


def test_scenario_validation(map_files):
    path = str(map_files / "a.txt")
    with pytest.raises(ScenarioError):
        Scenario()
    with pytest.raises(ScenarioError):
        Scenario(map_path=path, checkpoints=(0.5, 0.2))
    with pytest.raises(ScenarioError):
        Scenario(map_path=path, checkpoints=(0.0, 0.5))
    with pytest.raises(ScenarioError):
        Scenario(map_path=path, true_goal=5).mdp()
    with pytest.raises(ScenarioError):
        Scenario(map_path=path, prior=(0.5, 0.5)).prior_for(3)


def test_honest_cost_ratio_one(map_files):
    for goal in range(3):
        m = run_scenario(Scenario(map_path=str(map_files / "a.txt"), true_goal=goal)).metrics
        assert m.cost_ratio == pytest.approx(1.0, abs=1e-9)
        assert m.simulation_value <= 1e-9


def test_run_scenario_deterministic(map_files):
    sc = Scenario(map_path=str(map_files / "a.txt"), true_goal=1, agent=PolicyConfig("ambiguity"))
    rows = [harness.result_row("r1", sc, run_scenario(sc).metrics) for _ in range(2)]
    assert rows[0] == rows[1]


def test_symmetric_ambiguity_first_decile(tmp_path):
    (tmp_path / "sym.txt").write_text(format_map(symmetric_two_goal_map(9)))
    for goal in (0, 1):
        sc = Scenario(map_path=str(tmp_path / "sym.txt"), true_goal=goal, agent=PolicyConfig("ambiguity"))
        cp10 = run_scenario(sc).metrics.checkpoint_posteriors[0][1]
        assert 0.45 <= cp10 <= 0.55


def test_layout_scenario():
    sc = Scenario(layout=LayoutSpec("rooms-corridors", 20, 20, seed=3))
    assert sc.map_name == "rooms-corridors:20x20:3:0.35@3"
    assert run_scenario(sc).metrics.cost_ratio == pytest.approx(1.0)


def test_errors_name_the_scenario(map_files):
    sc = Scenario(map_path=str(map_files / "missing.txt"))
    with pytest.raises(ScenarioError, match="missing"):
        run_scenario(sc)


def test_cache_dir_env(monkeypatch, tmp_path):
    monkeypatch.setenv("DECEPTIVE_MDP_CACHE", str(tmp_path / "c"))
    assert cache_dir() == tmp_path / "c"


def test_cache_reused_and_corruption_rejected(tmp_path, map_files, caplog):
    from deceptive_mdp.mdp import load_map

    mdp = Mdp.from_map(load_map(map_files / "a.txt"))
    first = ensure_qtables(mdp, directory=tmp_path)
    path = cache_path(tmp_path, mdp.map, 0, 1.0)
    blob = path.read_bytes()
    again = ensure_qtables(mdp, directory=tmp_path)
    assert all((a.values == b.values).all() for a, b in zip(first, again))
    # a file whose hash no longer matches is retrained, never used
    path.write_text(path.read_text().replace(mdp.map.digest, "0" * 64))
    ensure_qtables(mdp, directory=tmp_path)
    assert "ignoring cache file" in caplog.text
    assert path.read_bytes() == blob


def _sweep(map_files, extra=""):
    p = map_files / "sweep.txt"
    p.write_text(f"maps = a.txt, b.txt\nagents = {AGENTS}\ntrue_goal = 1\n{extra}")
    return load_sweep(p)


def test_batch_cardinality_and_summary(map_files):
    header, rows, metrics = run_batch(_sweep(map_files))
    assert ",".join(header) == HEADER
    data = [r for r in rows if r[0] != "summary"]
    summary = [r for r in rows if r[0] == "summary"]
    assert len(data) == 8 and len(summary) == 4
    assert [r[2] for r in summary] == ["honest", "ambiguity", "ir_0.3", "ir_0.5"]
    honest_sim = float(summary[0][header.index("simulation")].split("/")[0])
    assert honest_sim <= 0
    assert all(len(r) == len(header) for r in rows)


def test_sweep_all_goals(map_files):
    p = map_files / "sweep_all.txt"
    p.write_text(f"maps = a.txt, b.txt\nlayouts = empty:9x9:2@1\nagents = {AGENTS}\ntrue_goal = all\n")
    scenarios = load_sweep(p)
    assert len(scenarios) == (3 + 2 + 2) * 4
    assert [s.true_goal for s in scenarios[:8]] == [0] * 4 + [1] * 4


def test_batch_error_rows(map_files):
    scenarios = _sweep(map_files)
    scenarios.insert(1, Scenario(map_path=str(map_files / "missing.txt")))
    header, rows, metrics = run_batch(scenarios)
    assert rows[1][7] == "error" and metrics[1] is None
    assert len([r for r in rows if r[0] != "summary"]) == 9


def test_batch_independent_of_workers(map_files):
    scenarios = _sweep(map_files)
    one = harness.format_rows(*run_batch(scenarios, workers=1)[:2])
    two = harness.format_rows(*run_batch(scenarios, workers=2)[:2])
    assert one == two


def test_trace_roundtrip(map_files):
    res = run_scenario(Scenario(map_path=str(map_files / "b.txt"), true_goal=1, agent=PolicyConfig("ambiguity")))
    buf = io.StringIO()
    harness.write_trace(buf, res.episode.trace, res.snapshots, 1)
    p = map_files / "trace.csv"
    p.write_text(buf.getvalue())
    trace, snaps, true_index = harness.read_trace(p)
    assert trace == res.episode.trace and true_index == 1
    assert [s.probabilities for s in snaps] == [s.probabilities for s in res.snapshots]
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == ["step", "x", "y", "action", "true_goal", "p_0", "p_1"]
