import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seal_hil.baselines import build_agent
from seal_hil.env import EnvKind, KEYDOOR
from seal_hil.evaluate import (
    EvalReport,
    ExpertAgent,
    RandomAgent,
    evaluate,
    initial_states,
    mean_std,
    subgoal_names,
    sweep_k,
    trace_accuracy,
    trace_episode,
    welford,
    write_jsonl,
)


@pytest.mark.parametrize("kind,order", [(KEYDOOR, (0, 1)), (EnvKind(3), (2, 0, 1)), (EnvKind(5), (0, 1, 2, 3, 4))])
def test_expert_ceiling(kind, order):
    rep = evaluate(ExpertAgent(kind, order), kind, 50, 3, order)
    assert rep["success_rate"] == 1.0
    assert all(r == 1.0 for r in rep["subgoal_rates"].values())


def test_random_policy_floor():
    for kind in (KEYDOOR, EnvKind(3)):
        assert evaluate(RandomAgent(kind, 0), kind, 100, 1)["success_rate"] < 0.05


def test_subgoal_names():
    assert subgoal_names(KEYDOOR, (0, 1)) == ["pick up the key", "unlock the door"]
    assert subgoal_names(EnvKind(3), (1, 0, 2)) == ["pick up object 2", "pick up object 1", "pick up object 3"]


def test_initial_states_are_seeded():
    a = initial_states(EnvKind(4), 5, [3, 1])
    b = initial_states(EnvKind(4), 5, [3, 1])
    assert [s.raw() for s in a] == [s.raw() for s in b]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_mean_std_agrees_with_welford(values):
    m1, s1 = mean_std(values)
    m2, s2 = welford(values)
    assert m1 == pytest.approx(m2, abs=1e-12)
    assert s1 == pytest.approx(s2, abs=1e-9)


def test_sample_std():
    assert mean_std([0.0, 1.0]) == (0.5, pytest.approx(math.sqrt(0.5)))
    assert mean_std([0.7]) == (0.7, 0.0)
    assert all(math.isnan(x) for x in mean_std([]))


def test_report_check():
    rep = EvalReport("seal", "keydoor", 30, "AB")
    rep.add({"seed": 0, "success_rate": 0.5, "subgoal_rates": {"pick up the key": 0.7, "unlock the door": 0.5}})
    rep.add({"seed": 1, "success_rate": 0.6, "subgoal_rates": {"pick up the key": 0.8, "unlock the door": 0.6}})
    rep.check()
    assert rep.mean == pytest.approx(0.55)
    d = rep.to_dict()
    assert d["seeds"] == [0, 1] and "subgoal_mean_std" in d
    rep.add({"seed": 2, "success_rate": 0.9, "subgoal_rates": {"pick up the key": 0.8, "unlock the door": 0.9}})
    with pytest.raises(ValueError):
        rep.check()


def test_report_from_real_rollouts_passes_check():
    rep = EvalReport("random", "grid3", 0, "ABC")
    for seed in range(3):
        rep.add(evaluate(RandomAgent(EnvKind(3), seed), EnvKind(3), 40, seed))
    rep.check()


def test_sweep_k_grid():
    calls = []

    def run(method, k, n, seed):
        calls.append((method, k, n, seed))
        return k / 12

    rows = sweep_k(run, ["lisa", "sdil"], [2, 4], [100, 200], [0, 1, 2])
    assert len(rows) == 8 and len(calls) == 24
    assert {(r["method"], r["k"], r["n_demos"]) for r in rows} == {
        (m, k, n) for m in ("lisa", "sdil") for k in (2, 4) for n in (100, 200)}
    with pytest.raises(ValueError):
        sweep_k(run, ["lisa"], [1], [100], [0])
    with pytest.raises(ValueError):
        sweep_k(run, ["lisa"], [13], [100], [0])


@pytest.mark.parametrize("method", ["bc", "sdil", "tc", "lisa", "seal_l", "seal"])
def test_trace_rows(tmp_path, method):
    agent = build_agent(method, KEYDOOR, np.random.default_rng(0), hidden=(8, 8))
    rows = trace_episode(agent, KEYDOOR, 4)
    assert 1 <= len(rows) <= 100
    assert [r["t"] for r in rows] == list(range(len(rows)))
    for r in rows:
        assert 0 <= r["oracle"] < 4 and 0 <= r["action"] < 6
    if method != "bc":
        column = "thought" if method == "tc" else "z_index"
        assert 0.0 <= trace_accuracy(rows, column) <= 1.0
    if method == "seal":
        assert {"z_vq", "z_llm", "z_combined"} <= set(rows[0])
    write_jsonl(rows, tmp_path / "t.jsonl")
    assert len((tmp_path / "t.jsonl").read_text().splitlines()) == len(rows)


def test_expert_trace_oracle_is_monotone():
    rows = trace_episode(ExpertAgent(EnvKind(3), (0, 1, 2)), EnvKind(3), 9)
    oracle = [r["oracle"] for r in rows]
    assert oracle == sorted(oracle) and oracle[0] == 0
