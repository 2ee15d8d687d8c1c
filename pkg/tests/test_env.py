import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seal_hil.env import (
    Action,
    EnvKind,
    EnvState,
    EpisodeFinished,
    HORIZON,
    KEYDOOR,
    encode,
    encode_raw,
    order_name,
    parse_order,
    reset,
    step,
)


def kd(player, key=(2, 2), door=(7, 7), statuses=(0, 0)):
    return EnvState(KEYDOOR, (key, door, player), statuses, order=(0, 1))


def grid(player, objects, statuses=None, order=None):
    kind = EnvKind(len(objects))
    return EnvState(kind, tuple(objects) + (player,), statuses or (0,) * len(objects),
                    order=parse_order(kind, order))


def test_kind_parsing_and_shapes():
    assert EnvKind.parse("keydoor") == KEYDOOR
    assert EnvKind.parse("GRID4").n_objects == 4
    assert KEYDOOR.obs_dim == 8 and KEYDOOR.n_actions == 6 and KEYDOOR.n_subgoals == 4
    g5 = EnvKind(5)
    assert g5.obs_dim == 17 and g5.n_actions == 5 and g5.n_subgoals == 10
    for bad in ("grid2", "grid6", "maze"):
        with pytest.raises(ValueError):
            EnvKind.parse(bad)


def test_order_parsing():
    g3 = EnvKind(3)
    assert parse_order(g3, "ACB") == (0, 2, 1)
    assert parse_order(g3, None) == (0, 1, 2)
    assert order_name((1, 2, 0)) == "BCA"
    with pytest.raises(ValueError):
        parse_order(g3, "AAB")
    with pytest.raises(ValueError):
        parse_order(g3, "AB")
    with pytest.raises(ValueError):
        parse_order(KEYDOOR, "BA")


@pytest.mark.parametrize("action,expected", [
    (Action.UP, (4, 5)), (Action.DOWN, (4, 3)), (Action.LEFT, (3, 4)), (Action.RIGHT, (5, 4)),
])
def test_moves(action, expected):
    assert step(kd((4, 4)), action).next_state.player == expected


def test_moves_clamp_at_border():
    assert step(kd((0, 0)), Action.LEFT).next_state.player == (0, 0)
    assert step(kd((0, 0)), Action.DOWN).next_state.player == (0, 0)
    assert step(kd((9, 9)), Action.UP).next_state.player == (9, 9)
    assert step(kd((9, 9)), Action.RIGHT).next_state.player == (9, 9)


def test_keydoor_rules():
    s = kd((2, 2))
    assert step(s, Action.UNLOCK).next_state.statuses == (0, 0)  # wrong verb on the key
    s = step(s, Action.PICKUP).next_state
    assert s.statuses == (1, 0)
    assert step(s, Action.PICKUP).next_state.statuses == (1, 0)
    at_door = kd((7, 7), statuses=(1, 0))
    assert step(at_door, Action.PICKUP).next_state.statuses == (1, 0)
    out = step(at_door, Action.UNLOCK)
    assert out.done and out.success and out.next_state.statuses == (1, 1)


def test_door_stays_locked_without_key():
    out = step(kd((7, 7)), Action.UNLOCK)
    assert out.next_state.statuses == (0, 0) and not out.done


def test_interaction_away_from_target_is_noop():
    s = kd((5, 5))
    out = step(s, Action.PICKUP)
    assert out.next_state.statuses == (0, 0)
    assert out.next_state.step_count == 1


def test_grid_order_enforced():
    objs = [(1, 1), (3, 3), (5, 5)]
    s = grid((3, 3), objs, order="ACB")
    # object B is second in ABC but third in ACB
    assert step(s, Action.PICKUP).next_state.statuses == (0, 0, 0)
    s = grid((5, 5), objs, statuses=(1, 0, 0), order="ACB")
    assert step(s, Action.PICKUP).next_state.statuses == (1, 0, 1)


def test_grid_has_no_unlock():
    with pytest.raises(ValueError):
        step(grid((0, 0), [(1, 1), (2, 2), (3, 3)]), Action.UNLOCK)


def test_horizon_and_finished_episode():
    s = kd((5, 5))
    for t in range(HORIZON):
        out = step(s, Action.LEFT if t % 2 else Action.RIGHT)
        s = out.next_state
    assert out.done and not out.success and s.step_count == HORIZON
    with pytest.raises(EpisodeFinished):
        step(s, Action.UP)


def test_reset_is_seeded_and_distinct():
    a, b = reset(EnvKind(5), 3), reset(EnvKind(5), 3)
    assert a == b
    assert len(set(a.positions)) == len(a.positions)
    assert a.statuses == (0,) * 5 and a.step_count == 0


def test_encode_scaling():
    s = kd((9, 0), key=(3, 6), door=(1, 5), statuses=(1, 0))
    v = encode(s)
    assert v.shape == (8,)
    np.testing.assert_allclose(v[:6], np.array([3, 6, 1, 5, 9, 0]) / 9)
    assert list(v[6:]) == [1.0, 0.0]
    np.testing.assert_array_equal(encode_raw(s.raw(), KEYDOOR), v)


def test_state_dict_roundtrip():
    s = reset(EnvKind(3), 8, "BCA")
    assert EnvState.from_dict(s.to_dict(), s.kind, s.order) == s


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([None, 3, 4, 5]), st.lists(st.integers(0, 5), max_size=120))
def test_random_walks_respect_rules(seed, n_objects, actions):
    kind = EnvKind(n_objects)
    s = reset(kind, seed)
    for a in actions:
        a = a % kind.n_actions
        out = step(s, a)
        assert all(x >= y for x, y in zip(out.next_state.statuses, s.statuses))
        assert all(0 <= c <= 9 for c in out.next_state.player)
        s = out.next_state
        if out.done:
            break
    assert s.step_count <= HORIZON
