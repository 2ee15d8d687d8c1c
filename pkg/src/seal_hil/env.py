"""KeyDoor and Grid-World environments with flat vector observations.

Both tasks live on a 10x10 grid without walls. Entity coordinates are integer
``(x, y)`` pairs; ``Up`` increases ``y`` and ``Right`` increases ``x``. Moves
clamp at the border.

Observation layout (before scaling):

* KeyDoor: ``[key_x, key_y, door_x, door_y, player_x, player_y, key, door]``
* Grid-World-N: ``[o1_x, o1_y, ..., oN_x, oN_y, player_x, player_y, s1..sN]``
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

GRID_SIZE = 10
HORIZON = 100
COORD_SCALE = 1.0 / (GRID_SIZE - 1)


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    PICKUP = 4
    UNLOCK = 5


MOVES = {
    Action.UP: (0, 1),
    Action.DOWN: (0, -1),
    Action.LEFT: (-1, 0),
    Action.RIGHT: (1, 0),
}


class EpisodeFinished(RuntimeError):
    """Raised when stepping an episode that already ended."""


@dataclass(frozen=True)
class EnvKind:
    """``n_objects=None`` selects KeyDoor, otherwise Grid-World with 3-5 objects."""

    n_objects: Optional[int] = None

    def __post_init__(self):
        if self.n_objects is not None and not 3 <= self.n_objects <= 5:
            raise ValueError(f"Grid-World supports 3-5 objects, got {self.n_objects}")

    @property
    def is_keydoor(self) -> bool:
        return self.n_objects is None

    @property
    def name(self) -> str:
        return "keydoor" if self.is_keydoor else f"grid{self.n_objects}"

    @property
    def n_targets(self) -> int:
        """Entities other than the player (key and door count as targets)."""
        return 2 if self.is_keydoor else self.n_objects

    @property
    def n_actions(self) -> int:
        return 6 if self.is_keydoor else 5

    @property
    def obs_dim(self) -> int:
        # target coordinates + player coordinates + one status bit per target
        return 3 * self.n_targets + 2

    @property
    def n_subgoals(self) -> int:
        return 2 * self.n_targets

    def default_order(self) -> Tuple[int, ...]:
        return tuple(range(self.n_targets))

    @classmethod
    def parse(cls, name: str) -> "EnvKind":
        name = name.strip().lower()
        if name == "keydoor":
            return cls()
        if name.startswith("grid") and name[4:].isdigit():
            return cls(int(name[4:]))
        raise ValueError(f"unknown environment {name!r}; expected keydoor|grid3|grid4|grid5")


KEYDOOR = EnvKind()


def parse_order(kind: EnvKind, order: Union[str, Sequence[int], None]) -> Tuple[int, ...]:
    """Accept ``"ACB"``-style letters or a sequence of 0-based object indices."""
    if order is None:
        return kind.default_order()
    if isinstance(order, str):
        if not order.isalpha():
            raise ValueError(f"invalid order {order!r}")
        order = [ord(c) - ord("A") for c in order.upper()]
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(kind.n_targets)):
        raise ValueError(f"order {order} is not a permutation of {kind.n_targets} targets")
    if kind.is_keydoor and order != (0, 1):
        raise ValueError("KeyDoor has a fixed key-then-door order")
    return order


def order_name(order: Sequence[int]) -> str:
    return "".join(chr(ord("A") + i) for i in order)


@dataclass(frozen=True)
class EnvState:
    kind: EnvKind
    positions: Tuple[Tuple[int, int], ...]  # targets in identity order, player last
    statuses: Tuple[int, ...]
    step_count: int = 0
    order: Tuple[int, ...] = ()
    done: bool = False

    @property
    def player(self) -> Tuple[int, int]:
        return self.positions[-1]

    def next_target(self) -> Optional[int]:
        """Identity index of the first not-yet-completed target in ``order``."""
        for i in self.order:
            if not self.statuses[i]:
                return i
        return None

    def raw(self) -> list:
        """Unscaled integer record: coordinates then statuses."""
        out = [c for p in self.positions for c in p]
        out.extend(self.statuses)
        return out

    def to_dict(self) -> dict:
        return {
            "positions": [list(p) for p in self.positions],
            "statuses": list(self.statuses),
            "step_count": self.step_count,
        }

    @classmethod
    def from_dict(cls, d: dict, kind: EnvKind, order: Sequence[int]) -> "EnvState":
        return cls(
            kind=kind,
            positions=tuple(tuple(int(c) for c in p) for p in d["positions"]),
            statuses=tuple(int(s) for s in d["statuses"]),
            step_count=int(d.get("step_count", 0)),
            order=tuple(order),
        )


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    done: bool
    success: bool


def reset(
    kind: EnvKind,
    seed: Union[int, np.random.Generator, None] = None,
    order: Union[str, Sequence[int], None] = None,
) -> EnvState:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = kind.n_targets + 1
    cells = rng.choice(GRID_SIZE * GRID_SIZE, size=n, replace=False)
    positions = tuple((int(c) % GRID_SIZE, int(c) // GRID_SIZE) for c in cells)
    return EnvState(
        kind=kind,
        positions=positions,
        statuses=(0,) * kind.n_targets,
        step_count=0,
        order=parse_order(kind, order),
    )


def is_success(state: EnvState) -> bool:
    if state.kind.is_keydoor:
        return state.statuses[1] == 1
    return all(state.statuses)


def step(state: EnvState, action: Union[Action, int]) -> StepOutcome:
    if state.done or state.step_count >= HORIZON:
        raise EpisodeFinished("episode already finished")
    action = Action(int(action))
    if action >= state.kind.n_actions:
        raise ValueError(f"{action.name} is not available in {state.kind.name}")

    positions = state.positions
    statuses = state.statuses
    px, py = state.player
    if action in MOVES:
        dx, dy = MOVES[action]
        nx = min(max(px + dx, 0), GRID_SIZE - 1)
        ny = min(max(py + dy, 0), GRID_SIZE - 1)
        positions = positions[:-1] + ((nx, ny),)
    else:
        target = state.next_target()
        # KeyDoor: PickUp only applies to the key, Unlock only to the door.
        wanted = Action.PICKUP if not state.kind.is_keydoor or target == 0 else Action.UNLOCK
        if target is not None and action == wanted and positions[target] == (px, py):
            statuses = statuses[:target] + (1,) + statuses[target + 1:]

    nxt = replace(state, positions=positions, statuses=statuses, step_count=state.step_count + 1)
    success = is_success(nxt)
    done = success or nxt.step_count >= HORIZON
    nxt = replace(nxt, done=done)
    return StepOutcome(next_state=nxt, done=done, success=success)


def encode(state: EnvState) -> np.ndarray:
    coords = np.array([c for p in state.positions for c in p], dtype=np.float64) * COORD_SCALE
    return np.concatenate([coords, np.asarray(state.statuses, dtype=np.float64)])


def encode_raw(raw: Sequence[int], kind: EnvKind) -> np.ndarray:
    """Scale an unscaled integer record as produced by :meth:`EnvState.raw`."""
    v = np.asarray(raw, dtype=np.float64).copy()
    n_coords = 2 * (kind.n_targets + 1)
    v[:n_coords] *= COORD_SCALE
    return v
