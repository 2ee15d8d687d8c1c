"""Scripted expert demonstrator and the rule-table sub-goal oracle."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .env import (
    Action,
    EnvKind,
    EnvState,
    HORIZON,
    encode,
    order_name,
    parse_order,
    reset,
    step,
)


def expert_action(state: EnvState) -> Action:
    """Shortest-path action toward the next required target (x before y)."""
    target = state.next_target()
    if target is None:
        raise ValueError("task already complete")
    px, py = state.player
    tx, ty = state.positions[target]
    if (px, py) == (tx, ty):
        if state.kind.is_keydoor and target == 1:
            return Action.UNLOCK
        return Action.PICKUP
    if tx != px:
        return Action.RIGHT if tx > px else Action.LEFT
    return Action.UP if ty > py else Action.DOWN


def oracle_subgoal_index(state: EnvState) -> int:
    """Stage index: ``2*i`` moves to the i-th target in order, ``2*i+1`` interacts.

    Completed tasks map to the final stage, which is what the last expert step
    carries anyway.
    """
    target = state.next_target()
    if target is None:
        return state.kind.n_subgoals - 1
    stage = state.order.index(target)
    at_target = state.player == state.positions[target]
    return 2 * stage + int(at_target)


def oracle_subgoal(state: EnvState) -> np.ndarray:
    z = np.zeros(state.kind.n_subgoals)
    z[oracle_subgoal_index(state)] = 1.0
    return z


def manhattan(a: Tuple[int, int], b: Tuple[int, int]) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def optimal_length(state: EnvState) -> int:
    """Sum of Manhattan legs through the targets plus one interaction each."""
    total, here = 0, state.player
    for i in state.order:
        if state.statuses[i]:
            continue
        total += manhattan(here, state.positions[i]) + 1
        here = state.positions[i]
    return total


@dataclass
class Trajectory:
    states: List[EnvState]
    actions: List[int]
    labels: Optional[np.ndarray] = None  # (len, K) one-hot
    success: bool = False

    def __len__(self) -> int:
        return len(self.states)

    def label_indices(self) -> np.ndarray:
        if self.labels is None:
            raise ValueError("trajectory is unlabeled")
        return np.argmax(self.labels, axis=1)

    def observations(self) -> np.ndarray:
        return np.stack([encode(s) for s in self.states])


@dataclass
class DemoDataset:
    kind: EnvKind
    trajectories: List[Trajectory]
    order: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not self.order:
            self.order = self.kind.default_order()

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def labeled(self) -> bool:
        return all(t.labels is not None for t in self.trajectories)

    @property
    def n_steps(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def to_jsonl(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as f:
            for traj in self.trajectories:
                record = {
                    "kind": self.kind.name,
                    "order": order_name(self.order),
                    "steps": [{"state": s.raw(), "action": int(a)} for s, a in zip(traj.states, traj.actions)],
                    "success": traj.success,
                }
                if traj.labels is not None:
                    record["labels"] = traj.labels.astype(int).tolist()
                f.write(json.dumps(record, separators=(",", ":")) + "\n")

    @classmethod
    def from_jsonl(cls, path: Union[str, Path]) -> "DemoDataset":
        trajectories, kind, order = [], None, None
        with Path(path).open() as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                k = EnvKind.parse(rec["kind"])
                o = parse_order(k, rec["order"])
                if kind is None:
                    kind, order = k, o
                elif (k, o) != (kind, order):
                    raise ValueError("mixed kinds or orders in one dataset file")
                states = [_state_from_raw(st["state"], kind, order, t) for t, st in enumerate(rec["steps"])]
                labels = rec.get("labels")
                trajectories.append(
                    Trajectory(
                        states=states,
                        actions=[int(st["action"]) for st in rec["steps"]],
                        labels=None if labels is None else np.asarray(labels, dtype=np.float64),
                        success=bool(rec["success"]),
                    )
                )
        if kind is None:
            raise ValueError(f"{path} holds no trajectories")
        return cls(kind=kind, trajectories=trajectories, order=order)


def _state_from_raw(raw: Sequence[int], kind: EnvKind, order, t: int) -> EnvState:
    n = kind.n_targets + 1
    coords = raw[: 2 * n]
    return EnvState(
        kind=kind,
        positions=tuple((int(coords[2 * i]), int(coords[2 * i + 1])) for i in range(n)),
        statuses=tuple(int(s) for s in raw[2 * n:]),
        step_count=t,
        order=tuple(order),
    )


def run_expert(state: EnvState) -> Trajectory:
    states, actions = [], []
    success = False
    while True:
        a = expert_action(state)
        states.append(state)
        actions.append(int(a))
        out = step(state, a)
        state = out.next_state
        if out.done:
            success = out.success
            break
    return Trajectory(states=states, actions=actions, success=success)


def generate_demos(
    kind: EnvKind,
    n: int,
    seed: int,
    order: Union[str, Sequence[int], None] = None,
) -> DemoDataset:
    if n < 1:
        raise ValueError("need at least one demonstration")
    order = parse_order(kind, order)
    rng = np.random.default_rng(seed)
    trajectories = []
    for _ in range(n):
        traj = run_expert(reset(kind, rng, order))
        assert traj.success and len(traj) <= HORIZON
        trajectories.append(traj)
    return DemoDataset(kind=kind, trajectories=trajectories, order=order)
