"""Rollouts, success/sub-goal reports, K sweeps and per-step sub-goal traces."""

from __future__ import annotations

import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .env import EnvKind, EnvState, HORIZON, encode, order_name, parse_order, reset, step
from .expert import expert_action, oracle_subgoal_index


@dataclass
class Episode:
    success: bool
    length: int
    statuses: tuple  # final status bits, identity order
    trace: Optional[List[dict]] = None


class ExpertAgent:
    """Wraps the scripted bot in the agent interface, for harness sanity checks."""

    def __init__(self, kind: EnvKind, order: Sequence[int]):
        self.kind, self.order = kind, tuple(order)

    def init_memory(self, n):
        return None

    def policy_step(self, obs, memory, branch="combined"):
        return np.array([int(expert_action(_decode(o, self.kind, self.order))) for o in obs]), memory


class RandomAgent:
    def __init__(self, kind: EnvKind, seed: int = 0):
        self.n_actions = kind.n_actions
        self.rng = np.random.default_rng(seed)

    def init_memory(self, n):
        return None

    def policy_step(self, obs, memory, branch="combined"):
        return self.rng.integers(0, self.n_actions, size=len(obs)), memory


def _decode(obs: np.ndarray, kind: EnvKind, order) -> EnvState:
    n = kind.n_targets + 1
    coords = np.rint(obs[: 2 * n] * 9).astype(int)
    return EnvState(
        kind=kind,
        positions=tuple((int(coords[2 * i]), int(coords[2 * i + 1])) for i in range(n)),
        statuses=tuple(int(round(s)) for s in obs[2 * n:]),
        order=tuple(order),
    )


def initial_states(kind: EnvKind, n: int, seed, order=None) -> List[EnvState]:
    """``n`` fresh layouts from one seeded stream; ``seed`` may be an int or int sequence."""
    rng = np.random.default_rng(seed)
    return [reset(kind, rng, order) for _ in range(n)]


def rollout(agent, states: Sequence[EnvState], branch: str = "combined", record: bool = False) -> List[Episode]:
    """Run all episodes in lockstep so the policy sees one batch per time step."""
    states = list(states)
    n = len(states)
    memory = agent.init_memory(n)
    traces = [[] for _ in range(n)] if record else None
    done = [False] * n
    success = [False] * n
    for _ in range(HORIZON):
        active = [i for i in range(n) if not done[i]]
        if not active:
            break
        obs = np.stack([encode(states[i]) for i in active])
        mem = None if memory is None else memory[active]
        if record:
            extra = _subgoal_columns(agent, obs)
        actions, mem = agent.policy_step(obs, mem, branch)
        if memory is not None:
            memory[active] = mem
        for j, i in enumerate(active):
            if record:
                row = {
                    "t": states[i].step_count,
                    "state": states[i].raw(),
                    "action": int(actions[j]),
                    "oracle": oracle_subgoal_index(states[i]),
                }
                row.update({k: v[j] for k, v in extra.items()})
                if mem is not None:
                    row["thought"] = int(np.argmax(mem[j]))
                traces[i].append(row)
            out = step(states[i], int(actions[j]))
            states[i] = out.next_state
            if out.done:
                done[i], success[i] = True, out.success
    return [
        Episode(success=success[i], length=states[i].step_count, statuses=states[i].statuses,
                trace=traces[i] if record else None)
        for i in range(n)
    ]


def _subgoal_columns(agent, obs) -> Dict[str, list]:
    if not hasattr(agent, "subgoals"):
        return {}
    if hasattr(agent, "weights"):
        zs = agent.subgoals(obs)
        out = {}
        for name in ("vq", "llm"):
            if name in zs:
                out[f"z_{name}"] = [int(i) for i in np.argmax(zs[name], axis=1)]
        out["z_combined"] = [[round(float(x), 6) for x in row] for row in zs["combined"]]
        out["z_index"] = [int(i) for i in np.argmax(zs["combined"], axis=1)]
        return out
    z = agent.subgoals(obs)
    return {"z_index": [int(i) for i in np.argmax(z, axis=1)]}


def subgoal_names(kind: EnvKind, order: Sequence[int]) -> List[str]:
    if kind.is_keydoor:
        return ["pick up the key", "unlock the door"]
    return [f"pick up object {i + 1}" for i in order]


def evaluate(agent, kind: EnvKind, episodes: int = 100, seed: int = 0, order=None, branch: str = "combined") -> dict:
    """Success fraction plus completion rate of every interaction sub-goal.

    A sub-goal counts as completed when its status bit was set at any point of
    the episode, whether or not the episode succeeded.
    """
    if episodes < 1:
        raise ValueError("need at least one episode")
    order = parse_order(kind, order)
    t0 = time.perf_counter()
    results = rollout(agent, initial_states(kind, episodes, seed, order), branch)
    names = subgoal_names(kind, order)
    rates = {name: float(np.mean([r.statuses[i] for r in results])) for name, i in zip(names, order)}
    return {
        "seed": seed,
        "episodes": episodes,
        "success_rate": float(np.mean([r.success for r in results])),
        "subgoal_rates": rates,
        "mean_length": float(np.mean([r.length for r in results])),
        "wall_clock": time.perf_counter() - t0,
    }


@dataclass
class EvalReport:
    method: str
    env: str
    n_demos: int
    order: str
    seeds: List[int] = field(default_factory=list)
    success: List[float] = field(default_factory=list)
    subgoals: Dict[str, List[float]] = field(default_factory=dict)
    wall_clock: float = 0.0

    def add(self, fragment: dict) -> None:
        self.seeds.append(int(fragment["seed"]))
        self.success.append(float(fragment["success_rate"]))
        for name, rate in fragment["subgoal_rates"].items():
            self.subgoals.setdefault(name, []).append(float(rate))
        self.wall_clock += float(fragment.get("wall_clock", 0.0))

    @property
    def mean(self) -> float:
        return mean_std(self.success)[0]

    @property
    def std(self) -> float:
        return mean_std(self.success)[1]

    def subgoal_mean_std(self) -> Dict[str, tuple]:
        return {k: mean_std(v) for k, v in self.subgoals.items()}

    def check(self) -> None:
        """Rates lie in [0, 1] and no seed succeeds more often than it completes a sub-goal."""
        for rate in self.success + [r for v in self.subgoals.values() for r in v]:
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"rate {rate} outside [0, 1]")
        for name, rates in self.subgoals.items():
            for s, r in zip(self.success, rates):
                if s > r + 1e-12:
                    raise ValueError(f"success {s} exceeds completion {r} of {name!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean"], d["std"] = mean_std(self.success)
        d["subgoal_mean_std"] = self.subgoal_mean_std()
        return d

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def mean_std(values: Sequence[float]) -> tuple:
    """Mean and sample standard deviation (0 for a single value)."""
    values = [float(v) for v in values]
    if not values:
        return (math.nan, math.nan)
    m = statistics.fmean(values)
    s = statistics.stdev(values) if len(values) > 1 else 0.0
    return (m, s)


def welford(values: Sequence[float]) -> tuple:
    """Single-pass mean / sample std, kept separate from :func:`mean_std` as a cross-check."""
    n, m, m2 = 0, 0.0, 0.0
    for v in values:
        n += 1
        d = v - m
        m += d / n
        m2 += d * (v - m)
    return (m, math.sqrt(m2 / (n - 1)) if n > 1 else 0.0)


def trace_episode(agent, kind: EnvKind, seed: int, order=None, branch: str = "combined") -> List[dict]:
    """Per-step record of the chosen action, predicted sub-goal(s) and oracle sub-goal."""
    order = parse_order(kind, order)
    (ep,) = rollout(agent, initial_states(kind, 1, seed, order), branch, record=True)
    return ep.trace


def trace_accuracy(trace: Sequence[dict], column: str = "z_index") -> float:
    """Fraction of steps whose predicted sub-goal matches the oracle."""
    hits = [row[column] == row["oracle"] for row in trace if column in row]
    return float(np.mean(hits)) if hits else math.nan


def write_jsonl(rows: Sequence[dict], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def sweep_k(
    run: Callable[[str, int, int, int], float],
    methods: Sequence[str],
    k_values: Sequence[int],
    n_demos: Sequence[int],
    seeds: Sequence[int],
) -> List[dict]:
    """Grid of mean success over seeds for every (method, K, n_demos) cell.

    ``run(method, k, n_demos, seed)`` trains and evaluates one cell member.
    """
    for k in k_values:
        if not 2 <= k <= 12:
            raise ValueError(f"K={k} outside [2, 12]")
    rows = []
    for method in methods:
        for n in n_demos:
            for k in k_values:
                per_seed = [run(method, k, n, s) for s in seeds]
                m, s = mean_std(per_seed)
                rows.append({"method": method, "k": k, "n_demos": n, "per_seed": per_seed, "mean": m, "std": s})
    return rows


__all__ = [
    "Episode",
    "EvalReport",
    "ExpertAgent",
    "RandomAgent",
    "evaluate",
    "initial_states",
    "mean_std",
    "rollout",
    "subgoal_names",
    "sweep_k",
    "trace_accuracy",
    "trace_episode",
    "welford",
    "write_jsonl",
    "order_name",
]
