"""Joint training loop with periodic per-branch validation and confidence updates."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import tensor as T
from .baselines import Agent, MethodKind, build_agent
from .env import EnvKind, encode
from .evaluate import initial_states, rollout
from .expert import DemoDataset
from .model import Batch, ConfidenceWeights, DEFAULT_BETA, SealModel

log = logging.getLogger(__name__)

DEFAULT_LR = {"keydoor": 5e-5, "grid": 5e-6}

TRACE_FIELDS = [
    "iteration", "epoch", "L_H_llm", "L_H_vq", "L_L_llm", "L_L_vq", "total",
    "W_vq", "W_llm", "SR_vq", "SR_llm",
]


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    method: str = "seal"
    env: str = "keydoor"
    n_demos: int = 200
    seed: int = 0
    epochs: int = 200
    batch_size: int = 64
    lr: Optional[float] = None
    beta: float = DEFAULT_BETA
    k: Optional[int] = None
    tau: float = 1.0
    hidden: Tuple[int, ...] = (128, 128)
    val_every: int = 5
    val_episodes: int = 20
    labeler: str = "oracle"
    order: str = ""
    variant_orders: Tuple[str, ...] = ()
    variant_demos: int = 10
    early_stop: bool = False
    checkpoint_every: int = 0

    def __post_init__(self):
        self.method = MethodKind(self.method).value
        self.hidden = tuple(int(h) for h in self.hidden)
        self.variant_orders = tuple(self.variant_orders)
        if self.lr is None:
            self.lr = DEFAULT_LR["keydoor" if self.kind.is_keydoor else "grid"]
        if self.n_demos < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("n_demos, epochs and batch_size must be positive")

    @property
    def kind(self) -> EnvKind:
        return EnvKind.parse(self.env)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["variant_orders"] = list(self.variant_orders)
        return d


@dataclass
class TrainTrace:
    rows: List[dict] = field(default_factory=list)

    def append(self, row: dict) -> None:
        self.rows.append({k: row.get(k, math.nan) for k in TRACE_FIELDS})

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=np.float64)

    def epoch_means(self, name: str = "total") -> np.ndarray:
        epochs = self.column("epoch").astype(int)
        values = self.column(name)
        return np.array([values[epochs == e].mean() for e in np.unique(epochs)])

    def to_csv(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=TRACE_FIELDS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: ("" if isinstance(v, float) and math.isnan(v) else repr(v)) for k, v in r.items()})


def flatten(datasets: Sequence[DemoDataset], need_labels: bool) -> Batch:
    """Stack every expert step into one batch with successor and previous-label columns."""
    obs, actions, next_obs, has_next, ref, prev_ref = [], [], [], [], [], []
    for ds in datasets:
        if need_labels and not ds.labeled:
            raise ConfigError("this method needs a labeled dataset")
        for traj in ds.trajectories:
            o = traj.observations()
            n = len(traj)
            obs.append(o)
            actions.append(np.asarray(traj.actions))
            nxt = np.zeros_like(o)
            nxt[:-1] = o[1:]
            next_obs.append(nxt)
            hn = np.ones(n, dtype=bool)
            hn[-1] = False
            has_next.append(hn)
            if traj.labels is not None:
                idx = traj.label_indices()
                ref.append(idx)
                prev_ref.append(np.concatenate([[-1], idx[:-1]]))
            else:
                ref.append(np.full(n, -1))
                prev_ref.append(np.full(n, -1))
    return Batch(
        obs=np.concatenate(obs),
        actions=np.concatenate(actions).astype(np.int64),
        next_obs=np.concatenate(next_obs),
        has_next=np.concatenate(has_next),
        ref=np.concatenate(ref).astype(np.int64),
        prev_ref=np.concatenate(prev_ref).astype(np.int64),
    )


def update_confidence(sr_vq: float, sr_llm: float, previous: ConfidenceWeights) -> ConfidenceWeights:
    """Normalised validation success rates; two zero rates keep the previous weights."""
    for sr in (sr_vq, sr_llm):
        if not 0.0 <= sr <= 1.0:
            raise ValueError(f"success rate {sr} outside [0, 1]")
    total = sr_vq + sr_llm
    if total == 0:
        return previous
    w_vq = sr_vq / total
    return ConfidenceWeights(w_vq, 1.0 - w_vq)


def validate(agent, branch: str, kind: EnvKind, episodes: int, seed, order=None) -> float:
    """Success rate of ``episodes`` rollouts using one sub-goal source.

    Both branches get identical layouts when called with the same ``seed``.
    """
    if episodes < 1:
        raise ValueError("need at least one validation episode")
    results = rollout(agent, initial_states(kind, episodes, seed, order), branch)
    return float(np.mean([r.success for r in results]))


def _streams(seed: int):
    init, shuffle, noise, val = np.random.SeedSequence(seed).spawn(4)
    return (np.random.default_rng(init), np.random.default_rng(shuffle), np.random.default_rng(noise),
            int(val.generate_state(1)[0]))


def train(
    config: TrainConfig,
    datasets: Union[DemoDataset, Sequence[DemoDataset]],
    max_iterations: Optional[int] = None,
    checkpoint_dir: Optional[Union[str, Path]] = None,
    header: Optional[dict] = None,
) -> Tuple[Agent, TrainTrace]:
    """Optimise one method on the given demonstrations; deterministic in ``config.seed``."""
    if isinstance(datasets, DemoDataset):
        datasets = [datasets]
    kind = config.kind
    for ds in datasets:
        if ds.kind != kind:
            raise ConfigError(f"dataset kind {ds.kind.name} does not match {kind.name}")
    method = MethodKind(config.method)
    data = flatten(datasets, method.needs_labels)
    if method.needs_labels and int(data.ref.max()) >= (config.k or kind.n_subgoals):
        raise ConfigError("labels exceed the configured number of sub-goals")

    init_rng, shuffle_rng, noise_rng, val_seed = _streams(config.seed)
    agent = build_agent(method, kind, init_rng, config.k, config.beta, config.tau, config.hidden)
    opt = T.Adam(agent.params, lr=config.lr)
    order = datasets[0].order
    dual = isinstance(agent, SealModel) and agent.enc_vq is not None and agent.enc_llm is not None

    trace = TrainTrace()
    n = len(data)
    it = 0
    sr = {"SR_vq": math.nan, "SR_llm": math.nan}
    best = -1.0
    for epoch in range(1, config.epochs + 1):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = data.take(perm[start:start + config.batch_size])
            opt.zero_grad()
            loss, parts = agent.loss(batch, noise_rng)
            T.backward(loss)
            opt.step()
            it += 1
            row = dict(parts, iteration=it, epoch=epoch, **sr)
            if isinstance(agent, SealModel):
                row.update(W_vq=agent.weights.w_vq, W_llm=agent.weights.w_llm)
            trace.append(row)
            if max_iterations is not None and it >= max_iterations:
                return agent, trace

        if dual and config.val_every and epoch % config.val_every == 0:
            vseed = [val_seed, epoch]
            sr_vq = validate(agent, "vq", kind, config.val_episodes, vseed, order)
            sr_llm = validate(agent, "llm", kind, config.val_episodes, vseed, order)
            sr = {"SR_vq": sr_vq, "SR_llm": sr_llm}
            agent.weights = update_confidence(sr_vq, sr_llm, agent.weights)
            log.info("epoch %d: SR_vq=%.2f SR_llm=%.2f -> W=(%.3f, %.3f)", epoch, sr_vq, sr_llm,
                     agent.weights.w_vq, agent.weights.w_llm)
            if config.early_stop:
                score = max(sr_vq, sr_llm)
                if score >= 1.0 or score < best - 0.25:
                    break
                best = max(best, score)
        if checkpoint_dir and config.checkpoint_every and epoch % config.checkpoint_every == 0:
            from .baselines import save_agent

            save_agent(Path(checkpoint_dir) / f"epoch{epoch:04d}.ckpt", agent,
                       dict(header or {}, step=it, epoch=epoch))
    return agent, trace
