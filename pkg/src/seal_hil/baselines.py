"""Comparison methods and the method registry.

LISA and SEAL-L are :class:`SealModel` instances with one encoder removed,
so their losses are the corresponding SEAL branch by construction.
"""

from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from . import tensor as T
from .env import EnvKind
from .model import (
    DEFAULT_BETA,
    HIDDEN,
    LLM_ONLY,
    VQ_ONLY,
    Batch,
    ConfidenceWeights,
    SealModel,
    hard_argmax,
    low_level_loss,
    one_hot,
)
from .tensor import Mlp, Node

SDIL_EPS = 1e-8
SDIL_TAU = 1.0


class MethodKind(str, Enum):
    BC = "bc"
    LISA = "lisa"
    SDIL = "sdil"
    TC = "tc"
    SEAL_L = "seal_l"
    SEAL = "seal"

    @property
    def needs_labels(self) -> bool:
        return self in (MethodKind.TC, MethodKind.SEAL_L, MethodKind.SEAL)


# ---------------------------------------------------------------------------
# BC


class BCAgent:
    def __init__(self, obs_dim: int, n_actions: int, rng: np.random.Generator, hidden=HIDDEN):
        self.nets = {"policy": Mlp([obs_dim, *hidden, n_actions], rng, "policy")}

    @property
    def params(self):
        return self.nets["policy"].params

    def loss(self, batch: Batch, rng=None) -> Tuple[Node, Dict[str, float]]:
        loss = bc_loss(self.nets["policy"], batch)
        return loss, {"total": float(loss.value), "L_L": float(loss.value)}

    def init_memory(self, n):
        return None

    def policy_step(self, obs, memory, branch="combined"):
        return np.argmax(self.nets["policy"].predict(obs), axis=1), memory


def bc_loss(policy: Mlp, batch: Batch) -> Node:
    return T.mean(T.cross_entropy(policy(batch.obs), batch.actions))


def lisa_loss(model: SealModel, batch: Batch, beta: Optional[float] = None) -> Node:
    """``beta * commitment + L_L(s, z_vq)``: the VQ branch of the SEAL loss alone."""
    l_h, l_l, _ = model.vq_branch(batch)
    return T.add(T.mul(l_h, model.beta if beta is None else beta), l_l)


def seal_l(model: SealModel, batch: Batch, beta: Optional[float] = None) -> Node:
    """SEAL with the weights frozen at (0, 1): the label branch alone."""
    l_h, l_l, _ = model.llm_branch(batch)
    return T.add(T.mul(l_h, model.beta if beta is None else beta), l_l)


# ---------------------------------------------------------------------------
# SDIL skill discovery


def sdil_probabilities(z_con, codebook: np.ndarray, eps: float = SDIL_EPS) -> Node:
    """Selection probabilities proportional to ``1 / D(z_i, z')`` with a smoothed distance."""
    z = T.as_node(z_con)
    squeeze = z.value.ndim == 1
    if squeeze:
        z = T.reshape(z, (1, -1))
    cols = []
    for entry in np.asarray(codebook, dtype=np.float64):
        d2 = T.sum(T.square(T.sub(z, entry)), axis=1)
        cols.append(T.reshape(T.sqrt(T.add(d2, eps * eps)), (-1, 1)))
    inv = T.div(1.0, T.concat(cols, axis=1))
    probs = T.div(inv, T.reshape(T.sum(inv, axis=1), (-1, 1)))
    return T.reshape(probs, (-1,)) if squeeze else probs


def sdil_select(
    z_con,
    codebook: np.ndarray,
    tau: float = SDIL_TAU,
    rng: Optional[np.random.Generator] = None,
    eps: float = SDIL_EPS,
) -> Node:
    """Gumbel-softmax relaxation of the selection when ``rng`` is given, hard argmax otherwise."""
    probs = sdil_probabilities(z_con, codebook, eps)
    if rng is None:
        return Node(hard_argmax(probs.value))
    g = rng.gumbel(size=probs.value.shape)
    return T.softmax(T.mul(T.add(T.log(probs), g), 1.0 / tau))


class SDILAgent:
    def __init__(self, obs_dim, n_subgoals, n_actions, rng, tau: float = SDIL_TAU, hidden=HIDDEN):
        self.k, self.tau = n_subgoals, tau
        self.codebook = np.eye(n_subgoals)
        self.nets = {
            "encoder": Mlp([obs_dim, *hidden, n_subgoals], rng, "encoder"),
            "policy": Mlp([obs_dim + n_subgoals, *hidden, n_actions], rng, "policy"),
        }

    @property
    def params(self):
        return [p for net in self.nets.values() for p in net.params]

    def loss(self, batch: Batch, rng: np.random.Generator) -> Tuple[Node, Dict[str, float]]:
        z = sdil_select(self.nets["encoder"](batch.obs), self.codebook, self.tau, rng)
        loss = low_level_loss(self.nets["policy"], batch.obs, z, batch.actions)
        return loss, {"total": float(loss.value), "L_L": float(loss.value)}

    def subgoals(self, obs):
        return sdil_select(self.nets["encoder"].predict(obs), self.codebook).value

    def init_memory(self, n):
        return None

    def policy_step(self, obs, memory, branch="combined"):
        z = self.subgoals(obs)
        return np.argmax(self.nets["policy"].predict(np.concatenate([obs, z], axis=1)), axis=1), memory


# ---------------------------------------------------------------------------
# Thought Cloning


def tc_loss(thought: Mlp, action: Mlp, batch: Batch, k: int, beta: float = DEFAULT_BETA) -> Node:
    """``-log(beta * pi_H(z_t | z_{t-1}, s_t) + pi_L(a_t | s_t, z_t))`` with teacher forcing."""
    if batch.ref is None or batch.prev_ref is None:
        raise ValueError("thought cloning needs reference labels")
    prev = one_hot(batch.prev_ref, k)  # -1 at t=0 gives the zero vector
    cur = one_hot(batch.ref, k)
    p_h = T.gather(T.softmax(thought(np.concatenate([batch.obs, prev], axis=1))), batch.ref)
    p_l = T.gather(T.softmax(action(np.concatenate([batch.obs, cur], axis=1))), batch.actions)
    return T.mean(T.mul(T.log(T.add(T.mul(p_h, beta), p_l)), -1.0))


class TCAgent:
    def __init__(self, obs_dim, n_subgoals, n_actions, rng, beta: float = DEFAULT_BETA, hidden=HIDDEN):
        self.k, self.beta = n_subgoals, beta
        self.nets = {
            "thought": Mlp([obs_dim + n_subgoals, *hidden, n_subgoals], rng, "thought"),
            "action": Mlp([obs_dim + n_subgoals, *hidden, n_actions], rng, "action"),
        }

    @property
    def params(self):
        return [p for net in self.nets.values() for p in net.params]

    def loss(self, batch: Batch, rng=None) -> Tuple[Node, Dict[str, float]]:
        loss = tc_loss(self.nets["thought"], self.nets["action"], batch, self.k, self.beta)
        return loss, {"total": float(loss.value)}

    def init_memory(self, n):
        return np.zeros((n, self.k))

    def policy_step(self, obs, memory, branch="combined"):
        # at test time the previous thought is the agent's own prediction
        th = hard_argmax(self.nets["thought"].predict(np.concatenate([obs, memory], axis=1)))
        a = np.argmax(self.nets["action"].predict(np.concatenate([obs, th], axis=1)), axis=1)
        return a, th


# ---------------------------------------------------------------------------
# SEAL adapters and registry


class SealAgent(SealModel):
    def loss(self, batch: Batch, rng=None, weights: Optional[ConfidenceWeights] = None):
        return super().loss(batch, weights)

    def init_memory(self, n):
        return None

    def policy_step(self, obs, memory, branch="combined"):
        return self.act(obs, branch), memory


Agent = Union[BCAgent, SDILAgent, TCAgent, SealAgent]


def build_agent(
    method: Union[MethodKind, str],
    kind: EnvKind,
    rng: np.random.Generator,
    n_subgoals: Optional[int] = None,
    beta: float = DEFAULT_BETA,
    tau: float = SDIL_TAU,
    hidden: Sequence[int] = HIDDEN,
) -> Agent:
    method = MethodKind(method)
    k = n_subgoals or kind.n_subgoals
    d, a = kind.obs_dim, kind.n_actions
    if method is MethodKind.BC:
        return BCAgent(d, a, rng, hidden)
    if method is MethodKind.SDIL:
        return SDILAgent(d, k, a, rng, tau, hidden)
    if method is MethodKind.TC:
        return TCAgent(d, k, a, rng, beta, hidden)
    use_vq = method in (MethodKind.SEAL, MethodKind.LISA)
    use_llm = method in (MethodKind.SEAL, MethodKind.SEAL_L)
    return SealAgent(d, k, a, rng, use_vq=use_vq, use_llm=use_llm, beta=beta, hidden=hidden)


def save_agent(path: Union[str, Path], agent: Agent, header: dict) -> None:
    head = dict(header)
    if isinstance(agent, SealModel):
        head["weights"] = [agent.weights.w_vq, agent.weights.w_llm]
    T.save_checkpoint(path, agent.nets, head)


def load_agent(path: Union[str, Path]) -> Tuple[Agent, dict]:
    header, blocks = T.load_checkpoint(path)
    kind = EnvKind.parse(header["env"])
    hidden = header["blocks"][0]["sizes"][1:-1]
    agent = build_agent(
        header["method"],
        kind,
        np.random.default_rng(0),
        n_subgoals=header.get("k"),
        beta=header.get("beta", DEFAULT_BETA),
        hidden=hidden,
    )
    if set(blocks) != set(agent.nets):
        raise ValueError(f"checkpoint blocks {sorted(blocks)} do not match {header['method']}")
    for name, arrays in blocks.items():
        agent.nets[name].load_arrays(arrays)
    if isinstance(agent, SealModel) and "weights" in header:
        agent.weights = ConfidenceWeights(*header["weights"])
    return agent, header


__all__ = [
    "MethodKind",
    "BCAgent",
    "SDILAgent",
    "TCAgent",
    "SealAgent",
    "build_agent",
    "bc_loss",
    "lisa_loss",
    "sdil_probabilities",
    "sdil_select",
    "tc_loss",
    "seal_l",
    "save_agent",
    "load_agent",
    "LLM_ONLY",
    "VQ_ONLY",
]
