"""Dual-encoder hierarchical policy: supervised label encoder, VQ encoder over
a fixed one-hot codebook, and a transition-weighted low-level policy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import tensor as T
from .tensor import Mlp, Node

HIDDEN = (128, 128)
DEFAULT_BETA = 0.4


@dataclass(frozen=True)
class ConfidenceWeights:
    w_vq: float = 0.5
    w_llm: float = 0.5

    def __post_init__(self):
        if self.w_vq < 0 or self.w_llm < 0 or abs(self.w_vq + self.w_llm - 1.0) > 1e-12:
            raise ValueError(f"invalid confidence weights ({self.w_vq}, {self.w_llm})")


LLM_ONLY = ConfidenceWeights(0.0, 1.0)
VQ_ONLY = ConfidenceWeights(1.0, 0.0)


@dataclass
class Batch:
    """Flat training samples. Label columns hold -1 where undefined."""

    obs: np.ndarray  # (B, D)
    actions: np.ndarray  # (B,)
    next_obs: np.ndarray  # (B, D); rows without successor are ignored
    has_next: np.ndarray  # (B,) bool
    ref: Optional[np.ndarray] = None  # (B,) reference sub-goal index
    prev_ref: Optional[np.ndarray] = None  # (B,) previous reference index, -1 at t=0

    def __len__(self):
        return len(self.actions)

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(
            obs=self.obs[idx],
            actions=self.actions[idx],
            next_obs=self.next_obs[idx],
            has_next=self.has_next[idx],
            ref=None if self.ref is None else self.ref[idx],
            prev_ref=None if self.prev_ref is None else self.prev_ref[idx],
        )


def one_hot(index, k: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros(index.shape + (k,))
    if index.ndim == 0:
        out[index] = 1.0
    else:
        valid = index >= 0
        out[np.nonzero(valid)[0], index[valid]] = 1.0
    return out


def hard_argmax(x: np.ndarray) -> np.ndarray:
    """One-hot of the largest component; ties go to the lowest index."""
    x = np.asarray(x)
    return one_hot(np.argmax(x, axis=-1), x.shape[-1])


def encode_llm(logits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    logits = np.asarray(logits, dtype=np.float64)
    return logits, hard_argmax(logits)


def quantize(z_con: np.ndarray, codebook: Optional[np.ndarray] = None) -> np.ndarray:
    """Nearest codebook entry under squared Euclidean distance.

    For the identity codebook ``||z - e_i||^2 = ||z||^2 - 2 z_i + 1``, so the
    nearest entry is the largest component and no distance table is needed.
    """
    z_con = np.asarray(z_con, dtype=np.float64)
    if codebook is None or _is_identity(codebook):
        return hard_argmax(z_con)
    d = ((z_con[..., None, :] - codebook) ** 2).sum(-1)
    return np.asarray(codebook)[np.argmin(d, axis=-1)]


def _is_identity(codebook) -> bool:
    cb = np.asarray(codebook)
    return cb.ndim == 2 and cb.shape[0] == cb.shape[1] and np.array_equal(cb, np.eye(cb.shape[0]))


def commitment_loss(z_con, z_vq: np.ndarray) -> Node:
    """Mean over rows of ``||sq(z_vq) - z_con||^2``; the codebook gets no gradient."""
    z_con = T.as_node(z_con)
    d = T.square(T.sub(T.stop_gradient(Node(z_vq)), z_con))
    if d.value.ndim == 1:
        return T.sum(d)
    return T.mean(T.sum(d, axis=1))


def combine(z_vq: np.ndarray, z_llm: np.ndarray, w: ConfidenceWeights) -> np.ndarray:
    return w.w_vq * np.asarray(z_vq, dtype=np.float64) + w.w_llm * np.asarray(z_llm, dtype=np.float64)


def transition_weight(z: np.ndarray, z_next: Optional[np.ndarray]) -> np.ndarray:
    """e at a sub-goal switch, 1 otherwise and at the final step.

    Two distinct one-hot codes sit at squared distance 2, so the exponent is
    halved to land on e rather than e^2.
    """
    z = np.asarray(z, dtype=np.float64)
    if z_next is None:
        return np.ones(z.shape[:-1]) if z.ndim > 1 else np.float64(1.0)
    return np.exp(0.5 * ((np.asarray(z_next, dtype=np.float64) - z) ** 2).sum(-1))


def transition_weights(z: np.ndarray, z_next: np.ndarray, has_next: np.ndarray) -> np.ndarray:
    w = transition_weight(z, z_next)
    return np.where(has_next, w, 1.0)


def low_level_loss(policy: Mlp, obs: np.ndarray, z, actions: np.ndarray, weights=None) -> Node:
    """Weighted mean of ``-log pi(a | s, z)``."""
    ce = T.cross_entropy(policy(T.concat([Node(obs), T.as_node(z)], axis=1)), actions)
    if weights is None:
        return T.mean(ce)
    return T.mean(T.mul(ce, np.asarray(weights, dtype=np.float64)))


class SealModel:
    """Parameters theta_1 (VQ encoder), theta_2 (label encoder), theta_3 (policy).

    Either encoder may be left out: without the VQ encoder this is SEAL-L, and
    without the label encoder it is the LISA-style VQ learner.
    """

    def __init__(
        self,
        obs_dim: int,
        n_subgoals: int,
        n_actions: int,
        rng: np.random.Generator,
        use_vq: bool = True,
        use_llm: bool = True,
        beta: float = DEFAULT_BETA,
        hidden: Sequence[int] = HIDDEN,
        straight_through: bool = True,
    ):
        if not (use_vq or use_llm):
            raise ValueError("need at least one high-level encoder")
        self.obs_dim, self.k, self.n_actions = obs_dim, n_subgoals, n_actions
        self.beta = beta
        self.straight_through = straight_through
        self.codebook = np.eye(n_subgoals)
        self.nets: Dict[str, Mlp] = {}
        # fixed creation order keeps initialisation reproducible per seed
        if use_vq:
            self.nets["enc_vq"] = Mlp([obs_dim, *hidden, n_subgoals], rng, "enc_vq")
        if use_llm:
            self.nets["enc_llm"] = Mlp([obs_dim, *hidden, n_subgoals], rng, "enc_llm")
        self.nets["policy"] = Mlp([obs_dim + n_subgoals, *hidden, n_actions], rng, "policy")
        if use_vq and use_llm:
            self.weights = ConfidenceWeights()
        else:
            self.weights = VQ_ONLY if use_vq else LLM_ONLY

    @property
    def enc_vq(self) -> Optional[Mlp]:
        return self.nets.get("enc_vq")

    @property
    def enc_llm(self) -> Optional[Mlp]:
        return self.nets.get("enc_llm")

    @property
    def policy(self) -> Mlp:
        return self.nets["policy"]

    @property
    def params(self):
        return [p for net in self.nets.values() for p in net.params]

    def _z_input(self, soft: Node, hard: np.ndarray) -> Node:
        return T.straight_through(hard, soft) if self.straight_through else Node(hard)

    def vq_branch(self, batch: Batch) -> Tuple[Node, Node, np.ndarray]:
        """Returns (commitment loss, low-level loss, hard z) for the VQ encoder."""
        z_con = self.enc_vq(batch.obs)
        z_vq = quantize(z_con.value)
        z_vq_next = quantize(self.enc_vq.predict(batch.next_obs))
        w = transition_weights(z_vq, z_vq_next, batch.has_next)
        l_h = commitment_loss(z_con, z_vq)
        l_l = low_level_loss(self.policy, batch.obs, self._z_input(z_con, z_vq), batch.actions, w)
        return l_h, l_l, z_vq

    def llm_branch(self, batch: Batch) -> Tuple[Node, Node, np.ndarray]:
        """Returns (label cross-entropy, low-level loss, hard z) for the label encoder."""
        if batch.ref is None or np.any(batch.ref < 0):
            raise ValueError("label encoder needs reference sub-goal labels")
        logits = self.enc_llm(batch.obs)
        z_llm = hard_argmax(logits.value)
        z_llm_next = hard_argmax(self.enc_llm.predict(batch.next_obs))
        w = transition_weights(z_llm, z_llm_next, batch.has_next)
        l_h = T.mean(T.cross_entropy(logits, batch.ref))
        # straight-through via the class probabilities; identity into raw logits
        # lets the policy gradient grow them without bound and swamp l_h
        l_l = low_level_loss(self.policy, batch.obs, self._z_input(T.softmax(logits), z_llm), batch.actions, w)
        return l_h, l_l, z_llm

    def loss(self, batch: Batch, weights: Optional[ConfidenceWeights] = None) -> Tuple[Node, Dict[str, float]]:
        """``W_vq (beta L_H^vq + L_L^vq) + W_llm (beta L_H^llm + L_L^llm)``."""
        w = weights or self.weights
        terms, parts = [], {}
        if self.enc_vq is not None and w.w_vq > 0:
            l_h, l_l, _ = self.vq_branch(batch)
            branch = T.add(T.mul(l_h, self.beta), l_l)
            terms.append(T.mul(branch, w.w_vq))
            parts.update(L_H_vq=float(l_h.value), L_L_vq=float(l_l.value), L_vq=float(branch.value))
        if self.enc_llm is not None and w.w_llm > 0:
            l_h, l_l, _ = self.llm_branch(batch)
            branch = T.add(T.mul(l_h, self.beta), l_l)
            terms.append(T.mul(branch, w.w_llm))
            parts.update(L_H_llm=float(l_h.value), L_L_llm=float(l_l.value), L_llm=float(branch.value))
        total = terms[0]
        for t in terms[1:]:
            total = T.add(total, t)
        parts["total"] = float(total.value)
        return total, parts

    # -- inference ---------------------------------------------------------

    def subgoals(self, obs: np.ndarray, weights: Optional[ConfidenceWeights] = None) -> Dict[str, np.ndarray]:
        """Hard per-branch sub-goals and their confidence-weighted combination."""
        w = weights or self.weights
        out = {}
        if self.enc_vq is not None:
            out["vq"] = quantize(self.enc_vq.predict(obs))
        if self.enc_llm is not None:
            out["llm"] = hard_argmax(self.enc_llm.predict(obs))
        z_vq = out.get("vq", np.zeros((len(obs), self.k)))
        z_llm = out.get("llm", np.zeros((len(obs), self.k)))
        out["combined"] = combine(z_vq, z_llm, w)
        return out

    def act(self, obs: np.ndarray, branch: str = "combined", weights: Optional[ConfidenceWeights] = None) -> np.ndarray:
        """Greedy actions for a batch of observations conditioned on one sub-goal source."""
        obs = np.atleast_2d(obs)
        z = self.subgoals(obs, weights)[branch]
        logits = self.policy.predict(np.concatenate([obs, z], axis=1))
        return np.argmax(logits, axis=1)
