"""Small reverse-mode autodiff over numpy arrays, plus MLP and Adam.

Only the handful of ops the models here need are implemented. Every op builds
a :class:`Node` that remembers its parents and a backward rule; calling
:func:`backward` on a scalar node walks the graph in reverse topological order
and accumulates ``.grad`` on every node that requires it.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int, Sequence]


class Node:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "stop_gradient", "name")

    def __init__(
        self,
        value,
        parents: Tuple["Node", ...] = (),
        backward_fn: Optional[Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]] = None,
        requires_grad: bool = False,
        stop_gradient: bool = False,
        name: str = "",
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.stop_gradient = stop_gradient
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.name or 'anon'}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def parameter(value, name: str = "") -> Node:
    return Node(value, requires_grad=True, name=name)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _make(value, parents: Tuple[Node, ...], backward_fn) -> Node:
    rg = any(p.requires_grad for p in parents)
    return Node(value, parents=parents if rg else (), backward_fn=backward_fn if rg else None, requires_grad=rg)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# ops


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return _make(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return _make(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    return _make(av * bv, (a, b), lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def div(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    return _make(
        av / bv,
        (a, b),
        lambda g: (_unbroadcast(g / bv, a.shape), _unbroadcast(-g * av / (bv * bv), b.shape)),
    )


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    if av.ndim == 1:
        # vector @ matrix
        return _make(av @ bv, (a, b), lambda g: (bv @ g, np.outer(av, g)))
    return _make(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def relu(x) -> Node:
    x = as_node(x)
    mask = x.value > 0
    return _make(x.value * mask, (x,), lambda g: (g * mask,))


def square(x) -> Node:
    x = as_node(x)
    xv = x.value
    return _make(xv * xv, (x,), lambda g: (2.0 * g * xv,))


def sqrt(x) -> Node:
    x = as_node(x)
    out = np.sqrt(x.value)
    return _make(out, (x,), lambda g: (g * 0.5 / out,))


def log(x) -> Node:
    x = as_node(x)
    xv = x.value
    return _make(np.log(xv), (x,), lambda g: (g / xv,))


def exp(x) -> Node:
    x = as_node(x)
    out = np.exp(x.value)
    return _make(out, (x,), lambda g: (g * out,))


def sum(x, axis: Optional[int] = None) -> Node:  # noqa: A001 - mirrors numpy
    x = as_node(x)
    shape = x.shape

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make(x.value.sum(axis=axis), (x,), back)


def mean(x, axis: Optional[int] = None) -> Node:
    x = as_node(x)
    n = x.value.size if axis is None else x.value.shape[axis]
    return mul(sum(x, axis), 1.0 / n)


def reshape(x, shape) -> Node:
    x = as_node(x)
    old = x.shape
    return _make(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(xs: Sequence, axis: int = -1) -> Node:
    nodes = [as_node(x) for x in xs]
    sizes = [n.value.shape[axis] for n in nodes]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([n.value for n in nodes], axis=axis),
        tuple(nodes),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def stop_gradient(x) -> Node:
    """Identity forward; the backward pass never crosses this node."""
    x = as_node(x)
    return Node(x.value, parents=(x,), requires_grad=False, stop_gradient=True)


def straight_through(hard: np.ndarray, soft: Node) -> Node:
    """``soft + sq(hard - soft)``: forward is ``hard``, backward is identity into ``soft``."""
    return add(soft, stop_gradient(sub(Node(hard), soft)))


def softmax(logits) -> Node:
    x = as_node(logits)
    z = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _make(p, (x,), back)


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, targets) -> Node:
    """``-log softmax(logits)[target]``; one value per row for 2-D logits."""
    x = as_node(logits)
    targets = np.asarray(targets, dtype=np.int64)
    lsm = log_softmax_np(x.value)
    if lsm.ndim == 1:
        loss = -lsm[targets]

        def back(g):
            d = np.exp(lsm)
            d[targets] -= 1.0
            return (g * d,)

        return _make(loss, (x,), back)

    rows = np.arange(lsm.shape[0])
    loss = -lsm[rows, targets]

    def back(g):
        d = np.exp(lsm)
        d[rows, targets] -= 1.0
        return (g[:, None] * d,)

    return _make(loss, (x,), back)


def gather(x, index) -> Node:
    """Pick ``x[i, index[i]]`` for every row."""
    x = as_node(x)
    index = np.asarray(index, dtype=np.int64)
    rows = np.arange(x.value.shape[0])

    def back(g):
        d = np.zeros_like(x.value)
        d[rows, index] = g
        return (d,)

    return _make(x.value[rows, index], (x,), back)


def _topo(root: Node) -> List[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if not node.stop_gradient:
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def backward(loss: Node) -> None:
    if loss.value.size != 1:
        raise ValueError("backward() needs a scalar loss")
    loss.grad = np.ones_like(loss.value)
    for node in reversed(_topo(loss)):
        if node.backward_fn is None or node.grad is None or node.stop_gradient:
            continue
        for parent, g in zip(node.parents, node.backward_fn(node.grad)):
            if g is None or not parent.requires_grad:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g


# ---------------------------------------------------------------------------
# modules


class Mlp:
    """Fully connected net, ReLU between layers, identity output."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, name: str = "mlp"):
        self.sizes = [int(s) for s in sizes]
        self.name = name
        self.params: List[Node] = []
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            self.params.append(parameter(w, f"{name}.W{i}"))
            self.params.append(parameter(np.zeros(fan_out), f"{name}.b{i}"))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def __call__(self, x) -> Node:
        h = as_node(x)
        if h.value.shape[-1] != self.sizes[0]:
            raise ValueError(f"{self.name}: expected input width {self.sizes[0]}, got {h.value.shape[-1]}")
        for i in range(self.n_layers):
            h = add(matmul(h, self.params[2 * i]), self.params[2 * i + 1])
            if i < self.n_layers - 1:
                h = relu(h)
        return h

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Tape-free forward pass with the same arithmetic as ``__call__``."""
        h = np.asarray(x, dtype=np.float64)
        for i in range(self.n_layers):
            h = h @ self.params[2 * i].value + self.params[2 * i + 1].value
            if i < self.n_layers - 1:
                h = h * (h > 0)
        return h

    def arrays(self) -> List[np.ndarray]:
        return [p.value for p in self.params]

    def load_arrays(self, arrays: Sequence[np.ndarray]) -> None:
        for p, a in zip(self.params, arrays, strict=True):
            if p.value.shape != a.shape:
                raise ValueError(f"{p.name}: shape {a.shape} != {p.value.shape}")
            p.value = np.array(a, dtype=np.float64)


def zero_grad(params: Iterable[Node]) -> None:
    for p in params:
        p.grad = None


class AdamState:
    def __init__(self, params: Sequence[Node], beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.t = 0


def adam_step(params: Sequence[Node], grads: Sequence[Optional[np.ndarray]], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update, applied in place to ``params``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.value)
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        p.value = p.value - lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps)


class Adam:
    def __init__(self, params: Sequence[Node], lr: float, **kwargs):
        self.params = list(params)
        self.lr = lr
        self.state = AdamState(self.params, **kwargs)

    def zero_grad(self):
        zero_grad(self.params)

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr)


# ---------------------------------------------------------------------------
# checkpoints: magic, u32 header length, JSON header, little-endian float64 blocks

MAGIC = b"SEALCKPT1"


def save_checkpoint(path: Union[str, Path], blocks: Dict[str, Mlp], header: Optional[dict] = None) -> None:
    head = dict(header or {})
    head["blocks"] = [{"name": name, "sizes": mlp.sizes} for name, mlp in blocks.items()]
    raw = json.dumps(head, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        for mlp in blocks.values():
            for a in mlp.arrays():
                f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path: Union[str, Path]) -> Tuple[dict, Dict[str, List[np.ndarray]]]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path} is not a checkpoint")
    off = len(MAGIC)
    (n,) = struct.unpack("<I", data[off:off + 4])
    off += 4
    header = json.loads(data[off:off + n])
    off += n
    blocks = {}
    for block in header["blocks"]:
        sizes = block["sizes"]
        arrays = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            for shape in ((fan_in, fan_out), (fan_out,)):
                count = int(np.prod(shape))
                arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).copy())
                off += 8 * count
        blocks[block["name"]] = arrays
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes")
    return header, blocks
