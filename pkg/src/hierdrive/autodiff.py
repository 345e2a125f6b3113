"""Reverse-mode automatic differentiation over numpy arrays.

Just enough machinery to train the attention networks: dense layers, ReLU,
stable softmax/log, reductions, broadcasting elementwise ops, and a
bias-corrected adaptive-moment optimizer.  A forward pass records a graph of
Node objects; backward() walks it once in reverse topological order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"HDCK"
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    pass


class UsageError(RuntimeError):
    pass


class CheckpointError(IOError):
    pass


# ---------------------------------------------------------------------------
# parameter storage
# ---------------------------------------------------------------------------


@dataclass
class ParamEntry:
    value: np.ndarray
    grad: np.ndarray
    m: np.ndarray
    v: np.ndarray
    trainable: bool = True


class ParamStore:
    """Named parameter arrays with paired gradient and moment slots."""

    def __init__(self):
        self.entries: dict[str, ParamEntry] = {}
        self.adam_t = 0

    def add(self, name: str, value, trainable: bool = True) -> None:
        if name in self.entries:
            raise UsageError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=float)
        self.entries[name] = ParamEntry(
            value=arr,
            grad=np.zeros_like(arr),
            m=np.zeros_like(arr),
            v=np.zeros_like(arr),
            trainable=trainable,
        )

    def __getitem__(self, name: str) -> ParamEntry:
        return self.entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def names(self) -> list[str]:
        return list(self.entries)

    def zero_grads(self) -> None:
        for e in self.entries.values():
            e.grad[...] = 0.0

    def node(self, name: str) -> "Node":
        e = self.entries[name]
        return Node(e.value, entry=e)

    def copy_values_from(self, other: "ParamStore") -> None:
        for name, e in self.entries.items():
            e.value[...] = other.entries[name].value

    def clone(self) -> "ParamStore":
        out = ParamStore()
        for name, e in self.entries.items():
            out.add(name, e.value.copy(), trainable=e.trainable)
            out.entries[name].m[...] = e.m
            out.entries[name].v[...] = e.v
        out.adam_t = self.adam_t
        return out


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected adaptive update of all trainable entries in place."""
    store.adam_t += 1
    t = store.adam_t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for e in store.entries.values():
        if not e.trainable:
            continue
        e.m[...] = beta1 * e.m + (1.0 - beta1) * e.grad
        e.v[...] = beta2 * e.v + (1.0 - beta2) * e.grad**2
        e.value[...] -= lr * (e.m / c1) / (np.sqrt(e.v / c2) + eps)


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------


class Node:
    """One value in the recorded computation graph."""

    __slots__ = ("value", "parents", "grad", "entry")

    def __init__(self, value, parents=(), entry=None):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents  # tuple of (Node, vjp callable)
        self.grad = None
        self.entry = entry

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    @property
    def shape(self):
        return self.value.shape


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(
        a.value + b.value,
        parents=(
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(g, b.value.shape)),
        ),
    )


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(
        a.value - b.value,
        parents=(
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(-g, b.value.shape)),
        ),
    )


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return Node(
        a.value * b.value,
        parents=(
            (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
        ),
    )


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.shape[-1] != b.value.shape[-2]:
        raise ShapeError(f"matmul mismatch {a.value.shape} @ {b.value.shape}")
    return Node(
        a.value @ b.value,
        parents=(
            (a, lambda g: _unbroadcast(g @ b.value.swapaxes(-1, -2), a.value.shape)),
            (b, lambda g: _unbroadcast(a.value.swapaxes(-1, -2) @ g, b.value.shape)),
        ),
    )


def relu(x) -> Node:
    x = as_node(x)
    mask = x.value > 0
    return Node(np.where(mask, x.value, 0.0), parents=((x, lambda g: g * mask),))


def log(x) -> Node:
    x = as_node(x)
    return Node(np.log(x.value), parents=((x, lambda g: g / x.value),))


def exp(x) -> Node:
    x = as_node(x)
    out = np.exp(x.value)
    return Node(out, parents=((x, lambda g: g * out),))


def npsum(x, axis=None, keepdims=False) -> Node:
    x = as_node(x)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, x.value.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, x.value.shape).copy()

    return Node(x.value.sum(axis=axis, keepdims=keepdims), parents=((x, vjp),))


def mean(x, axis=None, keepdims=False) -> Node:
    x = as_node(x)
    n = x.value.size if axis is None else x.value.shape[axis]
    return mul(npsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x, shape) -> Node:
    x = as_node(x)
    return Node(x.value.reshape(shape), parents=((x, lambda g: g.reshape(x.value.shape)),))


def concat(nodes, axis=-1) -> Node:
    nodes = [as_node(n) for n in nodes]
    sizes = [n.value.shape[axis] for n in nodes]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(k):
        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[k], offsets[k + 1])
            return g[tuple(sl)]

        return vjp

    return Node(
        np.concatenate([n.value for n in nodes], axis=axis),
        parents=tuple((n, make_vjp(k)) for k, n in enumerate(nodes)),
    )


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis of a plain array."""
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x) -> Node:
    x = as_node(x)
    out = softmax_rows(x.value)

    def vjp(g):
        return out * (g - (g * out).sum(axis=-1, keepdims=True))

    return Node(out, parents=((x, vjp),))


def log_softmax(x) -> Node:
    x = as_node(x)
    shifted = x.value - x.value.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(out)

    def vjp(g):
        return g - probs * g.sum(axis=-1, keepdims=True)

    return Node(out, parents=((x, vjp),))


def swap_last(x) -> Node:
    x = as_node(x)
    return Node(x.value.swapaxes(-1, -2), parents=((x, lambda g: g.swapaxes(-1, -2)),))


def backward(loss: Node) -> None:
    """Accumulate gradients of a scalar loss into all reachable ParamStore entries."""
    if loss.value.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    topo: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.value)
    for node in reversed(topo):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            g = vjp(node.grad)
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad += g
        if node.entry is not None:
            node.entry.grad += node.grad


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


def init_mlp(store: ParamStore, prefix: str, dims, rng: np.random.Generator) -> None:
    """Register weights/biases for a chain of dense layers.

    Hidden weights use uniform fan scaling (+-sqrt(6/(fan_in+fan_out))),
    biases start at zero.
    """
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        store.add(f"{prefix}.w{i}", rng.uniform(-bound, bound, (fan_in, fan_out)))
        store.add(f"{prefix}.b{i}", np.zeros(fan_out))


def mlp_layer_count(store: ParamStore, prefix: str) -> int:
    n = 0
    while f"{prefix}.w{n}" in store:
        n += 1
    return n


def mlp_forward(store: ParamStore, prefix: str, x) -> Node:
    """Dense layers with rectified-linear hidden activations, linear output."""
    x = as_node(x)
    n_layers = mlp_layer_count(store, prefix)
    if n_layers == 0:
        raise UsageError(f"no layers registered under {prefix!r}")
    w0 = store[f"{prefix}.w0"]
    if x.value.shape[-1] != w0.value.shape[0]:
        raise ShapeError(f"input width {x.value.shape[-1]} != first layer {w0.value.shape[0]}")
    h = x
    for i in range(n_layers):
        h = add(matmul(h, store.node(f"{prefix}.w{i}")), store.node(f"{prefix}.b{i}"))
        if i < n_layers - 1:
            h = relu(h)
    return h


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def grad_check(
    loss_fn,
    store: ParamStore,
    eps: float = 1e-5,
    n_coords: int = 64,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks a random subset of at least ``n_coords`` trainable coordinates.
    Coordinates where both gradients are below 1e-7 are skipped as numerically
    silent.
    """
    rng = rng or np.random.default_rng(0)
    store.zero_grads()
    backward(loss_fn())
    analytic = {name: e.grad.copy() for name, e in store.entries.items() if e.trainable}

    coords = []
    for name, e in store.entries.items():
        if e.trainable:
            coords.extend((name, i) for i in range(e.value.size))
    if len(coords) > n_coords:
        picks = rng.choice(len(coords), size=n_coords, replace=False)
        coords = [coords[i] for i in picks]

    worst = 0.0
    for name, i in coords:
        flat = store[name].value.reshape(-1)
        keep = flat[i]
        flat[i] = keep + eps
        f_plus = float(loss_fn().value)
        flat[i] = keep - eps
        f_minus = float(loss_fn().value)
        flat[i] = keep
        fd = (f_plus - f_minus) / (2.0 * eps)
        an = float(analytic[name].reshape(-1)[i])
        if abs(fd) < 1e-7 and abs(an) < 1e-7:
            continue
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an)))
    return worst


# ---------------------------------------------------------------------------
# checkpoints: json header + raw little-endian float64 blobs
# ---------------------------------------------------------------------------


def save_checkpoint(store: ParamStore, path, extra: dict | None = None) -> None:
    header = {
        "version": CHECKPOINT_VERSION,
        "adam_t": store.adam_t,
        "params": [
            {"name": name, "shape": list(e.value.shape), "trainable": e.trainable}
            for name, e in store.entries.items()
        ],
        "extra": extra or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for e in store.entries.values():
            f.write(e.value.astype("<f8").tobytes())
            f.write(e.m.astype("<f8").tobytes())
            f.write(e.v.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    try:
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != CHECKPOINT_MAGIC:
                raise CheckpointError(f"{path}: not a checkpoint file")
            (hlen,) = struct.unpack("<I", f.read(4))
            header = json.loads(f.read(hlen).decode("utf-8"))
            if header["version"] != CHECKPOINT_VERSION:
                raise CheckpointError(f"unsupported checkpoint version {header['version']}")
            store = ParamStore()
            for spec in header["params"]:
                shape = tuple(spec["shape"])
                n = int(np.prod(shape)) if shape else 1
                vals = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape).copy()
                m = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape).copy()
                v = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape).copy()
                store.add(spec["name"], vals, trainable=spec["trainable"])
                store[spec["name"]].m[...] = m
                store[spec["name"]].v[...] = v
            store.adam_t = header["adam_t"]
            return store, header.get("extra", {})
    except (OSError, struct.error, json.JSONDecodeError, KeyError) as exc:
        raise CheckpointError(f"cannot load checkpoint {path}: {exc}") from exc
