"""Reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run tape: each operation returns a :class:`Node` recording its
parents and a closure that maps the output gradient to parent gradients.
:func:`backward` walks the graph reachable from a scalar loss once, in
reverse topological order, accumulating gradients.

Scalar losses only, first derivatives only. Values are never mutated after
construction; a tape belongs to one thread.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, DimensionError, DomainError

Array = np.ndarray


def _as_value(x) -> Array:
    return np.asarray(x, dtype=np.float64)


class Node:
    """A tensor participating in a differentiable computation graph.

    Leaves default to ``requires_grad=True``; data that never needs a
    gradient (windows, targets, dropout masks) is wrapped with
    :func:`constant` so expensive backward branches can be skipped.
    """

    __slots__ = ("value", "grad", "parents", "op", "_backward", "requires_grad")

    def __init__(
        self,
        value,
        parents: Sequence["Node"] = (),
        op: str = "leaf",
        backward: Callable[[Array], tuple] | None = None,
        requires_grad: bool | None = None,
    ):
        self.value = _as_value(value)
        self.grad: Array | None = None
        self.parents = tuple(parents)
        self.op = op
        self._backward = backward
        if requires_grad is None:
            requires_grad = (
                any(p.requires_grad for p in self.parents) if self.parents else True
            )
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.value.shape})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_node(x) -> Node:
    """Lift a raw array or scalar into a leaf Node (identity on Nodes)."""
    return x if isinstance(x, Node) else Node(x)


def constant(x) -> Node:
    """A leaf that never accumulates gradients (inputs, targets, masks)."""
    return Node(x, requires_grad=False)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a gradient over the axes numpy broadcast to reach ``grad.shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    out = a.value + b.value

    def bwd(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return Node(out, (a, b), "add", bwd)


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    out = a.value - b.value

    def bwd(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)

    return Node(out, (a, b), "sub", bwd)


def neg(a) -> Node:
    a = as_node(a)
    return Node(-a.value, (a,), "neg", lambda g: (-g,))


def mul(a, b) -> Node:
    """Elementwise (broadcasting) product."""
    a, b = as_node(a), as_node(b)
    out = a.value * b.value

    def bwd(g):
        return (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        )

    return Node(out, (a, b), "mul", bwd)


def matmul(a, b):
    """Matrix product of 2-D operands.

    Returns a plain array when both inputs are plain; a Node if either input
    participates in a graph.
    """
    want_node = isinstance(a, Node) or isinstance(b, Node)
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise DimensionError(
            f"matmul requires shapes (m,k) x (k,n); got {av.shape} and {bv.shape}"
        )

    def bwd(g):
        return (
            g @ bv.T if a.requires_grad else None,
            av.T @ g if b.requires_grad else None,
        )

    out_node = Node(av @ bv, (a, b), "matmul", bwd)
    return out_node if want_node else out_node.value


def affine(x, w, b) -> Node:
    """Fused x @ w + b with a broadcastable bias (one graph node)."""
    x, w, b = as_node(x), as_node(w), as_node(b)
    xv, wv = x.value, w.value
    if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[0]:
        raise DimensionError(
            f"affine requires shapes (m,k) x (k,n); got {xv.shape} and {wv.shape}"
        )

    def bwd(g):
        return (
            g @ wv.T if x.requires_grad else None,
            xv.T @ g if w.requires_grad else None,
            _unbroadcast(g, b.value.shape) if b.requires_grad else None,
        )

    return Node(xv @ wv + b.value, (x, w, b), "affine", bwd)


def transpose(a) -> Node:
    a = as_node(a)
    if a.value.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got {a.value.shape}")
    return Node(a.value.T, (a,), "transpose", lambda g: (g.T,))


def relu(a) -> Node:
    a = as_node(a)
    out = np.maximum(a.value, 0.0)

    def bwd(g):
        return (g * (a.value > 0),)

    return Node(out, (a,), "relu", bwd)


def sigmoid(a) -> Node:
    a = as_node(a)
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return Node(out, (a,), "sigmoid", bwd)


def tensor_sum(a) -> Node:
    a = as_node(a)

    def bwd(g):
        return (np.full(a.value.shape, float(g)),)

    return Node(a.value.sum(), (a,), "sum", bwd)


def mean(a) -> Node:
    a = as_node(a)
    size = a.value.size

    def bwd(g):
        return (np.full(a.value.shape, float(g) / size),)

    return Node(a.value.mean(), (a,), "mean", bwd)


def reshape(a, shape) -> Node:
    a = as_node(a)
    out = a.value.reshape(shape)

    def bwd(g):
        return (g.reshape(a.value.shape),)

    return Node(out, (a,), "reshape", bwd)


def select(a, index: int, axis: int) -> Node:
    """Slice one index out of an axis (the inverse scatters the gradient)."""
    a = as_node(a)
    out = np.take(a.value, index, axis=axis)

    def bwd(g):
        full = np.zeros_like(a.value)
        sl = [slice(None)] * a.value.ndim
        sl[axis] = index
        full[tuple(sl)] = g
        return (full,)

    return Node(out, (a,), "select", bwd)


def stack(nodes: Sequence[Node], axis: int = 0) -> Node:
    nodes = [as_node(n) for n in nodes]
    out = np.stack([n.value for n in nodes], axis=axis)

    def bwd(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(nodes)))

    return Node(out, tuple(nodes), "stack", bwd)


def concat(nodes: Sequence[Node], axis: int = 0) -> Node:
    nodes = [as_node(n) for n in nodes]
    sizes = [n.value.shape[axis] for n in nodes]
    out = np.concatenate([n.value for n in nodes], axis=axis)
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, offsets, axis=axis))

    return Node(out, tuple(nodes), "concat", bwd)


def spectral_gate(signal, gate) -> Node:
    """Filter a real signal through per-bin gains on its half spectrum.

    Computes irfft(rfft(x) * gate) along the last axis. ``gate`` is a real
    vector of length floor(L/2)+1 shared across leading axes of ``signal``.
    Differentiable in both arguments: the signal backward uses the fact that
    the gated transform is a symmetric linear map, and the gate backward
    accumulates Re(S_f * conj(G_f)) with half-spectrum weights.
    """
    s, g = as_node(signal), as_node(gate)
    x, gv = s.value, g.value
    if x.ndim < 1:
        raise DimensionError("spectral_gate expects at least a 1-D signal")
    length = x.shape[-1]
    nbins = length // 2 + 1
    if gv.shape != (nbins,):
        raise DimensionError(
            f"gate length {gv.shape} does not match the {nbins} half-spectrum "
            f"bins of a length-{length} signal"
        )
    spec = np.fft.rfft(x, axis=-1)
    out = np.fft.irfft(spec * gv, n=length, axis=-1)

    from .fft import half_spectrum_weights

    weights = half_spectrum_weights(length) / length

    def bwd(gout):
        gspec = np.fft.rfft(gout, axis=-1)
        grad_signal = None
        if s.requires_grad:
            grad_signal = np.fft.irfft(gspec * gv, n=length, axis=-1)
        grad_gate = None
        if g.requires_grad:
            per_bin = (spec * np.conj(gspec)).real * weights
            if per_bin.ndim > 1:
                per_bin = per_bin.sum(axis=tuple(range(per_bin.ndim - 1)))
            grad_gate = per_bin
        return grad_signal, grad_gate

    return Node(out, (s, g), "spectral_gate", bwd)


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order  # parents precede children


def backward(loss: Node) -> dict[Node, Array]:
    """Reverse sweep from a scalar loss.

    Populates ``grad`` on every node reachable from ``loss`` and returns a
    map from each reachable leaf node (the parameters and inputs) to its
    gradient.
    """
    if not isinstance(loss, Node):
        raise ContractError("backward expects a Node")
    if loss.value.size != 1:
        raise ContractError(
            f"backward requires a scalar loss, got shape {loss.value.shape}"
        )
    order = _topo_order(loss)
    grads: dict[int, Array] = {id(loss): np.ones_like(loss.value)}
    leaf_map: dict[Node, Array] = {}
    for node in reversed(order):
        if not node.requires_grad:
            continue
        g = grads.get(id(node))
        if g is None:
            # A stray parent recorded before the loss subgraph diverged.
            g = np.zeros_like(node.value)
        node.grad = g
        if node._backward is not None:
            parent_grads = node._backward(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
        elif not node.parents:
            leaf_map[node] = g
    return leaf_map


def finite_difference_grad(f, x, eps: float = 1e-5) -> Array:
    """Central-difference gradient of a scalar function, coordinate by coordinate."""
    if eps <= 0:
        raise DomainError(f"eps must be positive, got {eps}")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(f(x))
        flat[i] = orig - eps
        f_minus = float(f(x))
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad
