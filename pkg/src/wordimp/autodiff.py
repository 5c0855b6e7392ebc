"""Reverse-mode automatic differentiation over dense float64 arrays.

A minimal define-by-run engine: every operation produces a Node holding
the computed value, a zero-initialized gradient buffer, and local
gradient rules pointing back at its parents.  Graphs are rebuilt per
call, which keeps variable-length sequence models trivial to express.

Values are plain C-contiguous numpy float64 arrays.  Broadcasting is
restricted to the leading axes: two shapes are add/mul compatible when
they are equal or one is a trailing suffix of the other (a scalar is a
suffix of everything).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for an operation."""


class NumericError(ArithmeticError):
    """A computation produced or consumed a non-finite value."""


def _as_value(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)  # note: would promote 0-d, hence the guard
    return arr


def _suffix_compatible(big: tuple[int, ...], small: tuple[int, ...]) -> bool:
    return big[len(big) - len(small):] == small


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # collapse gradient of a broadcast operand back to its own shape
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    return g


class Node:
    """One vertex of the computation graph.

    ``parents`` is a tuple of ``(parent_node, rule)`` pairs where ``rule``
    maps the upstream gradient of this node to the gradient contribution
    for that parent.  ``grad`` accumulates across ``backward`` calls until
    explicitly zeroed, so calling ``backward`` twice doubles gradients.
    """

    __slots__ = ("value", "grad", "parents", "op")

    def __init__(self, value, parents=(), op="leaf"):
        self.value = _as_value(value)
        self.grad = np.zeros_like(self.value)
        self.parents = tuple(parents)
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(wrap(other)))

    def __rsub__(self, other):
        return add(wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return subtensor(self, key)

    def sum(self):
        return total(self)

    def mean(self):
        return mul(total(self), 1.0 / self.value.size)

    def backward(self):
        backward(self)


def wrap(x) -> Node:
    return x if isinstance(x, Node) else Node(x, op="const")


def _binary_shapes(a: Node, b: Node, op: str) -> None:
    if a.shape == b.shape:
        return
    if len(a.shape) > len(b.shape) and _suffix_compatible(a.shape, b.shape):
        return
    if len(b.shape) > len(a.shape) and _suffix_compatible(b.shape, a.shape):
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def add(a, b) -> Node:
    a, b = wrap(a), wrap(b)
    _binary_shapes(a, b, "add")
    return Node(
        a.value + b.value,
        parents=(
            (a, lambda g: _reduce_to(g, a.shape)),
            (b, lambda g: _reduce_to(g, b.shape)),
        ),
        op="add",
    )


def mul(a, b) -> Node:
    a, b = wrap(a), wrap(b)
    _binary_shapes(a, b, "mul")
    return Node(
        a.value * b.value,
        parents=(
            (a, lambda g: _reduce_to(g * b.value, a.shape)),
            (b, lambda g: _reduce_to(g * a.value, b.shape)),
        ),
        op="mul",
    )


def neg(a) -> Node:
    a = wrap(a)
    return Node(-a.value, parents=((a, lambda g: -g),), op="neg")


def matmul(a, b) -> Node:
    a, b = wrap(a), wrap(b)
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2):
        raise ShapeError(f"matmul: only 1-D/2-D operands, got {av.shape} and {bv.shape}")
    if av.shape[-1] != bv.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ for {av.shape} and {bv.shape}")

    if av.ndim == 2 and bv.ndim == 2:
        da = lambda g: g @ bv.T
        db = lambda g: av.T @ g
    elif av.ndim == 2 and bv.ndim == 1:
        da = lambda g: np.outer(g, bv)
        db = lambda g: av.T @ g
    elif av.ndim == 1 and bv.ndim == 2:
        da = lambda g: bv @ g
        db = lambda g: np.outer(av, g)
    else:  # 1-D dot product, scalar result
        da = lambda g: g * bv
        db = lambda g: g * av
    return Node(av @ bv, parents=((a, da), (b, db)), op="matmul")


def concat(nodes: Sequence, axis: int = -1) -> Node:
    """Concatenate along one axis (defaults to the last)."""
    nodes = [wrap(n) for n in nodes]
    if not nodes:
        raise ShapeError("concat: need at least one operand")
    ndim = nodes[0].value.ndim
    if any(n.value.ndim != ndim for n in nodes):
        raise ShapeError("concat: operands must have equal rank")
    ax = axis % ndim if ndim else 0
    out = np.concatenate([n.value for n in nodes], axis=ax)
    parents = []
    offset = 0
    for n in nodes:
        width = n.value.shape[ax]
        key = tuple(
            slice(offset, offset + width) if d == ax else slice(None) for d in range(ndim)
        )
        parents.append((n, lambda g, key=key: g[key]))
        offset += width
    return Node(out, parents=tuple(parents), op="concat")


def stack(nodes: Sequence) -> Node:
    """Stack equal-shaped operands along a new leading axis."""
    nodes = [wrap(n) for n in nodes]
    if not nodes:
        raise ShapeError("stack: need at least one operand")
    shape = nodes[0].shape
    if any(n.shape != shape for n in nodes):
        raise ShapeError("stack: operands must share one shape")
    out = np.stack([n.value for n in nodes], axis=0)
    parents = tuple((n, lambda g, i=i: g[i]) for i, n in enumerate(nodes))
    return Node(out, parents=parents, op="stack")


def sigmoid(x) -> Node:
    x = wrap(x)
    z = np.exp(-np.abs(x.value))
    s = np.where(x.value >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return Node(s, parents=((x, lambda g: g * s * (1.0 - s)),), op="sigmoid")


def tanh(x) -> Node:
    x = wrap(x)
    t = np.tanh(x.value)
    return Node(t, parents=((x, lambda g: g * (1.0 - t * t)),), op="tanh")


def maximum(a, b) -> Node:
    """Pointwise max; on ties the gradient is routed to the first operand."""
    a, b = wrap(a), wrap(b)
    if a.shape != b.shape:
        raise ShapeError(f"maximum: incompatible shapes {a.shape} and {b.shape}")
    take_a = (a.value >= b.value).astype(np.float64)
    return Node(
        np.maximum(a.value, b.value),
        parents=((a, lambda g: g * take_a), (b, lambda g: g * (1.0 - take_a))),
        op="maximum",
    )


def logsumexp(x) -> Node:
    """log(sum(exp(x))) over the last axis, max-shifted for overflow safety."""
    x = wrap(x)
    v = x.value
    if v.ndim == 0:
        raise ShapeError("logsumexp: operand must have at least one axis")
    m = v.max(axis=-1, keepdims=True)
    e = np.exp(v - m)
    s = e.sum(axis=-1, keepdims=True)
    out = np.squeeze(m + np.log(s), axis=-1)
    soft = e / s
    return Node(out, parents=((x, lambda g: g[..., np.newaxis] * soft),), op="logsumexp")


def subtensor(x, key) -> Node:
    """Basic indexing (ints and slices); gradients scatter back in place."""
    x = wrap(x)
    out = np.array(x.value[key], dtype=np.float64)

    def dx(g):
        buf = np.zeros_like(x.value)
        buf[key] = g
        return buf

    return Node(out, parents=((x, dx),), op="slice")


def total(x) -> Node:
    x = wrap(x)
    return Node(
        x.value.sum(), parents=((x, lambda g: g * np.ones_like(x.value)),), op="sum"
    )


def transpose(x) -> Node:
    x = wrap(x)
    if x.value.ndim != 2:
        raise ShapeError(f"transpose: need a 2-D operand, got shape {x.shape}")
    return Node(x.value.T, parents=((x, lambda g: g.T),), op="transpose")


def dropout(x, p: float, rng: np.random.Generator) -> Node:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    x = wrap(x)
    if p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return Node(x.value * mask, parents=((x, lambda g: g * mask),), op="dropout")


def _topo_order(root: Node) -> list[Node]:
    # iterative DFS; sentence graphs exceed the recursion limit
    seen: set[int] = set()
    order: list[Node] = []
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order  # parents precede consumers; root is last


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into every reachable node's grad.

    The loss must be scalar-shaped.  Contributions add across fan-out and
    across repeated calls (no implicit zeroing).
    """
    if loss.value.shape != ():
        raise ValueError(f"backward requires a scalar loss, got shape {loss.value.shape}")
    order = _topo_order(loss)
    upstream: dict[Node, np.ndarray] = {loss: np.ones(())}
    for node in reversed(order):
        g = upstream.pop(node, None)
        if g is None:
            continue
        # np.asarray keeps 0-d grads as arrays (numpy scalarizes 0-d sums)
        node.grad = np.asarray(node.grad + g, dtype=np.float64)
        for parent, rule in node.parents:
            contrib = rule(g)
            if parent in upstream:
                upstream[parent] = upstream[parent] + contrib
            else:
                upstream[parent] = contrib


def zero_gradients(nodes) -> None:
    for n in nodes:
        n.grad[...] = 0.0


def gradient_check(f: Callable[[Node], Node], theta, epsilon: float = 1e-5) -> float:
    """Compare analytic gradients of f against central finite differences.

    f maps a Node wrapping the parameter tensor to a scalar Node.  Returns
    the worst relative error, using max(|fd|, |analytic|, 1e-8) as the
    denominator per coordinate.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ValueError(f"epsilon must be in (0, 1e-2], got {epsilon}")
    theta = _as_value(theta).copy()
    root = Node(theta.copy(), op="param")
    loss = f(root)
    if not np.isfinite(loss.value):
        raise NumericError("objective evaluated to a non-finite value")
    backward(loss)
    analytic = root.grad.reshape(-1)

    flat = theta.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        f_plus = float(f(Node(theta.copy())).value)
        flat[i] = orig - epsilon
        f_minus = float(f(Node(theta.copy())).value)
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError("objective evaluated to a non-finite value")
        fd = (f_plus - f_minus) / (2.0 * epsilon)
        err = abs(fd - analytic[i]) / max(abs(fd), abs(analytic[i]), 1e-8)
        worst = max(worst, err)
    return worst


def gradient_check_params(
    build_loss: Callable[[], Node],
    params: dict[str, Node],
    epsilon: float = 1e-5,
) -> dict[str, float]:
    """Finite-difference check across a dict of named parameter Nodes.

    build_loss must rebuild the loss graph from the params' current values
    and be deterministic across calls.  Returns the worst relative error
    per parameter name.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ValueError(f"epsilon must be in (0, 1e-2], got {epsilon}")
    zero_gradients(params.values())
    loss = build_loss()
    if not np.isfinite(loss.value):
        raise NumericError("objective evaluated to a non-finite value")
    backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items()}

    errors: dict[str, float] = {}
    for name, p in params.items():
        flat = p.value.reshape(-1)
        ana = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = float(build_loss().value)
            flat[i] = orig - epsilon
            f_minus = float(build_loss().value)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(f"objective non-finite while perturbing {name}")
            fd = (f_plus - f_minus) / (2.0 * epsilon)
            err = abs(fd - ana[i]) / max(abs(fd), abs(ana[i]), 1e-8)
            worst = max(worst, err)
        errors[name] = worst
    zero_gradients(params.values())
    return errors
