"""Minimal reverse-mode differentiation over dense 2-D float64 matrices.

Every value in the graph is a 2-D C-contiguous float64 ndarray (a matrix;
vectors are n x 1 or 1 x n). A Node records the operation that produced
it, references to its parent nodes, and a closure mapping the output
gradient to per-parent gradients. ``backward`` walks the recorded graph
in reverse creation order, which is a valid topological order because
parents always exist before their children; the fixed order makes
gradient accumulation bitwise deterministic.

Each graph is confined to one logical execution stream; distinct graphs
(e.g. different samples in a batch) are independent. Gradient maps
returned by ``backward`` are freshly allocated and never mutated.
"""

from __future__ import annotations

import itertools
import warnings

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ContractError, DimensionError, DomainError, SingularMatrixError

PIVOT_TOL = 1e-12

_ids = itertools.count()


def as_matrix(value) -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting non-finite entries."""
    arr = np.ascontiguousarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got {arr.ndim}-d array")
    if arr.size and not np.all(np.isfinite(arr)):
        raise DomainError("matrix contains non-finite values")
    return arr


class Node:
    """One value in a computation graph.

    ``grad_fn`` takes the gradient of the final scalar w.r.t. this node's
    value and returns one gradient array (or None) per parent.
    """

    __slots__ = ("value", "parents", "grad_fn", "tape_id")

    def __init__(self, value, parents=(), grad_fn=None):
        self.value = value
        self.parents = parents
        self.grad_fn = grad_fn
        self.tape_id = next(_ids)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(shape={self.value.shape}, id={self.tape_id})"


def constant(value) -> Node:
    """Leaf node that never receives a gradient."""
    return Node(as_matrix(value))


def parameter(value) -> Node:
    """Leaf node holding trainable values; alias of constant, kept for intent."""
    return Node(as_matrix(value))


def _node(value, parents, grad_fn) -> Node:
    return Node(value, tuple(parents), grad_fn)


# ---------------------------------------------------------------------------
# primitives

def matmul(a: Node, b: Node) -> Node:
    if a.value.shape[1] != b.value.shape[0]:
        raise DimensionError(
            f"matmul shapes {a.value.shape} x {b.value.shape} do not chain")
    av, bv = a.value, b.value

    def grad(g):
        return g @ bv.T, av.T @ g

    return _node(av @ bv, (a, b), grad)


def transpose(a: Node) -> Node:
    def grad(g):
        return (np.ascontiguousarray(g.T),)

    return _node(np.ascontiguousarray(a.value.T), (a,), grad)


def _binary(a: Node, b, forward, grad_ab, grad_scalar):
    """Shared plumbing for add/sub/mul with Node or scalar second operand."""
    if isinstance(b, Node):
        if a.value.shape != b.value.shape:
            raise DimensionError(
                f"elementwise shapes {a.value.shape} vs {b.value.shape} differ")
        return _node(forward(a.value, b.value), (a, b), grad_ab(a.value, b.value))
    s = float(b)
    return _node(forward(a.value, s), (a,), grad_scalar(a.value, s))


def add(a: Node, b) -> Node:
    return _binary(
        a, b, lambda x, y: x + y,
        lambda x, y: lambda g: (g, g),
        lambda x, s: lambda g: (g,))


def sub(a: Node, b) -> Node:
    return _binary(
        a, b, lambda x, y: x - y,
        lambda x, y: lambda g: (g, -g),
        lambda x, s: lambda g: (g,))


def mul(a: Node, b) -> Node:
    return _binary(
        a, b, lambda x, y: x * y,
        lambda x, y: lambda g: (g * y, g * x),
        lambda x, s: lambda g: (g * s,))


def scale(a: Node, s: float) -> Node:
    return mul(a, float(s))


def relu(a: Node) -> Node:
    mask = a.value > 0

    def grad(g):
        return (g * mask,)

    return _node(np.where(mask, a.value, 0.0), (a,), grad)


# Margin clamp x -> max(0, x); subgradient at 0 is 0, matching a loss that
# is exactly zero on the margin boundary.
hinge = relu


def exp(a: Node) -> Node:
    out = np.exp(a.value)

    def grad(g):
        return (g * out,)

    return _node(out, (a,), grad)


def log(a: Node) -> Node:
    if np.any(a.value <= 0):
        raise DomainError("log of non-positive value")
    av = a.value

    def grad(g):
        return (g / av,)

    return _node(np.log(av), (a,), grad)


def square(a: Node) -> Node:
    av = a.value

    def grad(g):
        return (g * (2.0 * av),)

    return _node(av * av, (a,), grad)


def sqrt(a: Node) -> Node:
    """Elementwise square root; gradient at an exact zero is defined as 0.

    The zero case arises structurally (distance of a point to itself);
    the 0 subgradient keeps downstream hinge losses NaN-free.
    """
    if np.any(a.value < 0):
        raise DomainError("sqrt of negative value")
    out = np.sqrt(a.value)

    def grad(g):
        denom = np.where(out > 0, 2.0 * out, 1.0)
        return (np.where(out > 0, g / denom, 0.0),)

    return _node(out, (a,), grad)


def _check_axis(a: Node, axis):
    if axis not in (None, 0, 1):
        raise ContractError(f"axis must be None, 0 or 1, got {axis!r}")
    n, m = a.value.shape
    if (axis in (None, 0) and n == 0) or (axis in (None, 1) and m == 0):
        raise DomainError("reduction over an empty axis")


def reduce_sum(a: Node, axis=None) -> Node:
    _check_axis(a, axis)
    shape = a.value.shape

    def grad(g):
        return (np.broadcast_to(g, shape).copy() if axis is not None
                else np.full(shape, g[0, 0]),)

    out = np.sum(a.value, axis=axis, keepdims=True)
    if axis is None:
        out = out.reshape(1, 1)
    return _node(out, (a,), grad)


def reduce_mean(a: Node, axis=None) -> Node:
    _check_axis(a, axis)
    n, m = a.value.shape
    count = {None: n * m, 0: n, 1: m}[axis]
    shape = (n, m)

    def grad(g):
        full = (np.broadcast_to(g, shape) if axis is not None
                else np.full(shape, g[0, 0]))
        return (full / count,)

    out = np.mean(a.value, axis=axis, keepdims=True)
    if axis is None:
        out = out.reshape(1, 1)
    return _node(out, (a,), grad)


def reduce_max(a: Node, axis=None) -> Node:
    """Max reduction; the gradient routes to the (first) argmax entry only."""
    _check_axis(a, axis)
    av = a.value
    n, m = av.shape
    if axis is None:
        flat = int(np.argmax(av))
        idx = np.unravel_index(flat, av.shape)

        def grad(g):
            out = np.zeros_like(av)
            out[idx] = g[0, 0]
            return (out,)

        return _node(av[idx].reshape(1, 1).copy(), (a,), grad)

    arg = np.argmax(av, axis=axis)
    if axis == 0:
        cols = np.arange(m)

        def grad(g):
            out = np.zeros_like(av)
            out[arg, cols] = g[0, :]
            return (out,)

        return _node(av[arg, cols].reshape(1, m).copy(), (a,), grad)

    rows = np.arange(n)

    def grad(g):
        out = np.zeros_like(av)
        out[rows, arg] = g[:, 0]
        return (out,)

    return _node(av[rows, arg].reshape(n, 1).copy(), (a,), grad)


def concat_cols(a: Node, b: Node) -> Node:
    if a.value.shape[0] != b.value.shape[0]:
        raise DimensionError(
            f"concat_cols row counts {a.value.shape[0]} vs {b.value.shape[0]} differ")
    ca = a.value.shape[1]

    def grad(g):
        return np.ascontiguousarray(g[:, :ca]), np.ascontiguousarray(g[:, ca:])

    return _node(np.hstack([a.value, b.value]), (a, b), grad)


def slice_cols(a: Node, start: int, stop: int) -> Node:
    m = a.value.shape[1]
    if not (0 <= start <= stop <= m):
        raise ContractError(f"column slice [{start}:{stop}] outside 0..{m}")

    def grad(g):
        out = np.zeros_like(a.value)
        out[:, start:stop] = g
        return (out,)

    return _node(np.ascontiguousarray(a.value[:, start:stop]), (a,), grad)


def gather_rows(a: Node, indices) -> Node:
    """Select rows by index; duplicate indices accumulate in the backward pass."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ContractError("row indices must be a flat sequence")
    n = a.value.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ContractError(f"row index out of range 0..{n - 1}")

    def grad(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)

    return _node(np.ascontiguousarray(a.value[idx]), (a,), grad)


def linear_solve(a: Node, b: Node) -> Node:
    """Solve A X = B for X with A square and nonsingular.

    The LU factorization is computed once and reused by the adjoint solve
    in the backward pass: dB = A^-T G, dA = -dB X^T.
    """
    n, m = a.value.shape
    if n != m:
        raise DimensionError(f"linear_solve needs a square matrix, got {n}x{m}")
    if b.value.shape[0] != n:
        raise DimensionError(
            f"linear_solve rhs has {b.value.shape[0]} rows, expected {n}")
    with warnings.catch_warnings():
        # the pivot check below raises a typed error instead
        warnings.simplefilter("ignore")
        lu, piv = lu_factor(a.value, check_finite=False)
    diag = np.abs(np.diag(lu))
    bad = np.flatnonzero(diag <= PIVOT_TOL)
    if bad.size:
        k = int(bad[0])
        raise SingularMatrixError(
            f"matrix is singular: pivot {k} has magnitude {diag[k]:.3e}")
    x = lu_solve((lu, piv), b.value, check_finite=False)

    def grad(g):
        gb = lu_solve((lu, piv), g, trans=1, check_finite=False)
        return -gb @ x.T, gb

    return _node(np.ascontiguousarray(x), (a, b), grad)


def _softmax(v):
    shifted = v - v.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def row_softmax(a: Node) -> Node:
    """Row-wise softmax, stabilized by subtracting each row's maximum."""
    p = _softmax(a.value)

    def grad(g):
        return (p * (g - np.sum(g * p, axis=1, keepdims=True)),)

    return _node(p, (a,), grad)


def row_log_softmax(a: Node) -> Node:
    """Row-wise log-softmax; keeps cross-entropy finite for saturated inputs."""
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    p = np.exp(out)

    def grad(g):
        return (g - p * np.sum(g, axis=1, keepdims=True),)

    return _node(out, (a,), grad)


# ---------------------------------------------------------------------------
# reverse pass

def backward(loss: Node, wrt) -> dict:
    """Gradient of a scalar loss w.r.t. each node in ``wrt``.

    Returns a dict keyed by node identity; nodes not reachable from the
    loss get an all-zero gradient. Accumulation follows reverse creation
    order, so repeated calls produce bitwise-identical maps.
    """
    if loss.value.shape != (1, 1):
        raise ContractError(
            f"backward needs a 1x1 loss, got shape {loss.value.shape}")
    wrt = list(wrt)

    reachable = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node.tape_id in reachable:
            continue
        reachable[node.tape_id] = node
        stack.extend(node.parents)

    grads = {loss.tape_id: np.ones((1, 1))}
    for node in sorted(reachable.values(), key=lambda n: n.tape_id, reverse=True):
        g = grads.get(node.tape_id)
        if g is None or node.grad_fn is None:
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            if pg is None:
                continue
            acc = grads.get(parent.tape_id)
            grads[parent.tape_id] = pg.copy() if acc is None else acc + pg

    return {
        node: grads.get(node.tape_id, np.zeros_like(node.value)).copy()
        for node in wrt
    }
