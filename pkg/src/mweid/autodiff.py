"""Minimal reverse-mode automatic differentiation over float64 arrays.

Each operation builds a Tensor node holding its forward value and the
vector-Jacobian products that route adjoints to its inputs. backward()
walks the graph once in reverse topological order, accumulating
gradients into Parameter leaves; the graph itself is ephemeral (rebuilt
by every forward pass), so repeated backward calls over shared
subgraphs simply sum their contributions.

Broadcasting is deliberately restricted to a trailing-axis vector
(bias-style) in add/mul; everything else requires exact shapes.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class IndexOutOfVocab(ValueError):
    """An embedding id falls outside the table."""


class NotScalarLoss(ValueError):
    """backward() was asked to differentiate a non-scalar."""


_debug_checks = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle per-operation finiteness checks (off by default)."""
    global _debug_checks
    _debug_checks = enabled


def _check_finite(data: np.ndarray, op: str) -> None:
    if _debug_checks and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"{op} produced a non-finite value")


class Tensor:
    """A float64 array plus the backward closures that produced it.

    ``vjps`` is a tuple of (parent, fn) pairs where fn maps this node's
    adjoint to the parent's adjoint contribution. Leaves have no vjps;
    leaves with requires_grad accumulate into ``grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "vjps", "op")

    def __init__(self, data, requires_grad: bool = False, vjps=(), op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.vjps = tuple(vjps)
        self.op = op
        _check_finite(self.data, op)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"


class Parameter(Tensor):
    """A named trainable leaf tensor."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True, op="param")
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.shape})"


def tensor(data) -> Tensor:
    return Tensor(data)


def _node(data, vjps, op) -> Tensor:
    return Tensor(data, vjps=vjps, op=op)


def _require_2d(x: Tensor, op: str) -> None:
    if x.data.ndim != 2:
        raise ShapeMismatch(f"{op} expects a 2-d tensor, got shape {x.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_2d(a, "matmul")
    _require_2d(b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    a_data, b_data = a.data, b.data
    return _node(a_data @ b_data,
                 ((a, lambda g: g @ b_data.T),
                  (b, lambda g: a_data.T @ g)),
                 "matmul")


def transpose(x: Tensor) -> Tensor:
    _require_2d(x, "transpose")
    return _node(x.data.T, ((x, lambda g: g.T),), "transpose")


def _broadcast_pair(a: Tensor, b: Tensor, op: str):
    """Allow identical shapes, or b a vector broadcast over a's rows."""
    if a.shape == b.shape:
        return None
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return "rows"
    raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    mode = _broadcast_pair(a, b, "add")
    if mode is None:
        vjp_b = lambda g: g
    else:
        vjp_b = lambda g: g.sum(axis=0)
    return _node(a.data + b.data, ((a, lambda g: g), (b, vjp_b)), "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    mode = _broadcast_pair(a, b, "mul")
    a_data, b_data = a.data, b.data
    if mode is None:
        vjp_b = lambda g: g * a_data
    else:
        vjp_b = lambda g: (g * a_data).sum(axis=0)
    return _node(a_data * b_data, ((a, lambda g: g * b_data), (b, vjp_b)), "mul")


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _node(x.data * factor, ((x, lambda g: g * factor),), "scale")


def _expit(x: np.ndarray) -> np.ndarray:
    # Branch on sign to avoid overflow in exp.
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    ex = np.exp(x[~positive])
    out[~positive] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _expit(x.data)
    return _node(s, ((x, lambda g: g * s * (1.0 - s)),), "sigmoid")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), ((x, lambda g: g * mask),), "relu")


def sum_all(x: Tensor) -> Tensor:
    shape = x.data.shape
    return _node(x.data.sum(), ((x, lambda g: np.full(shape, float(g))),), "sum")


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    """Mean over all elements (axis=None, scalar) or over rows (axis=0,
    keeping a [1, d] shape so matmul still applies)."""
    if axis is None:
        count = x.data.size
        shape = x.data.shape
        return _node(x.data.mean(),
                     ((x, lambda g: np.full(shape, float(g) / count)),),
                     "mean")
    if axis != 0:
        raise ShapeMismatch("mean supports only axis=None or axis=0")
    _require_2d(x, "mean")
    count = x.shape[0]
    return _node(x.data.mean(axis=0, keepdims=True),
                 ((x, lambda g: np.repeat(g, count, axis=0) / count),),
                 "mean0")


def concat(parts: list[Tensor]) -> Tensor:
    """Concatenate 2-d tensors along the last axis."""
    if not parts:
        raise ShapeMismatch("concat of zero tensors")
    for part in parts:
        _require_2d(part, "concat")
    rows = parts[0].shape[0]
    if any(part.shape[0] != rows for part in parts):
        raise ShapeMismatch(
            f"concat: row counts differ: {[p.shape for p in parts]}")
    widths = [part.shape[1] for part in parts]
    offsets = np.cumsum([0] + widths)
    vjps = []
    for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
        vjps.append((part, lambda g, lo=lo, hi=hi: g[:, lo:hi]))
    return _node(np.concatenate([p.data for p in parts], axis=1), vjps, "concat")


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table`` by integer id."""
    _require_2d(table, "embedding_lookup")
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeMismatch("embedding_lookup expects a flat id list")
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise IndexOutOfVocab(
            f"ids must lie in [0, {vocab}), got range "
            f"[{ids.min()}, {ids.max()}]")
    table_shape = table.shape

    def vjp(g):
        grad = np.zeros(table_shape)
        np.add.at(grad, ids, g)
        return grad

    return _node(table.data[ids], ((table, vjp),), "embedding")


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of row-wise softmax against integer labels."""
    _require_2d(logits, "softmax_cross_entropy")
    labels = np.asarray(labels, dtype=np.int64)
    n, n_classes = logits.shape
    if labels.shape != (n,):
        raise ShapeMismatch(
            f"labels shape {labels.shape} does not match {n} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ShapeMismatch(f"labels must lie in [0, {n_classes})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    softmax = exp / exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()

    def vjp(g):
        grad = softmax.copy()
        grad[np.arange(n), labels] -= 1.0
        return grad * (float(g) / n)

    return _node(loss, ((logits, vjp),), "softmax_ce")


def grad_reverse(x: Tensor, lam: float) -> Tensor:
    """Identity in the forward pass; multiplies the adjoint by -lam.

    With lam=0 the upstream gradient is exactly zero; nesting two
    reversal layers scales the adjoint by the (positive) product of
    their coefficients.
    """
    lam = float(lam)
    if lam < 0:
        raise ValueError(f"reversal coefficient must be >= 0, got {lam}")
    if lam == 0.0:
        vjp = lambda g: np.zeros_like(g)
    else:
        vjp = lambda g: -lam * g
    return _node(x.data.copy(), ((x, vjp),), "grad_reverse")


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node.vjps:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf.

    ``loss`` must hold a single value. Adjoints of interior nodes live
    only for the duration of the walk, so backpropagating two losses
    that share a subgraph gives the same parameter gradients as
    backpropagating their sum.
    """
    if loss.data.size != 1:
        raise NotScalarLoss(f"loss has shape {loss.shape}, expected a scalar")
    adjoints: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        adjoint = adjoints.pop(id(node), None)
        if adjoint is None:
            continue
        if node.requires_grad and not node.vjps:
            node.grad = node.grad + adjoint
        for parent, vjp in node.vjps:
            contribution = vjp(adjoint)
            key = id(parent)
            if key in adjoints:
                adjoints[key] = adjoints[key] + contribution
            else:
                adjoints[key] = contribution


def zero_grads(params) -> None:
    for param in params:
        param.zero_grad()


def finite_difference_check(f, params, h: float = 1e-5) -> float:
    """Compare tape gradients of ``f()`` against central differences.

    ``f`` must be a deterministic callable returning a scalar Tensor
    built from the given parameters. Returns the maximum relative error
    over all parameter components, with the relative denominator
    max(|analytic|, |numeric|, 1e-8).
    """
    zero_grads(params)
    backward(f())
    analytic = [param.grad.copy() for param in params]
    worst = 0.0
    for param, grad in zip(params, analytic):
        flat = param.data.reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + h
            plus = float(f().data)
            flat[index] = original - h
            minus = float(f().data)
            flat[index] = original
            numeric = (plus - minus) / (2.0 * h)
            a = grad.reshape(-1)[index]
            error = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, error)
    return worst
