"""Dense float64 tensors with reverse-mode differentiation.

The graph is built define-by-run: every operation returns a new Tensor
holding references to its parents and a backward rule. ``backward(loss)``
walks the recorded operations once, in reverse topological order, and
accumulates gradients into every tensor that opted in via
``requires_grad`` (parameters, and inputs when attacks need d(loss)/dx).

Everything is float64; broadcasting is limited to adding a bias vector
over the rows of a matrix.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError


class Tensor:
    """N-d float64 array plus the bookkeeping reverse mode needs."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward_rule")

    def __init__(
        self,
        values,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward_rule: Optional[Callable[[np.ndarray], tuple]] = None,
    ):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward_rule = backward_rule

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.values.reshape(()))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: operand shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# arithmetic


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def rule(g):
        return g @ b.values.T, a.values.T @ g

    return Tensor(a.values @ b.values, parents=(a, b), backward_rule=rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts a 1-d bias added over the rows of a matrix."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        return Tensor(a.values + b.values, parents=(a, b),
                      backward_rule=lambda g: (g, g))
    if a.values.ndim == 2 and b.values.ndim == 1 and a.shape[1] == b.shape[0]:
        return Tensor(a.values + b.values, parents=(a, b),
                      backward_rule=lambda g: (g, g.sum(axis=0)))
    raise DimensionError(f"add: operand shapes {a.shape} and {b.shape} differ")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "sub")
    return Tensor(a.values - b.values, parents=(a, b),
                  backward_rule=lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "mul")
    return Tensor(a.values * b.values, parents=(a, b),
                  backward_rule=lambda g: (g * b.values, g * a.values))


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python constant (not tracked as a graph node)."""
    a = _as_tensor(a)
    return Tensor(a.values * c, parents=(a,), backward_rule=lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    mask = a.values > 0
    return Tensor(np.where(mask, a.values, 0.0), parents=(a,),
                  backward_rule=lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    t = np.tanh(a.values)
    return Tensor(t, parents=(a,), backward_rule=lambda g: (g * (1.0 - t * t),))


def exp(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    e = np.exp(a.values)
    return Tensor(e, parents=(a,), backward_rule=lambda g: (g * e,))


def log(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.values <= 0):
        raise DomainError("log: input must be strictly positive")
    return Tensor(np.log(a.values), parents=(a,),
                  backward_rule=lambda g: (g / a.values,))


def square(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    return Tensor(a.values * a.values, parents=(a,),
                  backward_rule=lambda g: (g * 2.0 * a.values,))


def sigmoid(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    # stable form: never exponentiates a large positive argument
    s = np.where(a.values >= 0,
                 1.0 / (1.0 + np.exp(-np.abs(a.values))),
                 np.exp(-np.abs(a.values)) / (1.0 + np.exp(-np.abs(a.values))))
    return Tensor(s, parents=(a,), backward_rule=lambda g: (g * s * (1.0 - s),))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip values into [lo, hi]; gradient is zero outside the interval."""
    a = _as_tensor(a)
    mask = (a.values >= lo) & (a.values <= hi)
    return Tensor(np.clip(a.values, lo, hi), parents=(a,),
                  backward_rule=lambda g: (g * mask,))


def tsum(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    return Tensor(a.values.sum(), parents=(a,),
                  backward_rule=lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    n = a.values.size
    return Tensor(a.values.sum() / n, parents=(a,),
                  backward_rule=lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def grl(a: Tensor, coeff: float = 1.0) -> Tensor:
    """Gradient reversal: identity forward, -coeff * gradient backward."""
    a = _as_tensor(a)
    return Tensor(a.values.copy(), parents=(a,),
                  backward_rule=lambda g: (-coeff * g,))


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by max subtraction."""
    logits = _as_tensor(logits)
    if logits.values.ndim != 2:
        raise DimensionError(f"softmax: expected 2-d logits, got shape {logits.shape}")
    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def rule(g):
        dot = (g * p).sum(axis=1, keepdims=True)
        return (p * (g - dot),)

    return Tensor(p, parents=(logits,), backward_rule=rule)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label].

    Backward rule is the classic (softmax - onehot) / batch.
    """
    logits = _as_tensor(logits)
    if logits.values.ndim != 2:
        raise DimensionError(
            f"softmax_cross_entropy: expected 2-d logits, got shape {logits.shape}")
    labels = np.asarray(labels)
    b, c = logits.shape
    if labels.shape != (b,):
        raise DimensionError(
            f"softmax_cross_entropy: labels shape {labels.shape} does not match batch {b}")
    labels = labels.astype(np.int64)
    if np.any(labels < 0) or np.any(labels >= c):
        raise IndexError(f"label out of range [0, {c})")

    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted[np.arange(b), labels] - log_z
    loss = -log_p.mean()

    def rule(g):
        p = np.exp(shifted - log_z[:, None])
        p[np.arange(b), labels] -= 1.0
        return (g * p / b,)

    return Tensor(loss, parents=(logits,), backward_rule=rule)


# ---------------------------------------------------------------------------
# backward pass


def _tape(loss: Tensor) -> list:
    """Operations reachable from ``loss`` in topological order."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    """Populate ``grad`` on every requires_grad tensor reachable from loss.

    Each recorded operation's backward rule runs exactly once.
    """
    if loss.values.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _tape(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward_rule is None:
            continue
        for parent, pg in zip(node._parents, node._backward_rule(g)):
            acc = grads.get(id(parent))
            if acc is None:
                grads[id(parent)] = np.asarray(pg, dtype=np.float64).copy()
            else:
                acc += pg
