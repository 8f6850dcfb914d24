"""
Reverse-mode differentiation engine.

A small numpy-backed Tensor that records the operations applied to it and
replays their local derivatives backwards. The operation set is exactly what
the study's networks need: stride-1 1-D convolution, average pooling,
dense layers, the activation family, concatenation, elementwise add/multiply
and categorical cross-entropy. All layer operations accept an optional
leading batch axis.

Example:
    >>> w = Parameter(np.array([3.0]), name="w")
    >>> loss = (w * w).sum()
    >>> backward(loss)
    >>> w.grad
    array([6.])
"""

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from src.config import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, LEARNING_RATE, PROBABILITY_FLOOR
from src.helpers import ConfigurationError, ShapeError

_GRAD_ENABLED = True

ACTIVATIONS = ("relu", "gelu", "sigmoid", "swish", "sin", "cos", "softmax")

_GELU_C = np.sqrt(2.0 / np.pi)


@contextmanager
def no_grad():
    """Run forward passes without recording the graph."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


# ============================================================================
# TENSOR
# ============================================================================

class Tensor:
    """
    n-dimensional array taking part in a differentiation graph.

    Args:
        data: Array-like values (integer input is promoted to float64)
        requires_grad: Whether gradients should flow back to this tensor
        dtype: Optional floating dtype
    """

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        array = np.asarray(data)
        if dtype is not None:
            array = array.astype(dtype)
        elif not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)

        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.op = ""
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def sum(self) -> "Tensor":
        return tensor_sum(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0, dtype=self.dtype))

    def __sub__(self, other):
        return add(self, -_lift(other))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op='{self.op}', requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A named trainable tensor with a record of how it was initialized."""

    def __init__(self, data, name: str, initializer: Optional[Dict] = None, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.initializer = initializer or {}

    def __repr__(self) -> str:
        return f"Parameter(name='{self.name}', shape={self.shape})"


def _lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data: np.ndarray, parents: Tuple[Tensor, ...], backward: Callable, op: str) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        out.op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ============================================================================
# ELEMENTWISE AND STRUCTURAL OPERATIONS
# ============================================================================

def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), backward, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), backward, "mul")


def tensor_sum(a: Tensor) -> Tensor:
    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(np.asarray(a.data.sum()), (a,), backward, "sum")


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    def backward(g):
        return (g.reshape(a.shape),)

    return _node(a.data.reshape(shape), (a,), backward, "reshape")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along ``axis``; gradients are split back to each input."""
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


# ============================================================================
# LAYER OPERATIONS
# ============================================================================

def _conv_padding(kernel_size: int, padding: str) -> Tuple[int, int]:
    if padding == "same":
        left = (kernel_size - 1) // 2
        return left, kernel_size - 1 - left
    if padding == "causal":
        return kernel_size - 1, 0
    raise ConfigurationError(f"Unknown padding '{padding}' (expected 'same' or 'causal')")


def conv1d(x: Tensor, kernels: Tensor, bias: Optional[Tensor] = None, padding: str = "same") -> Tensor:
    """
    Stride-1 cross-correlation with zero padding.

    Args:
        x: (..., C_in, L)
        kernels: (C_out, C_in, K)
        bias: Optional (C_out,)
        padding: 'same' (floor((K-1)/2) left) or 'causal' (K-1 left)

    Returns:
        Tensor: (..., C_out, L)

    Raises:
        ShapeError: On a channel or bias mismatch
    """
    weights = kernels.data
    if weights.ndim != 3:
        raise ShapeError(f"conv1d kernels must be C_out x C_in x K, got {weights.shape}")
    c_out, c_in, k = weights.shape
    if x.ndim < 2 or x.shape[-2] != c_in:
        raise ShapeError(f"conv1d expects {c_in} input channels, got input of shape {x.shape}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv1d bias must have shape ({c_out},), got {bias.shape}")

    length = x.shape[-1]
    left, right = _conv_padding(k, padding)
    x3 = x.data.reshape(-1, c_in, length)
    padded = np.pad(x3, ((0, 0), (0, 0), (left, right)))

    out = np.zeros((x3.shape[0], c_out, length), dtype=np.result_type(x.data, weights))
    for tap in range(k):
        out += np.matmul(weights[:, :, tap], padded[:, :, tap:tap + length])
    if bias is not None:
        out += bias.data[:, None]

    def backward(g):
        g3 = g.reshape(-1, c_out, length)
        grads = []
        if x.requires_grad:
            grad_padded = np.zeros_like(padded, dtype=g3.dtype)
            for tap in range(k):
                grad_padded[:, :, tap:tap + length] += np.matmul(weights[:, :, tap].T, g3)
            grads.append(grad_padded[:, :, left:left + length].reshape(x.shape))
        else:
            grads.append(None)

        if kernels.requires_grad:
            grad_w = np.empty_like(weights, dtype=g3.dtype)
            for tap in range(k):
                grad_w[:, :, tap] = np.tensordot(g3, padded[:, :, tap:tap + length], axes=([0, 2], [0, 2]))
            grads.append(grad_w)
        else:
            grads.append(None)

        if bias is not None:
            grads.append(g3.sum(axis=(0, 2)))
        return tuple(grads)

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return _node(out.reshape(x.shape[:-2] + (c_out, length)), parents, backward, "conv1d")


def avg_pool1d(x: Tensor, pool: int = 4, stride: int = 4) -> Tensor:
    """Window means along the last axis; a trailing remainder is dropped."""
    length = x.shape[-1]
    if length < pool:
        raise ShapeError(f"avg_pool1d needs at least {pool} samples, got {length}")

    n_out = (length - pool) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(x.data, pool, axis=-1)[..., ::stride, :]
    out = windows[..., :n_out, :].mean(axis=-1)

    def backward(g):
        grad = np.zeros(x.shape, dtype=g.dtype)
        share = g / pool
        span = stride * (n_out - 1) + 1
        for offset in range(pool):
            grad[..., offset:offset + span:stride] += share
        return (grad,)

    return _node(out, (x,), backward, "avg_pool1d")


def global_avg_pool1d(x: Tensor) -> Tensor:
    """Per-channel mean over the last axis: (..., C, L) -> (..., C)."""
    length = x.shape[-1]

    def backward(g):
        return (np.broadcast_to(g[..., None] / length, x.shape).copy(),)

    return _node(x.data.mean(axis=-1), (x,), backward, "global_avg_pool1d")


def dense(x: Tensor, weights: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Affine map ``x W^T + b`` over the last axis.

    Args:
        x: (..., D_in)
        weights: (D_out, D_in)
        bias: Optional (D_out,)

    Raises:
        ShapeError: On a width mismatch
    """
    if weights.ndim != 2 or x.shape[-1] != weights.shape[1]:
        raise ShapeError(f"dense: input {x.shape} does not match weights {weights.shape}")
    d_out, d_in = weights.shape
    if bias is not None and bias.shape != (d_out,):
        raise ShapeError(f"dense bias must have shape ({d_out},), got {bias.shape}")

    out = x.data @ weights.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g2 = g.reshape(-1, d_out)
        grads = [
            g @ weights.data if x.requires_grad else None,
            g2.T @ x.data.reshape(-1, d_in) if weights.requires_grad else None,
        ]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    parents = (x, weights) if bias is None else (x, weights, bias)
    return _node(out, parents, backward, "dense")


def _sigmoid(values: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * values))


def activation(kind: str, x: Tensor) -> Tensor:
    """
    Apply an activation; softmax normalizes over the last (class) axis.

    GELU uses the tanh approximation
    0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).

    Raises:
        ConfigurationError: Unknown kind
    """
    v = x.data

    if kind == "relu":
        out = np.maximum(v, 0)
        local = lambda g: g * (v > 0)
    elif kind == "sigmoid":
        out = _sigmoid(v)
        local = lambda g: g * out * (1.0 - out)
    elif kind == "swish":
        s = _sigmoid(v)
        out = v * s
        local = lambda g: g * (s + v * s * (1.0 - s))
    elif kind == "gelu":
        inner = _GELU_C * (v + 0.044715 * v ** 3)
        t = np.tanh(inner)
        out = 0.5 * v * (1.0 + t)
        local = lambda g: g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t ** 2) * _GELU_C * (1.0 + 3 * 0.044715 * v ** 2))
    elif kind == "sin":
        out = np.sin(v)
        local = lambda g: g * np.cos(v)
    elif kind == "cos":
        out = np.cos(v)
        local = lambda g: -g * np.sin(v)
    elif kind == "softmax":
        shifted = np.exp(v - v.max(axis=-1, keepdims=True))
        out = shifted / shifted.sum(axis=-1, keepdims=True)
        local = lambda g: out * (g - (g * out).sum(axis=-1, keepdims=True))
    else:
        raise ConfigurationError(f"Unknown activation '{kind}'. Expected one of: {', '.join(ACTIVATIONS)}")

    return _node(out, (x,), lambda g: (local(g),), kind)


def cross_entropy(probabilities: Tensor, labels) -> Tensor:
    """
    Batch-mean categorical cross-entropy of probability rows.

    Args:
        probabilities: (N, C) or (C,) rows summing to 1
        labels: Integer class per row, or one-hot rows

    Returns:
        Tensor: Scalar loss; probabilities are floored at 1e-12

    Raises:
        ValueError: Label outside 0..C-1
    """
    p = probabilities.data
    p2 = p.reshape(-1, p.shape[-1])
    n_rows, n_classes = p2.shape

    labels = np.asarray(labels)
    if labels.shape == p.shape and n_classes > 1 and labels.size == p.size and labels.size != n_rows:
        # one-hot rows
        labels = labels.reshape(-1, n_classes).argmax(axis=-1)
    labels = labels.reshape(-1).astype(np.int64)
    if len(labels) != n_rows:
        raise ShapeError(f"{len(labels)} labels for {n_rows} probability rows")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"label out of range 0..{n_classes - 1}")

    rows = np.arange(n_rows)
    picked = np.maximum(p2[rows, labels], PROBABILITY_FLOOR)
    loss = -np.mean(np.log(picked))

    def backward(g):
        grad = np.zeros_like(p2)
        grad[rows, labels] = -g / (n_rows * picked)
        return (grad.reshape(p.shape),)

    return _node(np.asarray(loss, dtype=p.dtype), (probabilities,), backward, "cross_entropy")


# ============================================================================
# BACKWARD PASS
# ============================================================================

def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Accumulate d(loss)/d(leaf) into the ``grad`` of every reachable leaf
    tensor that requires gradients.

    Raises:
        ShapeError: If the loss is not a scalar
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue

        if node._backward is None:
            if node.requires_grad:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue

        for parent, parent_grad in zip(node._parents, node._backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = parent_grad if key not in pending else pending[key] + parent_grad


# ============================================================================
# PARAMETERS AND OPTIMIZER
# ============================================================================

@dataclass
class ParameterSpec:
    """Declaration of one parameter: He-uniform weight or zero bias."""

    name: str
    shape: Tuple[int, ...]
    fan_in: int = 1
    kind: str = "weight"


def init_parameters(specs: Iterable[ParameterSpec], seed: int) -> Dict[str, Parameter]:
    """
    Create parameters in declaration order from one seeded generator.

    Weights are drawn from U(-sqrt(6/fan_in), +sqrt(6/fan_in)); biases are 0.
    """
    rng = np.random.default_rng(seed)
    params: Dict[str, Parameter] = {}
    for spec in specs:
        if spec.name in params:
            raise ConfigurationError(f"Duplicate parameter name '{spec.name}'")
        if spec.kind == "bias":
            values = np.zeros(spec.shape)
            record = {"scheme": "zeros", "seed": seed}
        else:
            bound = np.sqrt(6.0 / spec.fan_in)
            values = rng.uniform(-bound, bound, size=spec.shape)
            record = {"scheme": "he_uniform", "seed": seed, "fan_in": spec.fan_in}
        params[spec.name] = Parameter(values, name=spec.name, initializer=record)
    return params


@dataclass
class AdamState:
    learning_rate: float = LEARNING_RATE
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, parameters: Iterable[Parameter]) -> None:
    """Bias-corrected Adam update in place, then zero the gradients."""
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t

    for param in parameters:
        grad = param.grad if param.grad is not None else np.zeros_like(param.data)
        m = state.m.get(param.name)
        v = state.v.get(param.name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)

        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[param.name] = m
        state.v[param.name] = v

        step = state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
        param.data -= step.astype(param.data.dtype, copy=False)
        param.grad = None


# ============================================================================
# GRADIENT CHECKING
# ============================================================================

def numerical_gradient(f: Callable[[], float], values: np.ndarray, scale: float = 1e-5) -> np.ndarray:
    """
    Central finite differences of ``f`` w.r.t. ``values`` (perturbed in place).

    The step per element is ``scale * max(1, |w|)``.
    """
    grad = np.zeros(values.shape, dtype=np.float64)
    for index in np.ndindex(values.shape):
        original = values[index]
        h = scale * max(1.0, abs(float(original)))
        values[index] = original + h
        upper = f()
        values[index] = original - h
        lower = f()
        values[index] = original
        grad[index] = (upper - lower) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a|| + ||n||, 1e-12)."""
    diff = np.linalg.norm(np.asarray(analytic) - np.asarray(numeric))
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return float(diff / max(scale, 1e-12))
