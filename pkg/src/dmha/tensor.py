"""
Dense tensor engine with tape-based reverse-mode differentiation

Tensors wrap row-major numpy arrays (32-bit floats unless a precision()
context asks for more). Operations executed inside an active Graph are
recorded on its tape; backward() sweeps the tape once in reverse order.
Outside a Graph nothing is recorded, which is how inference runs.
"""

import itertools
import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from dmha.exceptions import (
    GraphException,
    NonFiniteException,
    ShapeMismatchException,
    TensorException,
)

_tensor_ids = itertools.count(1)
_local = threading.local()

LAYER_NORM_EPS = 1e-5


def default_dtype():
    """Floating point type used for newly created tensors on this thread"""
    return getattr(_local, 'dtype', np.float32)


@contextmanager
def precision(dtype):
    """Temporarily create tensors with another float type (e.g. np.float64)"""
    previous = default_dtype()
    _local.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _local.dtype = previous


def _graph_stack() -> List['Graph']:
    stack = getattr(_local, 'graphs', None)
    if stack is None:
        stack = []
        _local.graphs = stack
    return stack


def current_graph() -> Optional['Graph']:
    """Innermost active graph on this thread, or None"""
    stack = _graph_stack()
    return stack[-1] if stack else None


def _check_finite(op: str, array: np.ndarray):
    if not np.all(np.isfinite(array)):
        raise NonFiniteException(f"{op} produced non-finite values")


@dataclass
class Node:
    """One recorded operation on a tape"""
    op: str
    inputs: Tuple[int, ...]
    output: int
    backward: Callable = field(repr=False)
    input_tensors: Tuple['Tensor', ...] = field(repr=False)
    output_tensor: 'Tensor' = field(repr=False)


class Graph:
    """
    Tape of operations recorded during one forward pass.

    Usage:
        with Graph():
            loss = ...
        backward(loss)

    Nodes are appended in execution order, so the tape is topologically
    ordered by construction.
    """

    def __init__(self):
        self.nodes: List[Node] = []

    def record(self, op: str, inputs: Sequence['Tensor'], output: 'Tensor',
               backward_fn: Callable) -> Node:
        node = Node(
            op=op,
            inputs=tuple(t.id for t in inputs),
            output=output.id,
            backward=backward_fn,
            input_tensors=tuple(inputs),
            output_tensor=output,
        )
        self.nodes.append(node)
        return node

    def __enter__(self) -> 'Graph':
        _graph_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _graph_stack().pop()
        return False

    def __len__(self) -> int:
        return len(self.nodes)


class Tensor:
    """Dense n-dimensional array with an optional gradient slot"""

    # Lets numpy arrays on the left-hand side defer to Tensor operators
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        self.data: np.ndarray = np.array(data, dtype=dtype or default_dtype())
        _check_finite('tensor creation', self.data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.id = next(_tensor_ids)
        self._graph: Optional[Graph] = None
        self._node: Optional[Node] = None

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool) -> 'Tensor':
        tensor = cls.__new__(cls)
        tensor.data = array
        tensor.grad = None
        tensor.requires_grad = requires_grad
        tensor.name = None
        tensor.id = next(_tensor_ids)
        tensor._graph = None
        tensor._node = None
        return tensor

    # Shape helpers

    @property
    def dims(self) -> List[int]:
        return list(self.data.shape)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self) -> 'Tensor':
        return transpose(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> 'Tensor':
        return Tensor._wrap(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype)
        else:
            self.grad = self.grad + grad

    def reshape(self, *shape) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return mean(self, axis=axis, keepdims=keepdims)

    # Operators

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return take(self, index)

    def __repr__(self) -> str:
        grad = ', requires_grad=True' if self.requires_grad else ''
        return f"Tensor(dims={self.dims}{grad})"


def _as_tensor(value, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.data.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def _pair(a, b) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _as_tensor(b, like=a)
    b = _as_tensor(b)
    return _as_tensor(a, like=b), b


def _make(op: str, array: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Wrap an op result and record it on the active graph when needed"""
    array = np.asarray(array)
    if inputs and array.dtype != inputs[0].data.dtype:
        array = array.astype(inputs[0].data.dtype)
    _check_finite(op, array)

    graph = current_graph()
    track = graph is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(array, requires_grad=track)
    if track:
        out._graph = graph
        out._node = graph.record(op, inputs, out, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeMismatchException(f"{op}: cannot broadcast {a.dims} with {b.dims}") from e


# Elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape('add', a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make('add', a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape('sub', a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make('sub', a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape('mul', a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make('mul', a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape('div', a, b)

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make('div', a.data / b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _make('neg', -a.data, (a,), lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make('exp', out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _make('log', np.log(a.data), (a,), lambda g: (g / a.data,))


def clamp_min(a: Tensor, minimum: float) -> Tensor:
    """max(a, minimum); gradient flows only where a was not clamped"""
    passed = a.data >= minimum
    return _make('clamp_min', np.maximum(a.data, minimum), (a,), lambda g: (g * passed,))


def power(a: Tensor, exponent: float) -> Tensor:
    """a ** exponent for a constant exponent"""
    exponent = float(exponent)
    out = np.power(a.data, exponent)

    def backward(g):
        if exponent == 0.0:
            return (np.zeros_like(a.data),)
        with np.errstate(divide='ignore', invalid='ignore'):
            slope = exponent * np.power(a.data, exponent - 1.0)
        if exponent < 1.0:
            # infinite slope at a zero base
            slope = np.where(a.data == 0, 0.0, slope)
        return (g * slope,)

    return _make('power', out, (a,), backward)


# Linear algebra and shape operations

def matmul(a, b) -> Tensor:
    """Standard matrix product of a [M×K] and b [K×N]"""
    a, b = _pair(a, b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatchException(f"matmul expects 2-d operands, got {a.dims} and {b.dims}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchException(f"matmul inner dims differ: {a.dims} x {b.dims}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _make('matmul', a.data @ b.data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeMismatchException(f"transpose expects a 2-d tensor, got {a.dims}")
    return _make('transpose', a.data.T.copy(), (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeMismatchException(f"cannot reshape {a.dims} to {list(shape)}") from e
    return _make('reshape', out.copy(), (a,), lambda g: (g.reshape(a.shape),))


def take(a: Tensor, index) -> Tensor:
    """Basic or fancy indexing; gradients scatter back into place"""
    out = np.array(a.data[index])

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _make('take', out, (a,), backward)


def pick(a: Tensor, labels) -> Tensor:
    """Row-wise selection a[i, labels[i]] of a [B×K] tensor"""
    labels = np.asarray(labels, dtype=np.int64)
    if a.ndim != 2 or labels.shape != (a.shape[0],):
        raise ShapeMismatchException(f"pick expects [B×K] and B labels, got {a.dims} and {list(labels.shape)}")
    return take(a, (np.arange(a.shape[0]), labels))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise TensorException("concat needs at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeMismatchException(f"concat: incompatible dims {[t.dims for t in tensors]}") from e
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make('concat', out, tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise TensorException("stack needs at least one tensor")
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeMismatchException(f"stack: incompatible dims {[t.dims for t in tensors]}") from e

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make('stack', out, tensors, backward)


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.array(np.broadcast_to(g, a.shape)),)

    return _make('sum', out, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return div(tensor_sum(a, axis=axis, keepdims=keepdims), float(count))


# Neural network primitives

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along one axis"""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make('softmax', out, (x,), backward)


def layer_norm(x: Tensor, gain, bias, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then gain·x̂ + bias"""
    gain = _as_tensor(gain, like=x)
    bias = _as_tensor(bias, like=x)
    if x.shape[-1] < 1:
        raise ShapeMismatchException("layer_norm needs a non-empty last axis")
    n = x.shape[-1]
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(variance + eps)
    normalized = centered * inv_std
    out = normalized * gain.data + bias.data

    def backward(g):
        d_norm = g * gain.data
        dx = inv_std / n * (
            n * d_norm
            - d_norm.sum(axis=-1, keepdims=True)
            - normalized * (d_norm * normalized).sum(axis=-1, keepdims=True)
        )
        return dx, _unbroadcast(g * normalized, gain.shape), _unbroadcast(g, bias.shape)

    return _make('layer_norm', out, (x, gain, bias), backward)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU: x·Φ(x) with Φ the standard normal CDF"""
    cdf = 0.5 * (1.0 + erf(x.data / math.sqrt(2.0)))
    out = x.data * cdf

    def backward(g):
        density = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
        return (g * (cdf + x.data * density),)

    return _make('gelu', out, (x,), backward)


def dropout(x: Tensor, p: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout; identity in eval mode or when p is 0"""
    if not 0.0 <= p < 1.0:
        raise TensorException(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise TensorException("dropout in training mode needs a random stream")
    keep = rng.random(x.shape) >= p
    mask = keep.astype(x.data.dtype) / (1.0 - p)
    return _make('dropout', x.data * mask, (x,), lambda g: (g * mask,))


def backward(loss: Tensor):
    """
    Populate gradients of every tensor that contributed to a scalar loss.

    Gradients accumulate into .grad; callers zero them between steps.
    """
    if loss.size != 1:
        raise GraphException(f"backward needs a scalar loss, got dims {loss.dims}")
    graph = loss._graph
    if graph is None or not loss.requires_grad:
        raise GraphException("loss was not recorded on a graph with trainable inputs")

    pending = {loss.id: np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        grad = pending.pop(node.output, None)
        if grad is None:
            continue
        node.output_tensor._accumulate(grad)
        for tensor, input_grad in zip(node.input_tensors, node.backward(grad)):
            if input_grad is None or not tensor.requires_grad:
                continue
            input_grad = np.asarray(input_grad, dtype=tensor.data.dtype)
            _check_finite(f"{node.op} backward", input_grad)
            if tensor._node is not None and tensor._graph is graph:
                if tensor.id in pending:
                    pending[tensor.id] = pending[tensor.id] + input_grad
                else:
                    pending[tensor.id] = input_grad
            else:
                tensor._accumulate(input_grad)


def parameter(array, name: Optional[str] = None) -> Tensor:
    """Create a trainable leaf tensor"""
    return Tensor(array, requires_grad=True, name=name)
