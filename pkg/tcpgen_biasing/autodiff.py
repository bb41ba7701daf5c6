"""
A small reverse-mode differentiation tape over dense float64 numpy arrays.

Every operation returns a Tensor that remembers its inputs and a function mapping
the upstream gradient to one gradient per input. Nothing is recorded when no input
requires a gradient, so the same model code runs for training and for decoding.
"""

import logging

import numpy as np

from .config import FINITE_DIFFERENCE_STEP

logger = logging.getLogger(__name__)


class Tensor:
    # Make numpy hand mixed expressions (ndarray + Tensor) back to Tensor
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape}>"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self):
        return transpose(self)

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into `.grad` of every leaf that requires a gradient"""
        if not self.requires_grad:
            return
        grads = {id(self): np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=np.float64)}
        for node in reversed(_topological_order(self)):
            upstream = grads.pop(id(node), None)
            if upstream is None:
                continue
            if node._backward is None:
                node.grad = upstream if node.grad is None else node.grad + upstream
                continue
            for parent, parent_grad in zip(node._parents, node._backward(upstream)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


def _topological_order(root):
    """Inputs before the nodes that consume them; iterative so long recurrences are fine"""
    order = []
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def record(data, parents, backward):
    """Wrap `data` as the output of an operation. `backward(g)` returns one gradient (or None) per parent."""
    out = Tensor(data)
    if any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def parameters(arrays):
    """Leaf tensors that collect gradients, one per named array"""
    return {name: Tensor(value, requires_grad=True, name=name) for name, value in arrays.items()}


def constants(arrays):
    return {name: Tensor(value, name=name) for name, value in arrays.items()}


def unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record(a.data + b.data, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record(a.data - b.data, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record(
        a.data * b.data,
        (a, b),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return record(
        out,
        (a, b),
        lambda g: (unbroadcast(g / b.data, a.shape), unbroadcast(-g * out / b.data, b.shape)),
    )


def matmul(a, b):
    """Matrix/vector products of up to two dimensions"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim > 2 or b.ndim > 2 or a.ndim == 0 or b.ndim == 0:
        raise ValueError(f"matmul supports 1-d and 2-d operands, got {a.shape} @ {b.shape}")

    def backward(g):
        a2 = a.data if a.ndim == 2 else a.data[None, :]
        b2 = b.data if b.ndim == 2 else b.data[:, None]
        g2 = np.reshape(g, (a2.shape[0], b2.shape[1]))
        return (g2 @ b2.T).reshape(a.shape), (a2.T @ g2).reshape(b.shape)

    return record(a.data @ b.data, (a, b), backward)


def transpose(x):
    x = as_tensor(x)
    return record(x.data.T, (x,), lambda g: (g.T,))


def reshape(x, shape):
    x = as_tensor(x)
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)
    return record(out, (x,), lambda g: (g * (1.0 - out**2),))


def sigmoid(x):
    x = as_tensor(x)
    out = 1.0 / (1.0 + np.exp(-x.data))
    return record(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x):
    """ReLU with the sub-gradient at 0 taken as 0"""
    x = as_tensor(x)
    positive = x.data > 0
    return record(np.where(positive, x.data, 0.0), (x,), lambda g: (g * positive,))


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return record(out, (x,), lambda g: (g * out,))


def log(x):
    x = as_tensor(x)
    return record(np.log(x.data), (x,), lambda g: (g / x.data,))


def reduce_sum(x, axis=None, keepdims=False):
    x = as_tensor(x)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return record(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def mean(x, axis=None):
    x = as_tensor(x)
    count = x.data.size if axis is None else x.shape[axis]
    return reduce_sum(x, axis=axis) * (1.0 / count)


def getitem(x, index):
    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return record(x.data[index], (x,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    boundaries = np.cumsum(sizes)[:-1]
    return record(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, boundaries, axis=axis)),
    )


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    return record(
        np.stack([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors))),
    )


def scatter(x, index, size, fill=0.0):
    """Place the last axis of `x` at positions `index` of a new last axis of length `size`"""
    x = as_tensor(x)
    index = np.asarray(index, dtype=int)
    out = np.full(x.shape[:-1] + (size,), fill, dtype=np.float64)
    out[..., index] = x.data
    return record(out, (x,), lambda g: (g[..., index],))


def softmax(x, mask=None, axis=-1):
    """Softmax with masked entries treated as -inf logits, so they get exactly zero probability"""
    x = as_tensor(x)
    logits = x.data if mask is None else np.where(mask, x.data, -np.inf)
    shifted = np.exp(logits - np.max(logits, axis=axis, keepdims=True))
    out = shifted / np.sum(shifted, axis=axis, keepdims=True)
    return record(out, (x,), lambda g: (out * (g - np.sum(g * out, axis=axis, keepdims=True)),))


def logaddexp(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = np.logaddexp(a.data, b.data)
    return record(
        out,
        (a, b),
        lambda g: (unbroadcast(g * np.exp(a.data - out), a.shape), unbroadcast(g * np.exp(b.data - out), b.shape)),
    )


def linear(x, weight, bias=None):
    """weight @ x (+ bias) for a vector, x @ weight.T (+ bias) for a batch of row vectors"""
    x = as_tensor(x)
    out = matmul(weight, x) if x.ndim == 1 else matmul(x, transpose(weight))
    return out if bias is None else out + bias


def rnn_cell(x, h, input_weight, recurrent_weight, bias):
    """Elman cell: tanh(W x + U h + b)"""
    return tanh(matmul(input_weight, x) + matmul(recurrent_weight, h) + bias)


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def numerical_gradient(loss_function, arrays, name, step=FINITE_DIFFERENCE_STEP):
    """Central differences of `loss_function(tensors)` with respect to every entry of arrays[name]"""
    work = {key: np.array(value, dtype=np.float64, copy=True) for key, value in arrays.items()}
    target = work[name]
    gradient = np.zeros_like(target)
    for i in range(target.size):
        original = target.flat[i]
        target.flat[i] = original + step
        plus = loss_function(constants(work)).item()
        target.flat[i] = original - step
        minus = loss_function(constants(work)).item()
        target.flat[i] = original
        gradient.flat[i] = (plus - minus) / (2.0 * step)
    return gradient


def gradient_check(loss_function, arrays, names=None, step=FINITE_DIFFERENCE_STEP):
    """Relative error between tape gradients and central differences, per named array"""
    leaves = parameters(arrays)
    loss_function(leaves).backward()
    errors = {}
    for name in names or list(arrays):
        analytic = leaves[name].grad if leaves[name].grad is not None else np.zeros_like(leaves[name].data)
        errors[name] = relative_error(analytic, numerical_gradient(loss_function, arrays, name, step))
        logger.debug(f"Gradient check {name}: relative error {errors[name]:.3e}")
    return errors


def gather(x, index):
    """x[..., index] for distinct positions along the last axis"""
    x = as_tensor(x)
    index = np.asarray(index, dtype=int)

    def backward(g):
        full = np.zeros_like(x.data)
        full[..., index] = g
        return (full,)

    return record(x.data[..., index], (x,), backward)
