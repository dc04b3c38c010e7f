# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Reverse-mode automatic differentiation over dense numpy arrays.

Every primitive builds a :class:`Tensor` that remembers its parents and
an adjoint closure. :func:`backward` visits the graph reachable from a
scalar loss once, in reverse topological order, and accumulates into
the ``grad`` buffer of every leaf that requires gradients.

Values are held in float64. Checkpoints store float32.
"""

import contextlib
import threading

import numpy as np

from .common import ShapeError


class NonScalarLoss(ValueError):
    pass


class GradientCheckError(AssertionError):
    pass


_state = threading.local()


def is_grad_enabled():
    return getattr(_state, 'enabled', True)


def _active_tape():
    return getattr(_state, 'tape', None)


@contextlib.contextmanager
def no_grad():
    """
    Evaluate without recording: results never require gradients.
    """
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tape(object):
    """
    Ordered record of the primitive applications made on this thread
    while the tape is active. Records are ``(op, output, inputs)`` and
    are topologically ordered by construction.
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        self._previous = _active_tape()
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = self._previous
        return False

    def __len__(self):
        return len(self.records)

    def record(self, op, output, inputs):
        self.records.append((op, output, inputs))


class Tensor(object):

    # numpy defers binary operators to Tensor
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64, order='C')
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._adjoint = None
        self.op = None

    def __repr__(self):
        return 'Tensor(shape=%s, requires_grad=%s)' % (self.shape, self.requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ValueError('only single-element tensors convert to float, got shape %s'
                             % (self.shape,))
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # arithmetic
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
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _make(op, data, parents, adjoint):
    """
    Create the output node of a primitive.  *adjoint* maps the output
    gradient to a tuple of parent gradients (``None`` to skip one).
    """
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._adjoint = adjoint
        out.op = op
        tape = _active_tape()
        if tape is not None:
            tape.record(op, out, out._parents)
    return out


def _unbroadcast(grad, shape):
    """
    Sum *grad* down to *shape* after numpy broadcasting.
    """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError('%s: incompatible shapes' % op, a.shape, b.shape)


def backward(loss):
    """
    Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf tensor
    that requires gradients. Repeated calls accumulate.

    :param loss: scalar :class:`Tensor`
    :raises: :exc:`NonScalarLoss`
    """
    if loss.data.size != 1:
        raise NonScalarLoss('loss must be a scalar, got shape %s' % (loss.shape,))
    if not loss.requires_grad:
        return
    order = []
    visited = set()
    stack = [(loss, False)]
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

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._adjoint(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# elementwise binary

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('add', a, b)
    return _make('add', a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('sub', a, b)
    return _make('sub', a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('mul', a, b)
    return _make('mul', a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('div', a, b)
    out = a.data / b.data
    return _make('div', out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def neg(a):
    return _make('neg', -a.data, (a,), lambda g: (-g,))


def power(a, exponent):
    exponent = float(exponent)
    return _make('pow', a.data ** exponent, (a,),
                 lambda g: (g * exponent * a.data ** (exponent - 1.0),))


def matmul(a, b):
    """
    Batched matrix product with numpy broadcasting over leading axes.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError('matmul: inner dimensions differ', a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError('matmul: batch dimensions differ', a.shape, b.shape)

    def adjoint(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return _make('matmul', out, (a, b), adjoint)


# elementwise unary

def sin(a):
    return _make('sin', np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def cos(a):
    return _make('cos', np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def exp(a):
    out = np.exp(a.data)
    return _make('exp', out, (a,), lambda g: (g * out,))


def log(a):
    return _make('log', np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    out = np.sqrt(a.data)
    return _make('sqrt', out, (a,), lambda g: (g * 0.5 / out,))


def abs_(a):
    return _make('abs', np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def tanh(a):
    out = np.tanh(a.data)
    return _make('tanh', out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make('sigmoid', out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    return _make('relu', np.maximum(a.data, 0.0), (a,), lambda g: (g * (a.data > 0),))


def elu(a, alpha=1.0):
    neg_part = alpha * np.expm1(np.minimum(a.data, 0.0))
    out = np.where(a.data > 0, a.data, neg_part)
    return _make('elu', out, (a,),
                 lambda g: (g * np.where(a.data > 0, 1.0, neg_part + alpha),))


def softplus(a):
    out = np.logaddexp(0.0, a.data)
    return _make('softplus', out, (a,), lambda g: (g * 0.5 * (1.0 + np.tanh(0.5 * a.data)),))


def softmax(a, axis=-1):
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)
    return _make('softmax', out, (a,),
                 lambda g: (out * (g - np.sum(g * out, axis=axis, keepdims=True)),))


def log_softmax(a, axis=-1):
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - lse
    return _make('log_softmax', out, (a,),
                 lambda g: (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),))


# reductions

def sum_(a, axis=None, keepdims=False):
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def adjoint(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _make('sum', out, (a,), adjoint)


def mean(a, axis=None, keepdims=False):
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.data.size / max(np.size(out), 1)

    def adjoint(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)
    return _make('mean', out, (a,), adjoint)


def l2_norm(a, axis=None, eps=0.0):
    return sqrt(sum_(a * a, axis=axis) + eps)


# structure

def reshape(a, shape):
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError('reshape: cannot reshape', a.shape, tuple(shape))
    return _make('reshape', out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    out = np.transpose(a.data, axes)
    inverse = None if axes is None else np.argsort(axes)
    return _make('transpose', out, (a,), lambda g: (np.transpose(g, inverse),))


def swapaxes(a, i, j):
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def _basic_index(index):
    items = index if isinstance(index, tuple) else (index,)
    return all(i is None or i is Ellipsis or isinstance(i, (int, np.integer, slice)) for i in items)


def getitem(a, index):
    out = a.data[index]
    basic = _basic_index(index)

    def adjoint(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] += g
        else:
            # repeated fancy indices accumulate
            np.add.at(full, index, g)
        return (full,)
    return _make('slice', np.array(out, copy=True), (a,), adjoint)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError('concat: incompatible shapes', *[t.shape for t in tensors])
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make('concat', out, tuple(tensors),
                 lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError('stack: incompatible shapes', *[t.shape for t in tensors])
    return _make('stack', out, tuple(tensors),
                 lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors))))


def pad_edge(a, left, right, axis=-1):
    """
    Replicate-pad *a* along *axis*, composed from slice and concat.
    """
    if left == 0 and right == 0:
        return a
    axis = axis % a.ndim
    parts = []
    idx = [slice(None)] * a.ndim
    if left:
        idx[axis] = slice(0, 1)
        first = getitem(a, tuple(idx))
        parts.append(concat([first] * left, axis=axis))
    parts.append(a)
    if right:
        idx[axis] = slice(a.shape[axis] - 1, a.shape[axis])
        last = getitem(a, tuple(idx))
        parts.append(concat([last] * right, axis=axis))
    return concat(parts, axis=axis)


# convolutions

def conv1d(x, w, b=None, stride=1, padding=0):
    """
    1-D convolution; a unit impulse returns the kernel itself.

    :param x: input, ``(B, C_in, T)``
    :param w: kernel, ``(C_out, C_in, K)``
    :param b: bias, ``(C_out,)`` or ``None``
    :param padding: zero padding per side, or ``'same'`` (odd K, stride 1)
    :returns: ``(B, C_out, T_out)``
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError('conv1d: input channels differ', x.shape, w.shape)
    K = w.shape[2]
    if padding == 'same':
        padding = (K - 1) // 2
    T = x.shape[2]
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
    t_out = (T + 2 * padding - K) // stride + 1
    if t_out < 1:
        raise ShapeError('conv1d: input shorter than kernel', x.shape, w.shape)
    span = stride * (t_out - 1) + 1
    cols = np.stack([xp[:, :, k:k + span:stride] for k in range(K)], axis=2)
    flipped = w.data[:, :, ::-1]
    out = np.einsum('bckt,ock->bot', cols, flipped)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data[None, :, None]
        parents.append(b)

    def adjoint(g):
        gw = np.einsum('bckt,bot->ock', cols, g)[:, :, ::-1]
        gcols = np.einsum('ock,bot->bckt', flipped, g)
        gxp = np.zeros_like(xp)
        for k in range(K):
            gxp[:, :, k:k + span:stride] += gcols[:, :, k, :]
        gx = gxp[:, :, padding:padding + T]
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)
    return _make('conv1d', out, tuple(parents), adjoint)


def conv_transpose1d(x, w, b=None, stride=1, padding=0, output_padding=0):
    """
    1-D transposed convolution, the adjoint of :func:`conv1d`.

    :param x: input, ``(B, C_in, T)``
    :param w: kernel, ``(C_in, C_out, K)``
    :returns: ``(B, C_out, (T - 1) * stride - 2 * padding + K + output_padding)``
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[0]:
        raise ShapeError('conv_transpose1d: input channels differ', x.shape, w.shape)
    B, _, T = x.shape
    K = w.shape[2]
    full_len = (T - 1) * stride + K + output_padding
    t_out = full_len - 2 * padding
    if t_out < 1:
        raise ShapeError('conv_transpose1d: empty output', x.shape, w.shape)
    span = stride * (T - 1) + 1
    flipped = w.data[:, :, ::-1]
    full = np.zeros((B, w.shape[1], full_len))
    for k in range(K):
        full[:, :, k:k + span:stride] += np.einsum('bit,io->bot', x.data, flipped[:, :, k])
    out = full[:, :, padding:padding + t_out]
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data[None, :, None]
        parents.append(b)

    def adjoint(g):
        gfull = np.zeros_like(full)
        gfull[:, :, padding:padding + t_out] = g
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(w.data)
        for k in range(K):
            gk = gfull[:, :, k:k + span:stride]
            gx += np.einsum('bot,io->bit', gk, flipped[:, :, k])
            gw[:, :, K - 1 - k] = np.einsum('bit,bot->io', x.data, gk)
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)
    return _make('conv_transpose1d', np.ascontiguousarray(out), tuple(parents), adjoint)


# recurrent

def lstm_cell(x, h_prev, c_prev, w_ih, w_hh, bias):
    """
    One LSTM step with gates ordered input, forget, cell, output.

    :param x: ``(B, I)``
    :param h_prev: ``(B, H)``
    :param c_prev: ``(B, H)``
    :param w_ih: ``(I, 4H)``
    :param w_hh: ``(H, 4H)``
    :param bias: ``(4H,)``
    :returns: ``(h, c)``
    """
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    H = h_prev.shape[-1]
    if w_ih.shape[-1] != 4 * H or w_hh.shape != (H, 4 * H) or c_prev.shape != h_prev.shape:
        raise ShapeError('lstm_cell: hidden sizes differ', w_ih.shape, w_hh.shape, h_prev.shape)
    if x.shape[-1] != w_ih.shape[0]:
        raise ShapeError('lstm_cell: input width differs', x.shape, w_ih.shape)
    z = matmul(x, w_ih) + matmul(h_prev, w_hh) + bias
    i = sigmoid(z[..., 0:H])
    f = sigmoid(z[..., H:2 * H])
    g = tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:4 * H])
    c = f * c_prev + i * g
    h = o * tanh(c)
    return h, c


# losses

def mse(a, b):
    d = sub(a, b)
    return mean(d * d)


def l1_loss(a, b):
    return mean(abs_(sub(a, b)))


# gradient checking

def numeric_gradient(fn, inputs, eps=1e-6):
    """
    Central-difference gradients of scalar ``fn(*inputs)`` with respect
    to every input that requires gradients.
    """
    grads = []
    with no_grad():
        for t in inputs:
            if not t.requires_grad:
                grads.append(None)
                continue
            g = np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = float(fn(*inputs).data)
                flat[i] = orig - eps
                lo = float(fn(*inputs).data)
                flat[i] = orig
                gflat[i] = (hi - lo) / (2.0 * eps)
            grads.append(g)
    return grads


def check_gradients(fn, inputs, eps=1e-6, rtol=1e-3, atol=1e-5):
    """
    Compare analytic gradients of ``fn(*inputs)`` with central
    differences.

    :returns: largest absolute deviation, ``float``
    :raises: :exc:`GradientCheckError` if any entry is outside tolerance
    """
    for t in inputs:
        t.zero_grad()
    backward(fn(*inputs))
    numeric = numeric_gradient(fn, inputs, eps)
    worst = 0.0
    for k, (t, num) in enumerate(zip(inputs, numeric)):
        if num is None:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        worst = max(worst, float(np.max(np.abs(analytic - num), initial=0.0)))
        if not np.allclose(analytic, num, rtol=rtol, atol=atol):
            raise GradientCheckError('gradient of input %d differs from finite differences '
                                     '(max abs deviation %g)' % (k, np.max(np.abs(analytic - num))))
    return worst
