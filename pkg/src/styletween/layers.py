# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Parameter containers and the layer set used by the phase, manifold and
sampler networks.

Parameters carry an optional group name. Groups select the weight
decay of a parameter and which tensors a fine-tuning run may change.
"""

from collections import OrderedDict

import numpy as np

from . import tensor as T
from .common import CheckpointError, ShapeError
from .tensor import Tensor


class Parameter(Tensor):

    def __init__(self, data, group=None):
        super(Parameter, self).__init__(data, requires_grad=True)
        self.group = group


class Module(object):
    """
    Base class of every network.  Attributes holding a
    :class:`Parameter` or a :class:`Module` are registered in
    assignment order, which fixes parameter naming and checkpoint order.
    """

    def __init__(self):
        object.__setattr__(self, '_params', OrderedDict())
        object.__setattr__(self, '_children', OrderedDict())

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix=''):
        out = []
        for name, p in self._params.items():
            out.append((prefix + name, p))
        for name, child in self._children.items():
            out.extend(child.named_parameters(prefix + name + '.'))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def set_group(self, group):
        """
        Assign every parameter of this module and its children to *group*.
        """
        for p in self.parameters():
            p.group = group
        return self

    def parameter_groups(self):
        """
        :returns: ``{parameter name: group}`` for grouped parameters
        """
        return OrderedDict((n, p.group) for n, p in self.named_parameters() if p.group)

    def requires_grad_(self, flag=True):
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return OrderedDict((n, p.data.copy()) for n, p in self.named_parameters())

    def load_state_dict(self, state, prefix=''):
        """
        Copy arrays into the parameters named ``prefix + name``.

        :raises: :exc:`CheckpointError` on a missing tensor or a shape mismatch
        """
        for name, p in self.named_parameters():
            key = prefix + name
            if key not in state:
                raise CheckpointError('checkpoint has no tensor [%s]' % key)
            value = np.asarray(state[key], dtype=np.float64)
            if value.shape != p.shape:
                raise CheckpointError('tensor [%s] has shape %s, network expects %s'
                                      % (key, value.shape, p.shape))
            p.data[...] = value


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):

    def __init__(self, n_in, n_out, rng, bias=True):
        super(Linear, self).__init__()
        self.n_in = n_in
        self.n_out = n_out
        self.weight = Parameter(_uniform(rng, n_in, (n_in, n_out)))
        if bias:
            self.bias = Parameter(_uniform(rng, n_in, (n_out,)))
        else:
            self.bias = None

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ShapeError('linear: input width differs', x.shape, self.weight.shape)
        if x.ndim == 1:
            x = T.reshape(x, (1, self.n_in))
            y = T.matmul(x, self.weight)
            y = T.reshape(y, (self.n_out,))
        elif x.ndim == 2:
            y = T.matmul(x, self.weight)
        else:
            lead = x.shape[:-1]
            y = T.matmul(T.reshape(x, (-1, self.n_in)), self.weight)
            y = T.reshape(y, lead + (self.n_out,))
        if self.bias is not None:
            y = y + self.bias
        return y


class MLP(Module):
    """
    Feed-forward stack of :class:`Linear` layers with ELU between them.
    """

    def __init__(self, sizes, rng, activation=T.elu, final_activation=None):
        super(MLP, self).__init__()
        self.sizes = list(sizes)
        self.activation = activation
        self.final_activation = final_activation
        self.n_layers = len(sizes) - 1
        for i in range(self.n_layers):
            setattr(self, 'layer%d' % i, Linear(sizes[i], sizes[i + 1], rng))

    def forward(self, x):
        for i in range(self.n_layers):
            x = getattr(self, 'layer%d' % i)(x)
            if i < self.n_layers - 1:
                x = self.activation(x)
            elif self.final_activation is not None:
                x = self.final_activation(x)
        return x


class Conv1d(Module):

    def __init__(self, n_in, n_out, kernel, rng, stride=1, padding=0, pad_mode='zeros'):
        super(Conv1d, self).__init__()
        if pad_mode not in ('zeros', 'replicate'):
            raise ValueError('unknown pad mode [%s]' % pad_mode)
        if padding == 'same':
            padding = (kernel - 1) // 2
        self.stride = stride
        self.padding = padding
        self.pad_mode = pad_mode
        self.weight = Parameter(_uniform(rng, n_in * kernel, (n_out, n_in, kernel)))
        self.bias = Parameter(_uniform(rng, n_in * kernel, (n_out,)))

    def forward(self, x):
        if self.pad_mode == 'replicate' and self.padding:
            x = T.pad_edge(x, self.padding, self.padding, axis=-1)
            return T.conv1d(x, self.weight, self.bias, stride=self.stride, padding=0)
        return T.conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose1d(Module):

    def __init__(self, n_in, n_out, kernel, rng, stride=1, padding=0, output_padding=0):
        super(ConvTranspose1d, self).__init__()
        if padding == 'same':
            padding = (kernel - 1) // 2
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding
        self.weight = Parameter(_uniform(rng, n_out * kernel, (n_in, n_out, kernel)))
        self.bias = Parameter(_uniform(rng, n_out * kernel, (n_out,)))

    def forward(self, x):
        return T.conv_transpose1d(x, self.weight, self.bias, stride=self.stride,
                                  padding=self.padding, output_padding=self.output_padding)


class LSTMCell(Module):

    def __init__(self, n_in, hidden, rng):
        super(LSTMCell, self).__init__()
        self.n_in = n_in
        self.hidden = hidden
        self.w_ih = Parameter(_uniform(rng, hidden, (n_in, 4 * hidden)))
        self.w_hh = Parameter(_uniform(rng, hidden, (hidden, 4 * hidden)))
        self.bias = Parameter(_uniform(rng, hidden, (4 * hidden,)))

    def initial_state(self, batch):
        return Tensor(np.zeros((batch, self.hidden))), Tensor(np.zeros((batch, self.hidden)))

    def forward(self, x, state):
        h, c = state
        return T.lstm_cell(x, h, c, self.w_ih, self.w_hh, self.bias)


class FiLM(Module):
    """
    Feature-wise linear modulation: ``(1 + gamma) * x + beta`` with
    ``(gamma, beta)`` a linear function of the conditioning vector.
    """

    def __init__(self, n_cond, channels, rng):
        super(FiLM, self).__init__()
        self.channels = channels
        self.linear = Linear(n_cond, 2 * channels, rng)

    def forward(self, x, cond):
        gb = self.linear(cond)
        gamma = gb[..., :self.channels]
        beta = gb[..., self.channels:]
        if x.ndim == 3:
            gamma = T.reshape(gamma, gamma.shape + (1,))
            beta = T.reshape(beta, beta.shape + (1,))
        if x.shape[1] != self.channels:
            raise ShapeError('film: channel count differs', x.shape, (self.channels,))
        return (1.0 + gamma) * x + beta


class Attention(Module):
    """
    Single-head dot-product attention of a query vector over the
    temporal slices of a sequence ``(B, C, T)``.
    """

    def __init__(self, n_query, n_key, width, rng):
        super(Attention, self).__init__()
        self.width = width
        self.query = Linear(n_query, width, rng, bias=False)
        self.key = Linear(n_key, width, rng, bias=False)
        self.value = Linear(n_key, width, rng, bias=False)

    def forward(self, query, sequence):
        seq = T.swapaxes(sequence, 1, 2)                    # (B, T, C)
        q = T.reshape(self.query(query), (query.shape[0], self.width, 1))
        keys = self.key(seq)                                # (B, T, W)
        values = self.value(seq)
        scores = T.matmul(keys, q) / np.sqrt(self.width)   # (B, T, 1)
        weights = T.softmax(scores, axis=1)
        pooled = T.matmul(T.swapaxes(values, 1, 2), weights)
        return T.reshape(pooled, (query.shape[0], self.width))

    def weights(self, query, sequence):
        seq = T.swapaxes(sequence, 1, 2)
        q = T.reshape(self.query(query), (query.shape[0], self.width, 1))
        scores = T.matmul(self.key(seq), q) / np.sqrt(self.width)
        return T.softmax(scores, axis=1)


def blend_parameters(coefficients, stacked):
    """
    Per-sample convex combination of *K* stacked parameter sets.

    :param coefficients: ``(B, K)`` blend weights
    :param stacked: ``(K, ...)`` parameter stack
    :returns: ``(B, ...)`` blended parameters
    """
    K = stacked.shape[0]
    if coefficients.shape[-1] != K:
        raise ShapeError('blend: expert count differs', coefficients.shape, stacked.shape)
    flat = T.reshape(stacked, (K, -1))
    blended = T.matmul(coefficients, flat)
    return T.reshape(blended, (coefficients.shape[0],) + stacked.shape[1:])


class ExpertLinear(Module):
    """
    Linear layer whose weights are blended from *K* expert sets per sample.
    """

    def __init__(self, experts, n_in, n_out, rng):
        super(ExpertLinear, self).__init__()
        self.n_in = n_in
        self.n_out = n_out
        self.weight = Parameter(_uniform(rng, n_in, (experts, n_in, n_out)))
        self.bias = Parameter(_uniform(rng, n_in, (experts, n_out)))

    def forward(self, x, coefficients):
        if x.shape[-1] != self.n_in:
            raise ShapeError('expert linear: input width differs', x.shape, self.weight.shape)
        W = blend_parameters(coefficients, self.weight)           # (B, in, out)
        b = blend_parameters(coefficients, self.bias)             # (B, out)
        y = T.matmul(T.reshape(x, (x.shape[0], 1, self.n_in)), W)
        return T.reshape(y, (x.shape[0], self.n_out)) + b
