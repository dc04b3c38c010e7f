# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
AMSGrad with decoupled weight decay.
"""

from dataclasses import dataclass, field

import numpy as np

from .common import ShapeError


@dataclass
class AmsgradState:
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.9
    weight_decay: float = 0.0
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    v_max: list = field(default_factory=list)


def amsgrad_step(params, grads, state):
    """
    Apply one AMSGrad update in place.

    Entries whose gradient is ``None`` are left untouched.  Weight decay
    is decoupled: parameters are scaled by ``1 - lr * weight_decay``
    before the moment update is applied.

    :param params: list of numpy arrays, updated in place
    :param grads: list of arrays (or ``None``) matching *params*
    :param state: :class:`AmsgradState`, moments are created on first use
    :returns: *params*
    :raises: :exc:`ShapeError`
    """
    if len(params) != len(grads):
        raise ShapeError('amsgrad: %d parameters but %d gradients' % (len(params), len(grads)))
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        state.v_max = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ShapeError('amsgrad: state holds %d moments for %d parameters'
                         % (len(state.m), len(params)))
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    step_size = state.lr / bc1
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise ShapeError('amsgrad: gradient shape differs from parameter', p.shape, g.shape)
        if state.weight_decay:
            p *= 1.0 - state.lr * state.weight_decay
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        state.v_max[i] = np.maximum(state.v_max[i], state.v[i])
        denom = np.sqrt(state.v_max[i]) / np.sqrt(bc2) + state.eps
        p -= step_size * state.m[i] / denom
    return params


class Amsgrad(object):
    """
    Optimizer over parameter groups.  Each group is a dictionary with a
    ``params`` list and optional ``weight_decay``.
    """

    def __init__(self, groups, lr=1e-3, betas=(0.5, 0.9), eps=1e-8):
        if isinstance(groups, (list, tuple)) and groups and not isinstance(groups[0], dict):
            groups = [{'params': list(groups)}]
        self.groups = []
        for g in groups:
            state = AmsgradState(lr=lr, beta1=betas[0], beta2=betas[1],
                                 weight_decay=g.get('weight_decay', 0.0), eps=eps)
            self.groups.append((list(g['params']), state))

    @property
    def params(self):
        return [p for params, _ in self.groups for p in params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        for params, state in self.groups:
            amsgrad_step([p.data for p in params], [p.grad for p in params], state)
