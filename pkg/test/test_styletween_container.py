# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

import os
import struct
import tempfile
from collections import OrderedDict

import numpy as np
import pytest


def test_dumps_layout():
    from styletween.container import dumps
    data = dumps(OrderedDict([('a', np.array([1.0, 2.0]))]))
    assert b'RSMT' == data[:4]
    assert (1, 1) == struct.unpack_from('<II', data, 4)
    assert (1,) == struct.unpack_from('<H', data, 12)
    assert b'a' == data[14:15]
    assert (1,) == struct.unpack_from('<B', data, 15)
    assert (2,) == struct.unpack_from('<I', data, 16)
    assert (1.0, 2.0) == struct.unpack_from('<2f', data, 20)
    assert 28 == len(data)


def test_loads_roundtrip_order_and_dtype():
    from styletween.container import dumps, loads
    tensors = OrderedDict([('z', np.arange(6.0).reshape(2, 3)), ('a', np.float64(3.5))])
    out = loads(dumps(tensors))
    assert ['z', 'a'] == list(out)
    assert np.float32 == out['z'].dtype
    assert np.array_equal(tensors['z'], out['z'])
    assert () == out['a'].shape


def test_loads_errors():
    from styletween.common import CheckpointError
    from styletween.container import dumps, loads
    data = dumps({'x': np.ones(10)})
    with pytest.raises(CheckpointError):
        loads(b'NOPE' + data[4:])
    with pytest.raises(CheckpointError):
        loads(data[:-4])
    with pytest.raises(CheckpointError):
        loads(data[:10])
    bad_version = data[:4] + struct.pack('<I', 99) + data[8:]
    with pytest.raises(CheckpointError):
        loads(bad_version)


def test_metadata_and_text():
    from styletween.container import decode_text, encode_text, read_container, write_container
    assert u'walk é' == decode_text(encode_text(u'walk é'))
    path = os.path.join(tempfile.mkdtemp(), 'sub', 'x.bin')
    write_container(path, {'w': np.ones(3)}, {'stage': 'phase', 'styles': ['a', 'b']})
    tensors, meta = read_container(path)
    assert ['w'] == list(tensors)
    assert {'stage': 'phase', 'styles': ['a', 'b']} == meta


def test_read_missing_names_stage():
    from styletween.common import CheckpointError
    from styletween.container import read_container
    with pytest.raises(CheckpointError) as e:
        read_container('/does/not/exist.ckpt', stage='train-manifold')
    assert 'train-manifold' == e.value.stage
    assert 'train-manifold' in str(e.value)


def test_save_module_roundtrip():
    from styletween.container import load_module_state, save_module
    from styletween.layers import MLP
    rng = np.random.default_rng(0)
    mlp = MLP([3, 4, 2], rng)
    mlp.layer1.set_group('head')
    path = os.path.join(tempfile.mkdtemp(), 'm.ckpt')
    save_module(path, mlp, {'stage': 'test'}, extra={'norm/mean': np.zeros(3)})
    state, meta = load_module_state(path, stage='test')
    assert 'test' == meta['stage']
    assert {'layer1.weight': 'head', 'layer1.bias': 'head'} == meta['groups']
    assert np.float64 == state['layer0.weight'].dtype
    other = MLP([3, 4, 2], np.random.default_rng(1))
    other.load_state_dict(state)
    # float32 storage
    assert np.allclose(mlp.layer0.weight.data, other.layer0.weight.data, atol=1e-7)
    assert np.array_equal(mlp.layer0.weight.data.astype(np.float32),
                          other.layer0.weight.data.astype(np.float32))
