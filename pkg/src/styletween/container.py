# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Named-tensor container shared by checkpoints and the clip cache.

Layout (little-endian)::

    magic   4 bytes  b'RSMT'
    version u32
    count   u32
    count x (name_len u16, name utf-8, rank u8, dims u32 x rank, data f32 x prod(dims))

Text and metadata are stored as rank-1 tensors of byte values.
"""

import os
import struct
from collections import OrderedDict

import numpy as np
import yaml

from .common import CONTAINER_MAGIC, CONTAINER_VERSION, CheckpointError

METADATA_TENSOR = '__metadata__'


def encode_text(text):
    """
    :returns: byte values of UTF-8 *text* as a float array
    """
    return np.frombuffer(text.encode('utf-8'), dtype=np.uint8).astype(np.float32)


def decode_text(values):
    return np.asarray(values).astype(np.uint8).tobytes().decode('utf-8')


def encode_metadata(metadata):
    return encode_text(yaml.safe_dump(metadata, sort_keys=True, default_flow_style=False))


def decode_metadata(values):
    return yaml.safe_load(decode_text(values)) or {}


def dumps(tensors):
    """
    Serialize an ordered mapping of name to array.

    :rtype: bytes
    """
    chunks = [CONTAINER_MAGIC, struct.pack('<II', CONTAINER_VERSION, len(tensors))]
    for name, value in tensors.items():
        value = np.asarray(value, dtype='<f4')
        raw = name.encode('utf-8')
        if len(raw) > 0xffff:
            raise CheckpointError('tensor name too long [%s...]' % name[:32])
        chunks.append(struct.pack('<H', len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack('<B', value.ndim))
        chunks.append(struct.pack('<%dI' % value.ndim, *value.shape))
        chunks.append(np.ascontiguousarray(value).tobytes())
    return b''.join(chunks)


def loads(data, path=None):
    """
    :returns: ``OrderedDict`` of name to float32 arrays
    :raises: :exc:`CheckpointError` on bad magic, version or truncation
    """
    if data[:4] != CONTAINER_MAGIC:
        raise CheckpointError('not a styletween container (bad magic)', path=path)
    try:
        version, count = struct.unpack_from('<II', data, 4)
        if version != CONTAINER_VERSION:
            raise CheckpointError('unsupported container version %d' % version, path=path)
        offset = 12
        tensors = OrderedDict()
        for _ in range(count):
            (n,) = struct.unpack_from('<H', data, offset)
            offset += 2
            name = data[offset:offset + n].decode('utf-8')
            offset += n
            (rank,) = struct.unpack_from('<B', data, offset)
            offset += 1
            dims = struct.unpack_from('<%dI' % rank, data, offset)
            offset += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if offset + 4 * size > len(data):
                raise CheckpointError('container truncated in tensor [%s]' % name, path=path)
            values = np.frombuffer(data, dtype='<f4', count=size, offset=offset)
            tensors[name] = values.reshape(dims).astype(np.float32)
            offset += 4 * size
    except struct.error:
        raise CheckpointError('container truncated', path=path)
    return tensors


def write_container(path, tensors, metadata=None):
    """
    Write *tensors* (and optional *metadata* mapping) to *path*.
    """
    tensors = OrderedDict(tensors)
    if metadata is not None:
        tensors[METADATA_TENSOR] = encode_metadata(metadata)
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        os.makedirs(parent)
    with open(path, 'wb') as f:
        f.write(dumps(tensors))


def read_container(path, stage=None):
    """
    :returns: ``(tensors, metadata)``
    :raises: :exc:`CheckpointError` if *path* is missing or invalid
    """
    if not os.path.isfile(path):
        raise CheckpointError('file does not exist', path=path, stage=stage)
    with open(path, 'rb') as f:
        data = f.read()
    try:
        tensors = loads(data, path=path)
    except CheckpointError as e:
        raise CheckpointError(e.args[0], path=path, stage=stage)
    metadata = {}
    if METADATA_TENSOR in tensors:
        metadata = decode_metadata(tensors.pop(METADATA_TENSOR))
    return tensors, metadata


def save_module(path, module, metadata, extra=None):
    """
    Checkpoint a network.  Parameter groups are recorded in the metadata
    under ``groups`` so that fine-tuning can select them on load.

    :param extra: additional named arrays (normalization statistics)
    """
    metadata = dict(metadata)
    metadata['groups'] = dict(module.parameter_groups())
    tensors = module.state_dict()
    for name, value in (extra or {}).items():
        tensors[name] = value
    write_container(path, tensors, metadata)


def load_module_state(path, stage):
    """
    :returns: ``(state, metadata)`` with arrays upcast to float64
    """
    tensors, metadata = read_container(path, stage=stage)
    state = OrderedDict((k, v.astype(np.float64)) for k, v in tensors.items())
    return state, metadata
