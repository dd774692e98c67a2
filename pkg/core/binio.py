"""Shape-prefixed little-endian float64 tensors and checkpoint bundles.

Tensor layout, repeated for each tensor in a file::

    uint32   ndim
    uint64   dims[ndim]
    float64  data[prod(dims)]      C order

All integers and floats are little-endian. A checkpoint is a pair of files:
``<stem>.json`` (manifest with the config and the ordered tensor names) and
``<stem>.bin`` (the tensors in manifest order).
"""
import json
import logging
import struct
from pathlib import Path

import numpy as np

from .exceptions import RecordFormatError

logger = logging.getLogger(__name__)

_NDIM = struct.Struct('<I')
_F64 = np.dtype('<f8')
_U64 = np.dtype('<u8')


def write_tensor(stream, array):
    array = np.ascontiguousarray(array, dtype=_F64)
    stream.write(_NDIM.pack(array.ndim))
    stream.write(np.asarray(array.shape, dtype=_U64).tobytes())
    stream.write(array.tobytes())


def read_tensor(stream):
    head = stream.read(_NDIM.size)
    if len(head) != _NDIM.size:
        raise RecordFormatError('truncated tensor header')
    (ndim,) = _NDIM.unpack(head)
    shape = tuple(int(d) for d in np.frombuffer(stream.read(8 * ndim), dtype=_U64))
    if len(shape) != ndim:
        raise RecordFormatError('truncated tensor shape')
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    raw = stream.read(8 * count)
    if len(raw) != 8 * count:
        raise RecordFormatError('truncated tensor data')
    return np.frombuffer(raw, dtype=_F64).astype(np.float64).reshape(shape)


def save_tensor(path, array):
    with open(path, 'wb') as stream:
        write_tensor(stream, array)


def load_tensor(path):
    with open(path, 'rb') as stream:
        return read_tensor(stream)


def save_checkpoint(stem, tensors, config):
    """Write ``tensors`` (an ordered name -> array mapping) and ``config``."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    names = list(tensors)
    manifest = {'config': config, 'tensors': names}
    with open(stem.with_suffix('.bin'), 'wb') as stream:
        for name in names:
            write_tensor(stream, tensors[name])
    stem.with_suffix('.json').write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding='utf-8'
    )
    logger.info('checkpoint %s: %d tensors', stem, len(names))


def load_checkpoint(stem):
    """Return ``(tensors, config)`` written by :func:`save_checkpoint`."""
    stem = Path(stem)
    manifest = json.loads(stem.with_suffix('.json').read_text(encoding='utf-8'))
    tensors = {}
    with open(stem.with_suffix('.bin'), 'rb') as stream:
        for name in manifest['tensors']:
            tensors[name] = read_tensor(stream)
        if stream.read(1):
            raise RecordFormatError(f'{stem}.bin has trailing bytes')
    return tensors, manifest['config']
